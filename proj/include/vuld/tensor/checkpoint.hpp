#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vuld/tensor/tensor.hpp"

namespace vuld {

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// "P3DW" v1: magic, u32 version, u32 entry count; per entry u16 name
/// length, UTF-8 name, u8 rank, u32 dims[rank], float32 LE values.
std::string encode_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

/// Stores text as one float per byte under `name`.
CheckpointEntry text_entry(const std::string& name, const std::string& text);
std::string entry_text(const CheckpointEntry& entry);

}  // namespace vuld
