#include "vuld/tensor/checkpoint.hpp"

#include <limits>

#include "vuld/io/binary.hpp"

namespace vuld {

namespace {
constexpr char kMagic[4] = {'P', '3', 'D', 'W'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::string encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
    io::ByteWriter w;
    w.bytes(kMagic, 4);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw CheckpointError("checkpoint entry name too long: " + e.name.substr(0, 32) + "...");
        }
        if (e.shape.size() > std::numeric_limits<std::uint8_t>::max()) {
            throw CheckpointError("checkpoint entry rank too large: " + e.name);
        }
        if (shape_numel(e.shape) != static_cast<std::int64_t>(e.values.size())) {
            throw CheckpointError("checkpoint entry " + e.name + ": shape/value count mismatch");
        }
        w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
        w.bytes(e.name.data(), e.name.size());
        w.put<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
        for (auto d : e.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        for (float v : e.values) w.put<float>(v);
    }
    return w.take();
}

std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes) {
    io::ByteReader r(bytes, "P3DW");
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != std::string(kMagic, 4)) throw CheckpointError("not a P3DW checkpoint (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw CheckpointError("unsupported P3DW version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>();
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    try {
        for (std::uint32_t i = 0; i < count; ++i) {
            CheckpointEntry e;
            e.name.resize(r.get<std::uint16_t>());
            r.bytes(e.name.data(), e.name.size());
            const auto rank = r.get<std::uint8_t>();
            for (int d = 0; d < rank; ++d) e.shape.push_back(r.get<std::uint32_t>());
            e.values.resize(static_cast<std::size_t>(shape_numel(e.shape)));
            for (auto& v : e.values) v = r.get<float>();
            entries.push_back(std::move(e));
        }
    } catch (const std::runtime_error& ex) {
        throw CheckpointError(ex.what());
    }
    if (!r.done()) throw CheckpointError("P3DW: trailing bytes after last entry");
    return entries;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries) {
    io::write_file(path, encode_checkpoint(entries));
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path));
}

CheckpointEntry text_entry(const std::string& name, const std::string& text) {
    CheckpointEntry e{name, {static_cast<std::int64_t>(text.size())}, {}};
    e.values.reserve(text.size());
    for (unsigned char c : text) e.values.push_back(static_cast<float>(c));
    return e;
}

std::string entry_text(const CheckpointEntry& entry) {
    std::string s;
    s.reserve(entry.values.size());
    for (float v : entry.values) {
        if (v < 0.0f || v > 255.0f || v != static_cast<float>(static_cast<int>(v))) {
            throw CheckpointError("entry " + entry.name + " does not hold text");
        }
        s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
    return s;
}

}  // namespace vuld
