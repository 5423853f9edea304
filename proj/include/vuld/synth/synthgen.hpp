#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "vuld/config/config.hpp"
#include "vuld/core/box.hpp"
#include "vuld/tensor/tensor.hpp"

namespace vuld {

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct SynthConfig {
    std::array<std::int64_t, 3> dims{64, 64, 64};  // D, H, W
    std::array<double, 3> spacing{2.5, 1.5, 1.5};   // z, y, x in mm
    std::int64_t channels = 1;
    std::vector<double> phase_gain{1.0, 0.7, 1.3};
    std::array<std::int64_t, 2> lesions{1, 3};
    std::array<std::int64_t, 2> confusers{0, 2};
    Range radius_axial{2.0, 5.0};
    Range radius_inplane{3.0, 10.0};
    double lesion_intensity = 1.0;
    double confuser_intensity = 0.5;
    double background_intensity = 0.0;
    double background_amplitude = 0.2;
    double noise = 0.25;
    std::array<double, 3> split{384, 92, 98};
    std::uint64_t seed = 1;

    static SynthConfig from_config(const RunConfig& config);
    /// Throws ConfigError when an invariant is violated.
    void validate() const;
};

/// Multi-channel volume [C, D, H, W] with voxel spacing (z, y, x) in mm.
struct Volume {
    Tensor<float> data;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
};

struct Ellipsoid {
    std::array<double, 3> center{};  // x, y, z voxels
    std::array<double, 3> radius{};  // x, y, z voxels
    bool confuser = false;

    Box3D box() const;
};

struct SyntheticCase {
    std::string id;
    Volume volume;
    std::vector<Ellipsoid> blobs;
    std::vector<GroundTruthBox> boxes;  // lesions first, then confusers
};

std::string volume_id(std::int64_t index);

/// Pure function of (cfg, index).
SyntheticCase generate_volume(const SynthConfig& cfg, std::int64_t index);

/// "P3DV" v1: magic, u32 version, u8 channels, u32 D, H, W, 3 x f32
/// spacing (z, y, x), then C*D*H*W float32 little-endian voxels.
std::string encode_volume(const Volume& volume);
Volume decode_volume(const std::string& bytes, const std::string& context = "P3DV");
void write_volume(const std::filesystem::path& path, const Volume& volume);
Volume read_volume(const std::filesystem::path& path);

enum class Split { Train, Val, Test };
std::string to_string(Split split);
Split parse_split(const std::string& name);

struct ManifestEntry {
    std::string id;
    Split split = Split::Train;
    std::string file;  // relative to the dataset directory
    std::vector<GroundTruthBox> boxes;
};

struct Dataset {
    std::filesystem::path dir;
    std::vector<ManifestEntry> entries;

    std::vector<const ManifestEntry*> split(Split s) const;
    Volume load(const ManifestEntry& entry) const;
};

/// Split sizes for `count` volumes from the ratio; test takes the rest.
std::array<std::int64_t, 3> split_counts(const std::array<double, 3>& ratio, std::int64_t count);

/// Writes volumes/<id>.p3dv, annotations.txt and manifest.txt.
Dataset write_dataset(const SynthConfig& cfg, std::int64_t count, const std::filesystem::path& out_dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// One line per box: id, pos|hneg, x0 y0 z0 x1 y1 z1.
std::string format_annotations(const std::vector<ManifestEntry>& entries);

}  // namespace vuld
