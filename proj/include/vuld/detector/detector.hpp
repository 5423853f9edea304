#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vuld/config/config.hpp"
#include "vuld/p3dc/convert.hpp"
#include "vuld/tensor/checkpoint.hpp"
#include "vuld/tensor/ops.hpp"

namespace vuld {

enum class HeadMode { SPR, Direct };

std::string to_string(HeadMode mode);
HeadMode parse_head_mode(const std::string& name);

struct BackboneConfig {
    std::int64_t in_channels = 1;
    std::int64_t stem_channels = 64;
    std::int64_t growth_rate = 32;
    std::array<std::int64_t, 3> block_layers{6, 12, 24};
    std::int64_t bottleneck = 4;  // 1x1 bottleneck = bottleneck * growth channels; 0 disables it
    double compression = 0.5;
    p3dc::Variant p3dc_variant = p3dc::Variant::ACS3D;
    std::array<int, 3> acs_ratio{8, 1, 1};
    std::int64_t i3d_depth = 3;
    std::int64_t fpn_channels = 512;
    std::int64_t head_channels = 256;
    std::int64_t n_points = 16;
    std::int64_t embed_channels = 128;
    std::int64_t stride_axial = 2;
    std::int64_t stride_inplane = 4;
    HeadMode head = HeadMode::SPR;
    std::uint64_t seed = 0;

    /// Desk-scale network used for the synthetic experiments.
    static BackboneConfig toy();
    static BackboneConfig from_config(const RunConfig& config);
    /// Writes every `model.*` key into `config`.
    void store(RunConfig& config) const;

    /// Throws ConfigError on an inconsistent configuration.
    void validate() const;
    /// Stride (z, y, x) of the output grid relative to the input volume.
    Index3 output_stride() const { return {stride_axial, stride_inplane, stride_inplane}; }
    /// Input dims must be divisible by this (z, y, x).
    Index3 size_multiple() const { return {stride_axial * 2, stride_inplane * 4, stride_inplane * 4}; }
};

template <typename T>
struct DetectorOutputs {
    Tensor<T> heatmap;        // [1, 1, D', H', W'] logits
    Tensor<T> point_offsets;  // [1, 3n, D', H', W'], channel 3k + (x, y, z), grid units
    Tensor<T> refine_field;   // [1, 3, D', H', W'], (x, y, z) grid units
    Tensor<T> embeddings;     // [1, E, D', H', W']
    Tensor<T> direct_box;     // [1, 6, D', H', W'] face distances (direct head only)
};

template <typename T>
struct PointSet {
    Tensor<T> points;              // [n, 3] (x, y, z) grid coordinates
    Tensor<T> refined;             // [n, 3]
    Tensor<T> point_embeddings;    // [n, E] sampled at the refined points
    Tensor<T> center_embedding;    // [E]
    Tensor<T> corner_embeddings;   // [8, E]
};

/// Box in grid coordinates, (x, y, z) per corner.
struct GridBox {
    std::array<double, 3> lo{0, 0, 0};
    std::array<double, 3> hi{0, 0, 0};
};

template <typename T>
class Detector {
   public:
    explicit Detector(BackboneConfig config);

    const BackboneConfig& config() const { return config_; }

    /// Input [1, C, D, H, W] with dims divisible by config().size_multiple().
    DetectorOutputs<T> forward(const Tensor<T>& volume) const;
    /// Dense-block outputs at strides (a, s), (a, 2s), (2a, 4s).
    std::vector<Tensor<T>> backbone(const Tensor<T>& volume) const;
    /// Projects every block output to fpn_channels, upsamples to the
    /// finest grid and sums.
    Tensor<T> fpn_fuse(const std::vector<Tensor<T>>& features) const;
    Tensor<T> center_head(const Tensor<T>& deep) const;
    void spr_head(const Tensor<T>& deep, DetectorOutputs<T>& out) const;
    Tensor<T> direct_head(const Tensor<T>& deep) const;

    /// Every trainable tensor in a fixed order.
    std::vector<Tensor<T>> parameters() const;
    std::vector<std::string> parameter_names() const;
    std::int64_t parameter_count() const;
    /// Parameter count of the layers inside the dense blocks.
    std::int64_t block_parameter_count(int block) const;

    /// Analytic forward FLOPs of every convolution for a (D, H, W) input.
    std::int64_t flops(Index3 input) const;

    /// Checkpoint entries: every parameter plus the `__config__` text.
    std::vector<CheckpointEntry> to_checkpoint() const;
    static Detector from_checkpoint(const std::vector<CheckpointEntry>& entries);
    /// Copies values from `entries`; throws CheckpointError naming the
    /// offending tensor on a missing name or a shape mismatch.
    void load_parameters(const std::vector<CheckpointEntry>& entries);

    /// Rewrites block 3 to `variant`. Only parameter-preserving pairs
    /// (slicewise <-> acs3d) are accepted.
    void convert_block3(p3dc::Variant variant);

    struct Conv {
        std::string name;
        p3dc::P3DCLayer<T> layer;
    };
    struct DenseLayer {
        std::optional<Conv> bottleneck;
        Conv conv;
        std::optional<Conv> projection;  // st3d only
    };

   private:
    Conv make_conv(const std::string& name, std::int64_t in, std::int64_t out, std::int64_t size, p3dc::Variant variant,
                   double init_std);
    Tensor<T> apply(const Conv& c, const Tensor<T>& x, bool activate) const;
    std::vector<const Conv*> convs() const;

    BackboneConfig config_;
    std::uint64_t rng_state_ = 0;
    Conv stem_;
    std::array<std::vector<DenseLayer>, 3> blocks_;
    std::array<Conv, 2> transitions_;
    std::array<Conv, 3> laterals_;
    Conv center_trunk_, center_out_;
    Conv spr_trunk_, point_out_, refine_out_, embed_out_;
    Conv direct_trunk_, direct_out_;
};

/// Reads the point set at `center` (z, y, x cell). P = center + offsets,
/// P_r = P + refine_field(P). Embeddings are sampled at P_r, the center,
/// and the 8 corners of `corner_box` (grid units); without a box the
/// corners of the current refined-point box are used.
template <typename T>
PointSet<T> gather_point_set(const DetectorOutputs<T>& outputs, Index3 center,
                             const std::optional<GridBox>& corner_box = std::nullopt, bool with_embeddings = true);

/// Grid <-> voxel mapping along one axis: v = g * s + (s - 1) / 2.
inline double grid_to_voxel(double g, std::int64_t stride) { return g * stride + 0.5 * (stride - 1); }
inline double voxel_to_grid(double v, std::int64_t stride) { return (v - 0.5 * (stride - 1)) / stride; }

extern template class Detector<float>;
extern template class Detector<double>;

}  // namespace vuld
