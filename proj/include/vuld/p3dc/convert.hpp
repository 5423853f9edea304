#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vuld/tensor/ops.hpp"

namespace vuld::p3dc {

enum class Variant { Slicewise, I3D, ST3D, ACS3D };
enum class Fusion { None, ChannelConcat };

std::string to_string(Variant v);
/// Accepts the names printed by to_string, case-insensitively.
Variant parse_variant(const std::string& name);

/// In-plane 2D convolution weights, the unit every conversion starts from.
template <typename T>
struct Conv2DWeights {
    Tensor<T> kernel;  // [c_o, c_i, N, N]
    Tensor<T> bias;    // [c_o], or undefined
    std::int64_t stride = 1;

    std::int64_t out_channels() const { return kernel.dim(0); }
    std::int64_t in_channels() const { return kernel.dim(1); }
    std::int64_t size() const { return kernel.dim(2); }
    std::int64_t param_count() const { return kernel.numel() + (bias.defined() ? bias.numel() : 0); }
};

template <typename T>
struct KernelBranch {
    Tensor<T> kernel;  // [c, c_i, Kd, Kh, Kw]
    Tensor<T> bias;    // [c], or undefined
    Index3 stride{1, 1, 1};
    Index3 padding{0, 0, 0};
};

template <typename T>
struct P3DCLayer {
    Variant variant = Variant::Slicewise;
    std::vector<KernelBranch<T>> kernels;
    Fusion fusion = Fusion::None;

    std::int64_t in_channels() const { return kernels.front().kernel.dim(1); }
    /// Channels after fusion (2 c_o for ST3D, c_o otherwise).
    std::int64_t out_channels() const;
    std::int64_t param_count() const;
    Tensor<T> forward(const Tensor<T>& input) const;
};

struct AcsSplit {
    std::int64_t axial = 0, coronal = 0, sagittal = 0;
};

/// c_oc = max(1, floor(c_o r_c / sum)), c_os likewise, c_oa takes the rest.
AcsSplit acs_split(std::int64_t out_channels, std::array<int, 3> ratio);

template <typename T>
P3DCLayer<T> slicewise_lift(const Conv2DWeights<T>& w);

/// Replicates the kernel over `depth` slices, each scaled by 1 / depth.
template <typename T>
P3DCLayer<T> i3d_inflate(const Conv2DWeights<T>& w, std::int64_t depth = 3);

/// Spatial (1, N, N) branch keeps the 2D weights; the temporal (N, 1, 1)
/// branch starts as 0.1 x centred delta plus U(-0.01, 0.01) noise.
template <typename T>
P3DCLayer<T> st3d_convert(const Conv2DWeights<T>& w, std::uint64_t seed);

/// Partitions output channels into axial / coronal / sagittal groups.
template <typename T>
P3DCLayer<T> acs3d_convert(const Conv2DWeights<T>& w, std::array<int, 3> ratio = {8, 1, 1});

/// Widens the input channels by `phases`, scaling by 1 / phases so a
/// phase-replicated input reproduces the original activation.
template <typename T>
Conv2DWeights<T> inflate_input_channels(const Conv2DWeights<T>& w, std::int64_t phases);

/// Inverse of slicewise_lift / acs3d_convert (both parameter-preserving).
template <typename T>
Conv2DWeights<T> collapse_to_2d(const P3DCLayer<T>& layer);

struct ConvertOptions {
    std::int64_t i3d_depth = 3;
    std::array<int, 3> acs_ratio{8, 1, 1};
    std::uint64_t seed = 0;
};

template <typename T>
P3DCLayer<T> convert(const Conv2DWeights<T>& w, Variant variant, const ConvertOptions& options = {});

struct Cost {
    std::int64_t params = 0;
    std::int64_t flops = 0;
};

/// Exact weight+bias count and multiply-add FLOPs (2 per MAC) for an
/// input of shape [C, D, H, W] (a leading batch dimension is accepted).
template <typename T>
Cost count_params_flops(const P3DCLayer<T>& layer, const Shape& input_shape);

}  // namespace vuld::p3dc
