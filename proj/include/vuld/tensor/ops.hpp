#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <vector>

#include "vuld/tensor/tensor.hpp"

namespace vuld {

using Index3 = std::array<std::int64_t, 3>;  // (depth, height, width)

// ---- elementwise -------------------------------------------------------

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
template <typename T> Tensor<T> neg(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
/// Natural log; throws DomainError on any value <= 0.
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> pow(const Tensor<T>& a, T exponent);
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
/// Gradient is zero where the input lies outside [lo, hi].
template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);

// ---- shape and reductions ----------------------------------------------

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// Sum of all elements as a rank-0 tensor; ascending-index accumulation.
template <typename T> Tensor<T> sum(const Tensor<T>& a);

template <typename T>
struct MinMax {
    Tensor<T> min;
    Tensor<T> max;
    std::int64_t argmin = 0;
    std::int64_t argmax = 0;
};

/// Extremes of a rank-1 tensor. Ties resolve to the lowest index, which
/// receives the whole subgradient.
template <typename T> MinMax<T> reduce_min_max(const Tensor<T>& values);

/// Column j of a [n, m] matrix.
template <typename T> Tensor<T> select_column(const Tensor<T>& a, std::int64_t column);
/// [n, 3] -> [n, 3] with out[:, c] = a[:, c] * scales[c] + shifts[c].
template <typename T>
Tensor<T> affine_columns(const Tensor<T>& a, const std::array<T, 3>& scales,
                         const std::array<T, 3>& shifts);
/// [k, c] - [c] broadcast over rows.
template <typename T> Tensor<T> sub_row(const Tensor<T>& rows, const Tensor<T>& row);
/// Euclidean norm of each row of [k, c]; subgradient 0 at the origin.
template <typename T> Tensor<T> row_norm(const Tensor<T>& rows);
/// [n], [m] -> [n, m] with out[i, j] = a[i] - b[j].
template <typename T> Tensor<T> outer_sub(const Tensor<T>& a, const Tensor<T>& b);

// ---- volumetric --------------------------------------------------------

/// Cross-correlation over [N, C, D, H, W] with a [Co, Ci, Kd, Kh, Kw] kernel.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel,
                 std::type_identity_t<const Tensor<T>*> bias, Index3 stride, Index3 padding);
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Index3 stride, Index3 padding) {
    return conv3d(input, kernel, bias.defined() ? &bias : nullptr, stride, padding);
}

/// Concatenation along the channel axis of [N, C, D, H, W] tensors.
template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);
/// Non-overlapping average pooling, window == stride, no padding.
template <typename T> Tensor<T> avgpool3d(const Tensor<T>& input, Index3 window);
/// Nearest-neighbour upsampling by integer factors.
template <typename T> Tensor<T> upsample_nearest(const Tensor<T>& input, Index3 factors);
/// 3x3x3 max pooling, stride 1, padding 1; not differentiable.
template <typename T> Tensor<T> maxpool3d(const Tensor<T>& input);

/// Channel vector at one cell of a [1, C, D, H, W] map.
template <typename T>
Tensor<T> gather_cell(const Tensor<T>& map, std::int64_t z, std::int64_t y, std::int64_t x);

/// Trilinear interpolation of a [C, D, H, W] (or [1, C, D, H, W]) map at
/// [K, 3] points given as (x, y, z) in grid coordinates. Points outside
/// the grid clamp to the border. Differentiable w.r.t. the map and the
/// point coordinates.
template <typename T> Tensor<T> trilinear_sample(const Tensor<T>& feature, const Tensor<T>& points);

}  // namespace vuld
