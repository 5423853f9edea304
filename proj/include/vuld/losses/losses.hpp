#pragma once

#include <stdexcept>
#include <vector>

#include "vuld/core/box.hpp"
#include "vuld/detector/detector.hpp"

namespace vuld {

/// Non-finite loss during a training step.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CenterCell {
    std::size_t box_index = 0;  // index into the box list given to make_heatmap
    Index3 cell{0, 0, 0};       // (z, y, x)
};

template <typename T>
struct HeatmapTarget {
    Tensor<T> Y;  // [1, 1, D', H', W'] in [-1, 1]
    std::vector<CenterCell> centers;
    std::int64_t m = 0;
};

/// Grid cell holding a voxel-space point, clamped to the grid.
Index3 center_cell(const Box3D& box, Index3 grid_dims, Index3 strides);

/// Anisotropic Gaussians (sigma = radius / 3, truncated at 3 sigma) with
/// radius = half the box extent per axis. Positives peak at +1 and merge
/// by max; hard negatives peak at -1, merge by min and never override a
/// positive value.
template <typename T>
HeatmapTarget<T> make_heatmap(const std::vector<GroundTruthBox>& boxes, Index3 grid_dims, Index3 strides);

struct FocalParams {
    double alpha = 2.0;
    double beta = 4.0;
    double eps = 1e-4;
};

/// Heatmap focal loss over probabilities `yhat` ([1, 1, D', H', W']),
/// normalised by max(m, 1).
template <typename T>
Tensor<T> focal_center_loss(const Tensor<T>& yhat, const HeatmapTarget<T>& target, const FocalParams& params = {});

/// L1 distance between the box extremes and the per-axis min / max of
/// both point sets ([n, 3] voxel coordinates, (x, y, z) columns).
template <typename T>
Tensor<T> point_box_loss(const Tensor<T>& points, const Tensor<T>& refined, const Box3D& gt);

enum class TripletNorm { Lesions, LesionsPoints };

TripletNorm parse_triplet_norm(const std::string& name);

/// sum_k sum_j max(0, |a_p - a_k| - |a_p - a_n_j| + 1) / m; with
/// LesionsPoints the sum is additionally divided by 8 n. m == 0 gives 0.
template <typename T>
Tensor<T> surface_triplet_loss(const Tensor<T>& anchor, const Tensor<T>& negatives, const Tensor<T>& points,
                               std::int64_t m, TripletNorm norm = TripletNorm::Lesions);

/// L_ctr + aux_weight (L_pts + L_tri); throws TrainingError when any term
/// is not finite.
template <typename T>
Tensor<T> joint_loss(const Tensor<T>& l_ctr, const Tensor<T>& l_pts, const Tensor<T>& l_tri, T aux_weight = T(0.1));

/// L1 loss in voxels between the direct head's face distances (grid units,
/// [6] = lo x, y, z then hi x, y, z, measured from the cell center) and
/// the box.
template <typename T>
Tensor<T> direct_box_loss(const Tensor<T>& distances, Index3 cell, Index3 strides, const Box3D& gt);

/// Maps [n, 3] grid-space points (x, y, z) to voxel coordinates.
template <typename T>
Tensor<T> grid_points_to_voxels(const Tensor<T>& points, Index3 strides);

GridBox box_to_grid(const Box3D& box, Index3 strides);

struct LossConfig {
    FocalParams focal;
    double aux_weight = 0.1;
    TripletNorm triplet_norm = TripletNorm::Lesions;
};

template <typename T>
struct LossTerms {
    Tensor<T> ctr, pts, tri, total;
};

/// Full training objective for one volume. SPR / direct terms are read at
/// the ground-truth center cells.
template <typename T>
LossTerms<T> detector_loss(const DetectorOutputs<T>& outputs, const std::vector<GroundTruthBox>& boxes,
                           Index3 strides, const LossConfig& config = {});

}  // namespace vuld
