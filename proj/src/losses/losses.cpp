#include "vuld/losses/losses.hpp"

#include <algorithm>
#include <cmath>

namespace vuld {

Index3 center_cell(const Box3D& box, Index3 grid_dims, Index3 strides) {
    Index3 cell{};
    for (int a = 0; a < 3; ++a) {
        const int axis = 2 - a;  // cell is (z, y, x), box axes are (x, y, z)
        const double g = voxel_to_grid(box.center(axis), strides[a]);
        cell[a] = std::clamp<std::int64_t>(std::llround(g), 0, grid_dims[a] - 1);
    }
    return cell;
}

GridBox box_to_grid(const Box3D& box, Index3 strides) {
    GridBox g;
    for (int axis = 0; axis < 3; ++axis) {
        const auto s = strides[2 - axis];
        g.lo[axis] = voxel_to_grid(box.lo[axis], s);
        g.hi[axis] = voxel_to_grid(box.hi[axis], s);
    }
    return g;
}

template <typename T>
HeatmapTarget<T> make_heatmap(const std::vector<GroundTruthBox>& boxes, Index3 grid_dims, Index3 strides) {
    const auto [D, H, W] = grid_dims;
    const auto cells = static_cast<std::size_t>(D * H * W);
    std::vector<double> pos(cells, 0.0), negv(cells, 0.0);
    HeatmapTarget<T> target;

    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i].box;
        if (!b.valid()) throw ArgumentError("make_heatmap: degenerate box " + b.str());
        const auto c = center_cell(b, grid_dims, strides);
        std::array<double, 3> sigma{};  // (z, y, x), grid units
        for (int a = 0; a < 3; ++a) sigma[a] = 0.5 * b.extent(2 - a) / static_cast<double>(strides[a]) / 3.0;
        std::array<std::int64_t, 3> reach{};
        for (int a = 0; a < 3; ++a) reach[a] = static_cast<std::int64_t>(std::floor(3.0 * sigma[a]));
        for (std::int64_t z = std::max<std::int64_t>(0, c[0] - reach[0]); z <= std::min(D - 1, c[0] + reach[0]); ++z)
            for (std::int64_t y = std::max<std::int64_t>(0, c[1] - reach[1]); y <= std::min(H - 1, c[1] + reach[1]);
                 ++y)
                for (std::int64_t x = std::max<std::int64_t>(0, c[2] - reach[2]);
                     x <= std::min(W - 1, c[2] + reach[2]); ++x) {
                    const double dz = static_cast<double>(z - c[0]) / sigma[0];
                    const double dy = static_cast<double>(y - c[1]) / sigma[1];
                    const double dx = static_cast<double>(x - c[2]) / sigma[2];
                    const double q = dz * dz + dy * dy + dx * dx;
                    if (q > 9.0) continue;
                    const double v = std::exp(-0.5 * q);
                    const auto idx = static_cast<std::size_t>((z * H + y) * W + x);
                    if (boxes[i].hard_negative) {
                        negv[idx] = std::min(negv[idx], -v);
                    } else {
                        pos[idx] = std::max(pos[idx], v);
                    }
                }
        if (!boxes[i].hard_negative) {
            target.centers.push_back({i, c});
        }
    }
    std::vector<T> y(cells);
    for (std::size_t i = 0; i < cells; ++i) y[i] = static_cast<T>(pos[i] > 0.0 ? pos[i] : negv[i]);
    target.Y = Tensor<T>::from({1, 1, D, H, W}, std::move(y));
    target.m = static_cast<std::int64_t>(target.centers.size());
    return target;
}

template <typename T>
Tensor<T> focal_center_loss(const Tensor<T>& yhat, const HeatmapTarget<T>& target, const FocalParams& params) {
    if (yhat.shape() != target.Y.shape()) {
        throw DimensionError("focal_center_loss: prediction " + shape_string(yhat.shape()) + " vs target " +
                             shape_string(target.Y.shape()));
    }
    const auto n = static_cast<std::size_t>(yhat.numel());
    std::vector<T> pos_mask(n), neg_weight(n);
    const auto Y = target.Y.data();
    for (std::size_t i = 0; i < n; ++i) {
        const bool center = Y[i] == T(1);
        pos_mask[i] = center ? T(1) : T(0);
        neg_weight[i] = center ? T(0) : static_cast<T>(std::pow(1.0 - static_cast<double>(Y[i]), params.beta));
    }
    const auto eps = static_cast<T>(params.eps);
    const auto alpha = static_cast<T>(params.alpha);
    auto p = clamp(yhat, eps, T(1) - eps);
    auto q = add_scalar(neg(p), T(1));
    auto pos_term = mul(mul(pow(q, alpha), log(p)), Tensor<T>::from(yhat.shape(), std::move(pos_mask)));
    auto neg_term = mul(mul(pow(p, alpha), log(q)), Tensor<T>::from(yhat.shape(), std::move(neg_weight)));
    const auto norm = static_cast<T>(std::max<std::int64_t>(target.m, 1));
    return scale(sum(add(pos_term, neg_term)), T(-1) / norm);
}

template <typename T>
Tensor<T> point_box_loss(const Tensor<T>& points, const Tensor<T>& refined, const Box3D& gt) {
    Tensor<T> total;
    for (const auto* set : {&points, &refined}) {
        if (set->rank() != 2 || set->dim(1) != 3 || set->dim(0) < 1) {
            throw DimensionError("point_box_loss: expected [n, 3] points, got " + shape_string(set->shape()));
        }
        for (int a = 0; a < 3; ++a) {
            auto mm = reduce_min_max(select_column(*set, a));
            auto lo = abs(add_scalar(mm.min, static_cast<T>(-gt.lo[a])));
            auto hi = abs(add_scalar(mm.max, static_cast<T>(-gt.hi[a])));
            auto term = add(lo, hi);
            total = total.defined() ? add(total, term) : term;
        }
    }
    return total;
}

TripletNorm parse_triplet_norm(const std::string& name) {
    if (name == "lesions") return TripletNorm::Lesions;
    if (name == "lesions_points") return TripletNorm::LesionsPoints;
    throw ArgumentError("unknown triplet normalisation '" + name + "'");
}

template <typename T>
Tensor<T> surface_triplet_loss(const Tensor<T>& anchor, const Tensor<T>& negatives, const Tensor<T>& points,
                               std::int64_t m, TripletNorm norm) {
    if (m <= 0) return Tensor<T>::scalar(T(0));
    const auto E = anchor.numel();
    if (negatives.rank() != 2 || points.rank() != 2 || negatives.dim(1) != E || points.dim(1) != E) {
        throw DimensionError("surface_triplet_loss: embedding widths differ");
    }
    auto a = reshape(anchor, {E});
    auto d_pos = row_norm(sub_row(points, a));
    auto d_neg = row_norm(sub_row(negatives, a));
    auto hinge = relu(add_scalar(outer_sub(d_pos, d_neg), T(1)));
    double denom = static_cast<double>(m);
    if (norm == TripletNorm::LesionsPoints) denom *= static_cast<double>(points.dim(0) * negatives.dim(0));
    return scale(sum(hinge), static_cast<T>(1.0 / denom));
}

template <typename T>
Tensor<T> joint_loss(const Tensor<T>& l_ctr, const Tensor<T>& l_pts, const Tensor<T>& l_tri, T aux_weight) {
    for (const auto* t : {&l_ctr, &l_pts, &l_tri}) {
        if (t->numel() != 1) throw DimensionError("joint_loss: terms must be scalars");
        if (!std::isfinite(static_cast<double>(t->data()[0]))) throw TrainingError("joint_loss: non-finite term");
    }
    return add(l_ctr, scale(add(l_pts, l_tri), aux_weight));
}

template <typename T>
Tensor<T> grid_points_to_voxels(const Tensor<T>& points, Index3 strides) {
    std::array<T, 3> s{}, shift{};
    for (int axis = 0; axis < 3; ++axis) {
        const auto st = strides[2 - axis];
        s[axis] = static_cast<T>(st);
        shift[axis] = static_cast<T>(0.5 * static_cast<double>(st - 1));
    }
    return affine_columns(points, s, shift);
}

template <typename T>
Tensor<T> direct_box_loss(const Tensor<T>& distances, Index3 cell, Index3 strides, const Box3D& gt) {
    if (distances.numel() != 6) throw DimensionError("direct_box_loss: expected 6 face distances");
    std::vector<T> target(6), weight(6);
    for (int axis = 0; axis < 3; ++axis) {
        const auto s = strides[2 - axis];
        const double c = grid_to_voxel(static_cast<double>(cell[2 - axis]), s);
        target[static_cast<std::size_t>(axis)] = static_cast<T>((c - gt.lo[axis]) / static_cast<double>(s));
        target[static_cast<std::size_t>(axis + 3)] = static_cast<T>((gt.hi[axis] - c) / static_cast<double>(s));
        weight[static_cast<std::size_t>(axis)] = weight[static_cast<std::size_t>(axis + 3)] = static_cast<T>(s);
    }
    auto diff = abs(sub(reshape(distances, {6}), Tensor<T>::from({6}, std::move(target))));
    return sum(mul(diff, Tensor<T>::from({6}, std::move(weight))));
}

template <typename T>
LossTerms<T> detector_loss(const DetectorOutputs<T>& outputs, const std::vector<GroundTruthBox>& boxes,
                           Index3 strides, const LossConfig& config) {
    const auto& hm = outputs.heatmap;
    const Index3 grid{hm.dim(2), hm.dim(3), hm.dim(4)};
    HeatmapTarget<T> target;
    {
        NoTapeScope<T> no_tape;
        target = make_heatmap<T>(boxes, grid, strides);
    }
    LossTerms<T> terms;
    terms.ctr = focal_center_loss(sigmoid(hm), target, config.focal);

    Tensor<T> pts = Tensor<T>::scalar(T(0)), tri = Tensor<T>::scalar(T(0));
    const bool direct = outputs.direct_box.defined();
    for (const auto& c : target.centers) {
        const auto& box = boxes[c.box_index].box;
        if (direct) {
            auto d = gather_cell(outputs.direct_box, c.cell[0], c.cell[1], c.cell[2]);
            pts = add(pts, direct_box_loss(d, c.cell, strides, box));
            continue;
        }
        auto ps = gather_point_set(outputs, c.cell, box_to_grid(box, strides), true);
        pts = add(pts, point_box_loss(grid_points_to_voxels(ps.points, strides),
                                      grid_points_to_voxels(ps.refined, strides), box));
        tri = add(tri, surface_triplet_loss(ps.center_embedding, ps.corner_embeddings, ps.point_embeddings, target.m,
                                            config.triplet_norm));
    }
    if (target.m > 0) pts = scale(pts, static_cast<T>(1.0 / static_cast<double>(target.m)));
    terms.pts = pts;
    terms.tri = tri;
    terms.total = joint_loss(terms.ctr, terms.pts, terms.tri, static_cast<T>(config.aux_weight));
    return terms;
}

#define VULD_INSTANTIATE(T)                                                                                       \
    template HeatmapTarget<T> make_heatmap<T>(const std::vector<GroundTruthBox>&, Index3, Index3);               \
    template Tensor<T> focal_center_loss(const Tensor<T>&, const HeatmapTarget<T>&, const FocalParams&);          \
    template Tensor<T> point_box_loss(const Tensor<T>&, const Tensor<T>&, const Box3D&);                          \
    template Tensor<T> surface_triplet_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::int64_t,   \
                                            TripletNorm);                                                         \
    template Tensor<T> joint_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                       \
    template Tensor<T> grid_points_to_voxels(const Tensor<T>&, Index3);                                           \
    template Tensor<T> direct_box_loss(const Tensor<T>&, Index3, Index3, const Box3D&);                           \
    template LossTerms<T> detector_loss(const DetectorOutputs<T>&, const std::vector<GroundTruthBox>&, Index3,    \
                                        const LossConfig&);

VULD_INSTANTIATE(float)
VULD_INSTANTIATE(double)

}  // namespace vuld
