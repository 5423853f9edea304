#include "vuld/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace vuld {

namespace {

constexpr double kMinExtent = 1e-3;

Box3D ordered_box(std::array<double, 3> lo, std::array<double, 3> hi) {
    Box3D b;
    for (int a = 0; a < 3; ++a) {
        if (hi[a] - lo[a] < kMinExtent) {
            const double c = 0.5 * (lo[a] + hi[a]);
            lo[a] = c - 0.5 * kMinExtent;
            hi[a] = c + 0.5 * kMinExtent;
        }
        b.lo[a] = lo[a];
        b.hi[a] = hi[a];
    }
    return b;
}

}  // namespace

template <typename T>
std::vector<Detection> decode(const DetectorOutputs<T>& outputs, Index3 strides, const DecodeParams& params) {
    NoTapeScope<T> no_tape;
    auto prob = sigmoid(outputs.heatmap.detach());
    auto pooled = maxpool3d(prob);
    const auto H = prob.dim(3), W = prob.dim(4);
    const auto p = prob.data();
    const auto q = pooled.data();

    std::vector<std::int64_t> peaks;
    for (std::int64_t i = 0; i < prob.numel(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (p[u] == q[u] && static_cast<double>(p[u]) >= params.score_min) peaks.push_back(i);
    }
    std::stable_sort(peaks.begin(), peaks.end(), [&](std::int64_t a, std::int64_t b) {
        return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)];
    });
    if (static_cast<std::int64_t>(peaks.size()) > params.top_k) peaks.resize(static_cast<std::size_t>(params.top_k));

    std::vector<Detection> dets;
    for (auto idx : peaks) {
        const Index3 cell{idx / (H * W), (idx / W) % H, idx % W};
        std::array<double, 3> lo{}, hi{};
        if (outputs.direct_box.defined()) {
            auto dist = gather_cell(outputs.direct_box, cell[0], cell[1], cell[2]);
            const auto d = dist.data();
            for (int axis = 0; axis < 3; ++axis) {
                const auto s = strides[2 - axis];
                const double c = grid_to_voxel(static_cast<double>(cell[2 - axis]), s);
                lo[axis] = c - std::max(0.0, static_cast<double>(d[static_cast<std::size_t>(axis)])) * s;
                hi[axis] = c + std::max(0.0, static_cast<double>(d[static_cast<std::size_t>(axis + 3)])) * s;
            }
        } else {
            auto ps = gather_point_set(outputs, cell, std::nullopt, false);
            const auto r = ps.refined.data();
            const auto n = ps.refined.dim(0);
            for (int axis = 0; axis < 3; ++axis) {
                const auto s = strides[2 - axis];
                lo[axis] = std::numeric_limits<double>::infinity();
                hi[axis] = -std::numeric_limits<double>::infinity();
                for (std::int64_t k = 0; k < n; ++k) {
                    const double v = grid_to_voxel(static_cast<double>(r[static_cast<std::size_t>(k * 3 + axis)]), s);
                    lo[axis] = std::min(lo[axis], v);
                    hi[axis] = std::max(hi[axis], v);
                }
            }
        }
        dets.push_back({"", static_cast<double>(p[static_cast<std::size_t>(idx)]), ordered_box(lo, hi)});
    }
    return dets;
}

double iou3d(const Box3D& a, const Box3D& b) {
    if (!a.valid() || !b.valid()) throw ArgumentError("iou3d: boxes need positive extent");
    double inter = 1.0;
    for (int i = 0; i < 3; ++i) {
        const double overlap = std::min(a.hi[i], b.hi[i]) - std::max(a.lo[i], b.lo[i]);
        if (overlap <= 0) return 0.0;
        inter *= overlap;
    }
    return inter / (a.volume() + b.volume() - inter);
}

DuplicatePolicy parse_duplicate_policy(const std::string& name) {
    if (name == "fp") return DuplicatePolicy::CountAsFP;
    if (name == "ignore") return DuplicatePolicy::Ignore;
    throw ArgumentError("unknown duplicate policy '" + name + "' (expected fp or ignore)");
}

MatchResult match_volume(const std::vector<Detection>& dets, const std::vector<Box3D>& gts, double threshold,
                         DuplicatePolicy duplicates) {
    MatchResult r;
    r.matched_detection.assign(gts.size(), -1);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        int best = -1;
        double best_iou = threshold;
        bool hits_matched = false;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double iou = iou3d(dets[d].box, gts[g]);
            if (iou <= threshold) continue;
            if (r.matched_detection[g] >= 0) {
                hits_matched = true;
                continue;
            }
            if (best < 0 || iou > best_iou) {
                best = static_cast<int>(g);
                best_iou = iou;
            }
        }
        if (best >= 0) {
            r.matched_detection[static_cast<std::size_t>(best)] = static_cast<int>(d);
            r.status.push_back(MatchStatus::TruePositive);
            ++r.tp;
        } else if (hits_matched && duplicates == DuplicatePolicy::Ignore) {
            r.status.push_back(MatchStatus::Ignored);
        } else {
            r.status.push_back(MatchStatus::FalsePositive);
            ++r.fp;
        }
    }
    return r;
}

namespace {

struct Scored {
    double score;
    MatchStatus status;
    std::size_t volume;
    int gt;  // matched gt index for true positives
};

std::vector<MatchResult> match_all(const std::vector<VolumeEval>& volumes, const EvalParams& params) {
    std::vector<MatchResult> out;
    for (const auto& v : volumes) {
        auto dets = v.detections;
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
        out.push_back(match_volume(dets, v.gts, params.iou_threshold, params.duplicates));
    }
    return out;
}

std::vector<Scored> pooled_scores(const std::vector<VolumeEval>& volumes, const std::vector<MatchResult>& matches) {
    std::vector<Scored> all;
    for (std::size_t v = 0; v < volumes.size(); ++v) {
        auto dets = volumes[v].detections;
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
        std::vector<int> gt_of(dets.size(), -1);
        for (std::size_t g = 0; g < matches[v].matched_detection.size(); ++g) {
            if (matches[v].matched_detection[g] >= 0) gt_of[static_cast<std::size_t>(matches[v].matched_detection[g])] = static_cast<int>(g);
        }
        for (std::size_t d = 0; d < dets.size(); ++d) all.push_back({dets[d].score, matches[v].status[d], v, gt_of[d]});
    }
    std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
    return all;
}

// Number of pooled detections kept at the lowest threshold with at most
// `fp_point` mean FPs per volume. Thresholds sit between distinct scores.
std::size_t admissible_prefix(const std::vector<Scored>& all, std::size_t n_volumes, double fp_point) {
    std::size_t best = 0;
    std::int64_t fp = 0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) {
            if (all[j].status == MatchStatus::FalsePositive) ++fp;
            ++j;
        }
        if (static_cast<double>(fp) / static_cast<double>(n_volumes) <= fp_point + 1e-12) best = j;
        i = j;
    }
    return best;
}

std::int64_t total_gts(const std::vector<VolumeEval>& volumes) {
    std::int64_t n = 0;
    for (const auto& v : volumes) n += static_cast<std::int64_t>(v.gts.size());
    return n;
}

}  // namespace

FROCCurve froc(const std::vector<VolumeEval>& volumes, const std::vector<double>& fp_points, const EvalParams& params) {
    if (volumes.empty()) throw ArgumentError("froc: no volumes");
    const auto n_gt = total_gts(volumes);
    if (n_gt == 0) throw ArgumentError("froc: no ground-truth lesions");
    const auto matches = match_all(volumes, params);
    const auto all = pooled_scores(volumes, matches);

    FROCCurve curve;
    curve.fp_points = fp_points;
    for (double f : fp_points) {
        // Sensitivity grows with the prefix, so the longest admissible
        // prefix gives the step-function maximum.
        const auto k = admissible_prefix(all, volumes.size(), f);
        std::int64_t tp = 0;
        for (std::size_t i = 0; i < k; ++i) tp += all[i].status == MatchStatus::TruePositive;
        curve.sensitivity.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    }
    curve.average = fp_points.empty() ? 0.0
                                      : std::accumulate(curve.sensitivity.begin(), curve.sensitivity.end(), 0.0) /
                                            static_cast<double>(fp_points.size());
    return curve;
}

std::vector<SizeBucket> size_stratified(const std::vector<VolumeEval>& volumes, const std::vector<double>& cutoffs_mm,
                                        double fp_point, const EvalParams& params) {
    if (volumes.empty()) throw ArgumentError("size_stratified: no volumes");
    for (std::size_t i = 1; i < cutoffs_mm.size(); ++i) {
        if (cutoffs_mm[i] <= cutoffs_mm[i - 1]) throw ArgumentError("size_stratified: cutoffs must increase");
    }
    std::vector<SizeBucket> buckets;
    double lo = 0.0;
    for (double c : cutoffs_mm) {
        buckets.push_back({lo, c, 0, 0, std::nullopt});
        lo = c;
    }
    buckets.push_back({lo, std::numeric_limits<double>::infinity(), 0, 0, std::nullopt});
    auto bucket_of = [&](double size) {
        std::size_t b = 0;
        while (b + 1 < buckets.size() && size >= buckets[b].hi_mm) ++b;
        return b;
    };

    const auto matches = match_all(volumes, params);
    const auto all = pooled_scores(volumes, matches);
    const auto k = admissible_prefix(all, volumes.size(), fp_point);
    std::vector<std::vector<bool>> hit(volumes.size());
    for (std::size_t v = 0; v < volumes.size(); ++v) hit[v].assign(volumes[v].gts.size(), false);
    for (std::size_t i = 0; i < k; ++i) {
        if (all[i].status == MatchStatus::TruePositive) hit[all[i].volume][static_cast<std::size_t>(all[i].gt)] = true;
    }
    for (std::size_t v = 0; v < volumes.size(); ++v) {
        if (volumes[v].gt_sizes_mm.size() != volumes[v].gts.size()) {
            throw ArgumentError("size_stratified: volume '" + volumes[v].id + "' lacks lesion sizes");
        }
        for (std::size_t g = 0; g < volumes[v].gts.size(); ++g) {
            auto& b = buckets[bucket_of(volumes[v].gt_sizes_mm[g])];
            ++b.count;
            b.hits += hit[v][g];
        }
    }
    for (auto& b : buckets) {
        if (b.count > 0) b.sensitivity = static_cast<double>(b.hits) / static_cast<double>(b.count);
    }
    return buckets;
}

std::vector<double> true_positive_ious(const std::vector<VolumeEval>& volumes, double fp_point,
                                       const EvalParams& params) {
    const auto matches = match_all(volumes, params);
    const auto all = pooled_scores(volumes, matches);
    const auto k = admissible_prefix(all, volumes.size(), fp_point);
    std::vector<std::vector<Detection>> sorted;
    for (const auto& v : volumes) {
        auto dets = v.detections;
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
        sorted.push_back(std::move(dets));
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < k; ++i) {
        if (all[i].status != MatchStatus::TruePositive) continue;
        const auto v = all[i].volume;
        const auto g = static_cast<std::size_t>(all[i].gt);
        const auto d = static_cast<std::size_t>(matches[v].matched_detection[g]);
        out.push_back(iou3d(sorted[v][d].box, volumes[v].gts[g]));
    }
    return out;
}

double lesion_size_mm(const Box3D& box, const std::array<double, 3>& spacing) {
    return std::max(box.extent(0) * spacing[2], box.extent(1) * spacing[1]);
}

std::string format_detections(const std::vector<Detection>& dets, const std::optional<std::array<double, 3>>& spacing) {
    std::string out;
    char buf[512];
    for (const auto& d : dets) {
        const auto& b = d.box;
        int n = std::snprintf(buf, sizeof buf, "%s %.6f %.4f %.4f %.4f %.4f %.4f %.4f", d.volume_id.c_str(), d.score,
                              b.lo[0], b.lo[1], b.lo[2], b.hi[0], b.hi[1], b.hi[2]);
        out.append(buf, static_cast<std::size_t>(n));
        if (spacing) {
            const auto& s = *spacing;  // (z, y, x)
            n = std::snprintf(buf, sizeof buf, " %.4f %.4f %.4f %.4f %.4f %.4f", b.lo[0] * s[2], b.lo[1] * s[1],
                              b.lo[2] * s[0], b.hi[0] * s[2], b.hi[1] * s[1], b.hi[2] * s[0]);
            out.append(buf, static_cast<std::size_t>(n));
        }
        out += '\n';
    }
    return out;
}

std::vector<Detection> parse_detections(const std::string& text) {
    std::vector<Detection> dets;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Detection d;
        std::vector<double> v;
        ls >> d.volume_id;
        double x;
        while (ls >> x) v.push_back(x);
        if (!ls.eof() || (v.size() != 7 && v.size() != 13)) {
            throw ArgumentError("detections line " + std::to_string(lineno) + ": expected id, score and 6 or 12 coordinates");
        }
        d.score = v[0];
        d.box.lo = {v[1], v[2], v[3]};
        d.box.hi = {v[4], v[5], v[6]};
        if (!d.box.valid()) throw ArgumentError("detections line " + std::to_string(lineno) + ": empty box");
        dets.push_back(d);
    }
    return dets;
}

std::string format_froc_csv(const FROCCurve& curve) {
    std::string out = "fp_per_volume,sensitivity\n";
    char buf[128];
    for (std::size_t i = 0; i < curve.fp_points.size(); ++i) {
        const int n = std::snprintf(buf, sizeof buf, "%.2f,%.6f\n", curve.fp_points[i], curve.sensitivity[i]);
        out.append(buf, static_cast<std::size_t>(n));
    }
    const int n = std::snprintf(buf, sizeof buf, "average,%.6f\n", curve.average);
    out.append(buf, static_cast<std::size_t>(n));
    return out;
}

std::string format_size_csv(const std::vector<SizeBucket>& buckets) {
    std::string out = "bucket_mm,count,hits,sensitivity\n";
    char buf[160];
    for (const auto& b : buckets) {
        std::string range = std::isinf(b.hi_mm) ? ">=" + std::to_string(static_cast<long long>(b.lo_mm))
                                                : std::to_string(static_cast<long long>(b.lo_mm)) + "-" +
                                                      std::to_string(static_cast<long long>(b.hi_mm));
        std::string sens = "undefined";
        if (b.sensitivity) {
            std::snprintf(buf, sizeof buf, "%.6f", *b.sensitivity);
            sens = buf;
        }
        out += range + "," + std::to_string(b.count) + "," + std::to_string(b.hits) + "," + sens + "\n";
    }
    return out;
}

template std::vector<Detection> decode(const DetectorOutputs<float>&, Index3, const DecodeParams&);
template std::vector<Detection> decode(const DetectorOutputs<double>&, Index3, const DecodeParams&);

}  // namespace vuld
