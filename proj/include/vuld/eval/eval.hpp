#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vuld/core/box.hpp"
#include "vuld/detector/detector.hpp"

namespace vuld {

struct Detection {
    std::string volume_id;
    double score = 0.0;
    Box3D box;
};

struct DecodeParams {
    std::int64_t top_k = 50;
    double score_min = 0.05;
};

/// Local maxima (3x3x3) of the sigmoid heatmap, best first, with a box per
/// peak from the refined surface points or the direct face distances.
template <typename T>
std::vector<Detection> decode(const DetectorOutputs<T>& outputs, Index3 strides, const DecodeParams& params = {});

/// Intersection over union of two boxes with positive extent.
double iou3d(const Box3D& a, const Box3D& b);

enum class DuplicatePolicy { CountAsFP, Ignore };

DuplicatePolicy parse_duplicate_policy(const std::string& name);

enum class MatchStatus { TruePositive, FalsePositive, Ignored };

struct MatchResult {
    std::vector<MatchStatus> status;    // per detection
    std::vector<int> matched_detection;  // per gt, -1 when missed
    std::int64_t tp = 0;
    std::int64_t fp = 0;
};

/// Greedy one-to-one matching in detection order (callers sort by score,
/// descending, stable). Each detection takes the unmatched gt with the
/// highest IoU above `threshold` (lowest index on ties).
MatchResult match_volume(const std::vector<Detection>& dets, const std::vector<Box3D>& gts, double threshold = 0.3,
                         DuplicatePolicy duplicates = DuplicatePolicy::CountAsFP);

struct VolumeEval {
    std::string id;
    std::vector<Detection> detections;
    std::vector<Box3D> gts;
    std::vector<double> gt_sizes_mm;
};

struct FROCCurve {
    std::vector<double> fp_points;
    std::vector<double> sensitivity;
    double average = 0.0;
};

struct EvalParams {
    double iou_threshold = 0.3;
    DuplicatePolicy duplicates = DuplicatePolicy::CountAsFP;
};

inline const std::vector<double>& default_fp_points() {
    static const std::vector<double> points{0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
    return points;
}

/// Step-function FROC: sensitivity at f is the best sensitivity over score
/// thresholds whose mean FPs per volume stay <= f.
FROCCurve froc(const std::vector<VolumeEval>& volumes, const std::vector<double>& fp_points = default_fp_points(),
               const EvalParams& params = {});

struct SizeBucket {
    double lo_mm = 0.0;
    double hi_mm = 0.0;  // infinity for the last bucket
    std::int64_t count = 0;
    std::int64_t hits = 0;
    std::optional<double> sensitivity;  // empty bucket: undefined
};

/// Per-size-bucket sensitivity at the global operating point with at most
/// `fp_point` FPs per volume.
std::vector<SizeBucket> size_stratified(const std::vector<VolumeEval>& volumes, const std::vector<double>& cutoffs_mm,
                                        double fp_point = 1.0, const EvalParams& params = {});

/// IoU of every true positive kept at the operating point with at most
/// `fp_point` FPs per volume.
std::vector<double> true_positive_ious(const std::vector<VolumeEval>& volumes, double fp_point = 1.0,
                                       const EvalParams& params = {});

/// Largest in-plane extent in mm; spacing is (z, y, x).
double lesion_size_mm(const Box3D& box, const std::array<double, 3>& spacing);

/// One line per detection: id, score, six voxel coordinates and, when
/// spacing is given, the same corners in mm.
std::string format_detections(const std::vector<Detection>& dets,
                              const std::optional<std::array<double, 3>>& spacing = std::nullopt);
std::vector<Detection> parse_detections(const std::string& text);

std::string format_froc_csv(const FROCCurve& curve);
std::string format_size_csv(const std::vector<SizeBucket>& buckets);

}  // namespace vuld
