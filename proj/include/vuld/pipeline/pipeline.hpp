#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vuld/detector/detector.hpp"
#include "vuld/eval/eval.hpp"
#include "vuld/losses/losses.hpp"
#include "vuld/synth/synthgen.hpp"

namespace vuld {

/// Adam with bias correction; reads gradients accumulated on the
/// parameter tensors.
class Adam {
   public:
    explicit Adam(std::vector<Tensor<float>> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    /// Applies one update with gradients multiplied by `grad_scale`.
    void step(double grad_scale = 1.0);
    void zero_grad();
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    std::int64_t steps() const { return t_; }

   private:
    std::vector<Tensor<float>> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

/// Multiplies the lr by `factor` after `patience` observations without an
/// improvement larger than `delta`.
class PlateauScheduler {
   public:
    PlateauScheduler(std::int64_t patience, double delta, double factor)
        : patience_(patience), delta_(delta), factor_(factor) {}
    /// Returns true when the observation is a new best.
    bool observe(double loss, Adam& optimizer);
    double best() const { return best_; }

   private:
    std::int64_t patience_;
    double delta_, factor_;
    double best_ = 1e300;
    std::int64_t bad_ = 0;
};

struct TrainConfig {
    double lr = 1e-4;
    std::int64_t steps = 2000;
    std::int64_t batch_size = 2;
    Index3 crop{64, 64, 64};
    double random_crop_prob = 0.5;
    std::int64_t eval_every = 100;
    std::int64_t val_volumes = 8;
    std::int64_t patience = 5;
    double plateau_delta = 1e-4;
    double lr_drop = 0.1;
    std::int64_t log_every = 10;
    double time_limit = 0.0;
    std::uint64_t seed = 0;
    bool flip = true;
    double grad_clip = 10.0;
    LossConfig loss;

    static TrainConfig from_config(const RunConfig& config);
};

struct TrainSample {
    Tensor<float> volume;  // [1, C, d, h, w]
    std::vector<GroundTruthBox> boxes;
};

/// Crop of `crop` size (clamped to the volume) centred near a random lesion,
/// or at a random location with probability `random_prob`. Boxes are
/// shifted into crop coordinates; blobs whose center leaves the crop are
/// dropped. Optional random flips.
TrainSample make_crop(const Volume& volume, const std::vector<GroundTruthBox>& boxes, Index3 crop,
                      double random_prob, bool flip, std::mt19937_64& rng);

struct TrainLogEntry {
    std::int64_t step = 0;
    double lr = 0.0;
    double ctr = 0.0, pts = 0.0, tri = 0.0, total = 0.0;
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
    std::vector<std::pair<std::int64_t, double>> validation;  // (step, loss)
    double best_validation = 0.0;
    std::int64_t steps = 0;
    double seconds = 0.0;
};

using LogSink = std::function<void(const std::string&)>;

/// Optimises the detector on the train split. Writes best.p3dw (best
/// validation loss), last.p3dw and train_log.csv into `out_dir` when it
/// is not empty.
TrainResult train_detector(Detector<float>& detector, const Dataset& data, const TrainConfig& config,
                           const std::filesystem::path& out_dir, const LogSink& sink = {});

/// Mean joint loss over volumes, no gradient tracking.
double validation_loss(const Detector<float>& detector, const std::vector<Volume>& volumes,
                       const std::vector<std::vector<GroundTruthBox>>& boxes, const LossConfig& config);

struct EvalReport {
    std::vector<VolumeEval> volumes;
    FROCCurve froc;
    std::vector<SizeBucket> sizes;
    std::vector<double> tp_ious;
    double mean_tp_iou = 0.0;
    std::string detections_text;
};

struct EvalSettings {
    DecodeParams decode;
    EvalParams match;
    std::vector<double> fp_points = default_fp_points();
    std::vector<double> size_cutoffs{20.0, 50.0};
    double size_fp = 1.0;

    static EvalSettings from_config(const RunConfig& config);
};

/// Decodes every volume of `split`, then scores FROC, size buckets and
/// true-positive IoU. Detections are rounded through the detection-file
/// format so re-scoring the file reproduces the report.
EvalReport evaluate(const Detector<float>& detector, const Dataset& data, Split split, const EvalSettings& settings);

/// Scores detections (e.g. from a detection file) against a dataset split.
EvalReport score_detections(const std::vector<Detection>& detections, const Dataset& data, Split split,
                            const EvalSettings& settings);

}  // namespace vuld
