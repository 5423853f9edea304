#include "vuld/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "vuld/io/binary.hpp"

namespace vuld {

Adam::Adam(std::vector<Tensor<float>> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
}

void Adam::step(double grad_scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) continue;
        const auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = static_cast<double>(g[j]) * grad_scale;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            w[j] = static_cast<float>(static_cast<double>(w[j]) - lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_));
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

bool PlateauScheduler::observe(double loss, Adam& optimizer) {
    if (loss < best_ - delta_) {
        best_ = loss;
        bad_ = 0;
        return true;
    }
    if (++bad_ >= patience_) {
        optimizer.set_lr(optimizer.lr() * factor_);
        bad_ = 0;
    }
    return false;
}

TrainConfig TrainConfig::from_config(const RunConfig& c) {
    TrainConfig t;
    t.lr = c.get_double("train.lr");
    t.steps = c.get_int("train.steps");
    t.batch_size = c.get_int("train.batch_size");
    const auto crop = c.get_ints("train.crop");
    if (crop.size() != 3) throw ConfigError("train.crop needs three values");
    t.crop = {crop[0], crop[1], crop[2]};
    t.random_crop_prob = c.get_double("train.random_crop_prob");
    t.eval_every = c.get_int("train.eval_every");
    t.val_volumes = c.get_int("train.val_volumes");
    t.patience = c.get_int("train.patience");
    t.plateau_delta = c.get_double("train.plateau_delta");
    t.lr_drop = c.get_double("train.lr_drop");
    t.log_every = c.get_int("train.log_every");
    t.time_limit = c.get_double("train.time_limit");
    t.seed = static_cast<std::uint64_t>(c.get_int("train.seed"));
    t.flip = c.get_bool("train.flip");
    t.grad_clip = c.get_double("train.grad_clip");
    t.loss.focal.alpha = c.get_double("loss.alpha");
    t.loss.focal.beta = c.get_double("loss.beta");
    t.loss.focal.eps = c.get_double("loss.eps");
    t.loss.aux_weight = c.get_double("loss.aux_weight");
    try {
        t.loss.triplet_norm = parse_triplet_norm(c.get("loss.triplet_norm"));
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    if (t.lr <= 0 || t.steps < 0 || t.batch_size < 1 || t.eval_every < 1 || t.patience < 1 || t.log_every < 1) {
        throw ConfigError("train config: lr > 0, steps >= 0 and batch_size, eval_every, patience, log_every >= 1");
    }
    return t;
}

TrainSample make_crop(const Volume& volume, const std::vector<GroundTruthBox>& boxes, Index3 crop,
                      double random_prob, bool flip, std::mt19937_64& rng) {
    const auto& t = volume.data;
    const auto C = t.dim(0);
    const Index3 dims{t.dim(1), t.dim(2), t.dim(3)};
    Index3 size{}, origin{};
    for (int a = 0; a < 3; ++a) size[a] = std::min(crop[a], dims[a]);

    std::vector<const GroundTruthBox*> lesions;
    for (const auto& b : boxes) {
        if (!b.hard_negative) lesions.push_back(&b);
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool around_lesion = !lesions.empty() && unit(rng) >= random_prob;
    const GroundTruthBox* focus =
        around_lesion ? lesions[std::uniform_int_distribution<std::size_t>(0, lesions.size() - 1)(rng)] : nullptr;
    for (int a = 0; a < 3; ++a) {
        const auto room = dims[a] - size[a];
        if (room == 0) continue;
        if (focus) {
            const double c = focus->box.center(2 - a);
            const double jitter = std::uniform_real_distribution<double>(-0.25, 0.25)(rng) * static_cast<double>(size[a]);
            origin[a] = std::clamp<std::int64_t>(std::llround(c - 0.5 * static_cast<double>(size[a]) + jitter), 0, room);
        } else {
            origin[a] = std::uniform_int_distribution<std::int64_t>(0, room)(rng);
        }
    }
    std::array<bool, 3> mirrored{false, false, false};
    if (flip) {
        for (auto& m : mirrored) m = unit(rng) < 0.5;
    }

    const auto [d, h, w] = size;
    std::vector<float> vox(static_cast<std::size_t>(C * d * h * w));
    const auto src = t.data();
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t z = 0; z < d; ++z)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) {
                    const auto sz = origin[0] + (mirrored[0] ? d - 1 - z : z);
                    const auto sy = origin[1] + (mirrored[1] ? h - 1 - y : y);
                    const auto sx = origin[2] + (mirrored[2] ? w - 1 - x : x);
                    vox[static_cast<std::size_t>(((c * d + z) * h + y) * w + x)] =
                        src[static_cast<std::size_t>(((c * dims[0] + sz) * dims[1] + sy) * dims[2] + sx)];
                }
    TrainSample s;
    s.volume = Tensor<float>::from({1, C, d, h, w}, std::move(vox));
    for (const auto& b : boxes) {
        GroundTruthBox g = b;
        bool inside = true;
        for (int axis = 0; axis < 3; ++axis) {
            const int a = 2 - axis;  // (z, y, x) index of this box axis
            const double n = static_cast<double>(size[a]);
            double lo = b.box.lo[axis] - static_cast<double>(origin[a]);
            double hi = b.box.hi[axis] - static_cast<double>(origin[a]);
            if (mirrored[a]) {
                const double l = n - 1 - hi, u = n - 1 - lo;
                lo = l;
                hi = u;
            }
            g.box.lo[axis] = lo;
            g.box.hi[axis] = hi;
            const double center = 0.5 * (lo + hi);
            if (center < 0 || center > n - 1) inside = false;
        }
        if (inside) s.boxes.push_back(g);
    }
    return s;
}

namespace {

Tensor<float> batched(const Volume& v) {
    auto shape = v.data.shape();
    shape.insert(shape.begin(), 1);
    return reshape(v.data, shape);
}

std::string format_log(const TrainLogEntry& e) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%lld,%.3g,%.6f,%.6f,%.6f,%.6f", static_cast<long long>(e.step), e.lr, e.ctr,
                  e.pts, e.tri, e.total);
    return buf;
}

}  // namespace

double validation_loss(const Detector<float>& detector, const std::vector<Volume>& volumes,
                       const std::vector<std::vector<GroundTruthBox>>& boxes, const LossConfig& config) {
    NoTapeScope<float> no_tape;
    double total = 0.0;
    const auto strides = detector.config().output_stride();
    for (std::size_t i = 0; i < volumes.size(); ++i) {
        auto out = detector.forward(batched(volumes[i]));
        total += static_cast<double>(detector_loss(out, boxes[i], strides, config).total.item());
    }
    return volumes.empty() ? 0.0 : total / static_cast<double>(volumes.size());
}

TrainResult train_detector(Detector<float>& detector, const Dataset& data, const TrainConfig& config,
                           const std::filesystem::path& out_dir, const LogSink& sink) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    auto emit = [&](const std::string& s) {
        if (sink) sink(s);
    };
    const auto mult = detector.config().size_multiple();
    for (int a = 0; a < 3; ++a) {
        if (config.crop[a] % mult[a] != 0) {
            throw ConfigError("train.crop must be divisible by (" + std::to_string(mult[0]) + ", " +
                              std::to_string(mult[1]) + ", " + std::to_string(mult[2]) + ")");
        }
    }
    const auto train_entries = data.split(Split::Train);
    if (train_entries.empty()) throw std::runtime_error("train: dataset has no training volumes");
    std::vector<Volume> train_vols;
    for (const auto* e : train_entries) train_vols.push_back(data.load(*e));
    std::vector<Volume> val_vols;
    std::vector<std::vector<GroundTruthBox>> val_boxes;
    for (const auto* e : data.split(Split::Val)) {
        if (config.val_volumes > 0 && static_cast<std::int64_t>(val_vols.size()) >= config.val_volumes) break;
        val_vols.push_back(data.load(*e));
        val_boxes.push_back(e->boxes);
    }

    auto params = detector.parameters();
    Adam adam(params, config.lr);
    PlateauScheduler plateau(config.patience, config.plateau_delta, config.lr_drop);
    std::mt19937_64 rng(config.seed);
    const auto strides = detector.config().output_stride();
    TrainResult result;
    std::string csv = "step,lr,l_ctr,l_pts,l_tri,loss\n";
    std::string val_csv = "step,validation_loss,lr\n";
    Tape<float> tape;
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    auto save = [&](const std::string& name) {
        if (!out_dir.empty()) write_checkpoint(out_dir / name, detector.to_checkpoint());
    };
    auto validate = [&](std::int64_t step) {
        const double v = val_vols.empty() ? result.log.back().total
                                          : validation_loss(detector, val_vols, val_boxes, config.loss);
        result.validation.emplace_back(step, v);
        const bool best = plateau.observe(v, adam);
        if (best) save("best.p3dw");
        char buf[160];
        std::snprintf(buf, sizeof buf, "%lld,%.6f,%.3g\n", static_cast<long long>(step), v, adam.lr());
        val_csv += buf;
        std::snprintf(buf, sizeof buf, "validation step %lld loss %.6f%s lr %.3g", static_cast<long long>(step), v,
                      best ? " (best)" : "", adam.lr());
        emit(buf);
    };

    for (std::int64_t step = 1; step <= config.steps; ++step) {
        TrainLogEntry entry;
        entry.step = step;
        entry.lr = adam.lr();
        for (std::int64_t b = 0; b < config.batch_size; ++b) {
            const auto vi = std::uniform_int_distribution<std::size_t>(0, train_vols.size() - 1)(rng);
            auto sample = make_crop(train_vols[vi], train_entries[vi]->boxes, config.crop, config.random_crop_prob,
                                    config.flip, rng);
            tape.reset();
            TapeScope<float> scope(tape);
            LossTerms<float> terms;
            try {
                terms = detector_loss(detector.forward(sample.volume), sample.boxes, strides, config.loss);
            } catch (const TrainingError& e) {
                std::string dump = "step " + std::to_string(step) + " batch item " + std::to_string(b) + " volume " +
                                   train_entries[vi]->id + "\n";
                for (const auto& g : sample.boxes) dump += (g.hard_negative ? "hneg " : "pos ") + g.box.str() + "\n";
                if (!out_dir.empty()) io::write_file(out_dir / "nan_dump.txt", dump);
                throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step) + ", volume " +
                                    train_entries[vi]->id + " (batch item " + std::to_string(b) + ")");
            }
            tape.backward(terms.total);
            entry.ctr += static_cast<double>(terms.ctr.item());
            entry.pts += static_cast<double>(terms.pts.item());
            entry.tri += static_cast<double>(terms.tri.item());
            entry.total += static_cast<double>(terms.total.item());
        }
        const double inv = 1.0 / static_cast<double>(config.batch_size);
        entry.ctr *= inv;
        entry.pts *= inv;
        entry.tri *= inv;
        entry.total *= inv;

        double scale = inv;
        if (config.grad_clip > 0) {
            double sq = 0.0;
            for (const auto& p : params) {
                for (float g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
            }
            const double norm = std::sqrt(sq) * inv;
            if (norm > config.grad_clip) scale *= config.grad_clip / norm;
        }
        adam.step(scale);
        adam.zero_grad();

        result.log.push_back(entry);
        csv += format_log(entry) + "\n";
        result.steps = step;
        if (step % config.log_every == 0 || step == 1) emit("step " + format_log(entry));
        const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
        const bool out_of_time = config.time_limit > 0 && elapsed >= config.time_limit;
        if (step % config.eval_every == 0 || step == config.steps || out_of_time) validate(step);
        if (out_of_time) {
            emit("time limit reached after step " + std::to_string(step));
            break;
        }
    }
    if (result.validation.empty()) {
        save("best.p3dw");
        result.best_validation = 0.0;
    } else {
        result.best_validation = plateau.best();
    }
    save("last.p3dw");
    if (!out_dir.empty()) {
        io::write_file(out_dir / "train_log.csv", csv);
        io::write_file(out_dir / "validation_log.csv", val_csv);
    }
    result.seconds = std::chrono::duration<double>(clock::now() - start).count();
    return result;
}

EvalSettings EvalSettings::from_config(const RunConfig& c) {
    EvalSettings s;
    s.decode.top_k = c.get_int("decode.top_k");
    s.decode.score_min = c.get_double("decode.score_min");
    s.match.iou_threshold = c.get_double("eval.iou_threshold");
    try {
        s.match.duplicates = parse_duplicate_policy(c.get("eval.duplicates"));
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    s.fp_points = c.get_doubles("eval.fp_points");
    s.size_cutoffs = c.get_doubles("eval.size_cutoffs");
    s.size_fp = c.get_double("eval.size_fp");
    return s;
}

namespace {

void finish_report(EvalReport& r, const EvalSettings& settings) {
    r.froc = froc(r.volumes, settings.fp_points, settings.match);
    r.sizes = size_stratified(r.volumes, settings.size_cutoffs, settings.size_fp, settings.match);
    r.tp_ious = true_positive_ious(r.volumes, settings.size_fp, settings.match);
    r.mean_tp_iou = r.tp_ious.empty() ? 0.0
                                      : std::accumulate(r.tp_ious.begin(), r.tp_ious.end(), 0.0) /
                                            static_cast<double>(r.tp_ious.size());
}

VolumeEval ground_truth(const ManifestEntry& e, const std::array<double, 3>& spacing) {
    VolumeEval v;
    v.id = e.id;
    for (const auto& g : e.boxes) {
        if (g.hard_negative) continue;
        v.gts.push_back(g.box);
        v.gt_sizes_mm.push_back(lesion_size_mm(g.box, spacing));
    }
    return v;
}

}  // namespace

EvalReport evaluate(const Detector<float>& detector, const Dataset& data, Split split, const EvalSettings& settings) {
    NoTapeScope<float> no_tape;
    EvalReport r;
    for (const auto* e : data.split(split)) {
        auto vol = data.load(*e);
        auto dets = decode(detector.forward(batched(vol)), detector.config().output_stride(), settings.decode);
        for (auto& d : dets) d.volume_id = e->id;
        const auto text = format_detections(dets, vol.spacing);
        r.detections_text += text;
        auto v = ground_truth(*e, vol.spacing);
        v.detections = parse_detections(text);
        r.volumes.push_back(std::move(v));
    }
    if (r.volumes.empty()) throw std::runtime_error("eval: split '" + to_string(split) + "' is empty");
    finish_report(r, settings);
    return r;
}

EvalReport score_detections(const std::vector<Detection>& detections, const Dataset& data, Split split,
                            const EvalSettings& settings) {
    EvalReport r;
    for (const auto* e : data.split(split)) {
        auto v = ground_truth(*e, data.load(*e).spacing);
        for (const auto& d : detections) {
            if (d.volume_id == e->id) v.detections.push_back(d);
        }
        r.volumes.push_back(std::move(v));
    }
    if (r.volumes.empty()) throw std::runtime_error("froc: split '" + to_string(split) + "' is empty");
    finish_report(r, settings);
    return r;
}

}  // namespace vuld
