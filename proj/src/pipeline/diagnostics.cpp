#include "vuld/pipeline/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>

#include "vuld/losses/losses.hpp"
#include "vuld/tensor/gradcheck.hpp"

namespace vuld {

const std::vector<std::string>& gradient_suite_names() {
    static const std::vector<std::string> names{"focal", "point_box", "triplet", "joint"};
    return names;
}

namespace {

using Rng = std::mt19937_64;

constexpr int kMaxRedraws = 20;

Tensor<double> normal_tensor(Shape shape, double sd, Rng& rng) {
    std::normal_distribution<double> n(0.0, sd);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = n(rng);
    return Tensor<double>::from(std::move(shape), std::move(v));
}

std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

GradCheckResult focal_trial(Rng& rng) {
    const Shape shape{1, 1, uniform_int(rng, 1, 3), uniform_int(rng, 2, 5), uniform_int(rng, 2, 5)};
    const auto n = shape_numel(shape);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = u(rng) < 0.2 ? -u(rng) : 0.9 * u(rng);
    HeatmapTarget<double> target;
    const auto centers = uniform_int(rng, 0, std::min<std::int64_t>(2, n));
    for (std::int64_t c = 0; c < centers; ++c) y[static_cast<std::size_t>(uniform_int(rng, 0, n - 1))] = 1.0;
    for (double v : y) target.m += v == 1.0;
    target.Y = Tensor<double>::from(shape, y);
    auto logits = normal_tensor(shape, 1.5, rng);
    return check_gradients(
        [&](const std::vector<Tensor<double>>& in) { return focal_center_loss(sigmoid(in[0]), target); }, {logits});
}

Box3D random_box(Rng& rng, double spread) {
    std::uniform_real_distribution<double> c(-spread, spread), e(0.5, spread);
    Box3D b;
    for (int a = 0; a < 3; ++a) {
        b.lo[a] = c(rng);
        b.hi[a] = b.lo[a] + e(rng);
    }
    return b;
}

GradCheckResult point_box_trial(Rng& rng) {
    const auto n = uniform_int(rng, 4, 16);
    auto p = normal_tensor({n, 3}, 5.0, rng);
    auto r = normal_tensor({n, 3}, 5.0, rng);
    const auto gt = random_box(rng, 6.0);
    return check_gradients(
        [&](const std::vector<Tensor<double>>& in) { return point_box_loss(in[0], in[1], gt); }, {p, r});
}

GradCheckResult triplet_trial(Rng& rng) {
    const auto E = uniform_int(rng, 3, 16);
    const auto n = uniform_int(rng, 4, 16);
    const auto m = uniform_int(rng, 1, 3);
    auto a_p = normal_tensor({E}, 0.5, rng);
    auto a_n = normal_tensor({8, E}, 0.5, rng);
    auto a_k = normal_tensor({n, E}, 0.5, rng);
    return check_gradients(
        [&](const std::vector<Tensor<double>>& in) { return surface_triplet_loss(in[0], in[1], in[2], m); },
        {a_p, a_n, a_k});
}

BackboneConfig tiny_config(std::uint64_t seed) {
    BackboneConfig c = BackboneConfig::toy();
    c.stem_channels = 4;
    c.growth_rate = 4;
    c.block_layers = {1, 1, 2};
    c.fpn_channels = 8;
    c.head_channels = 6;
    c.n_points = 4;
    c.embed_channels = 4;
    c.seed = seed;
    return c;
}

GradCheckResult joint_trial(Rng& rng, std::uint64_t seed) {
    Detector<double> det(tiny_config(seed));
    const std::int64_t D = 8, H = 32, W = 32;
    // One bright blob on noise, annotated as a lesion, plus a hard negative.
    Box3D lesion;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::array<double, 3> c{8.0 + 16.0 * u(rng), 8.0 + 16.0 * u(rng), 2.0 + 4.0 * u(rng)};
    const std::array<double, 3> r{3.0 + 3.0 * u(rng), 3.0 + 3.0 * u(rng), 1.5 + u(rng)};
    for (int a = 0; a < 3; ++a) {
        lesion.lo[a] = c[a] - r[a];
        lesion.hi[a] = c[a] + r[a];
    }
    auto noise = normal_tensor({1, 1, D, H, W}, 0.2, rng);
    auto vol = noise.mutable_data();
    for (std::int64_t z = 0; z < D; ++z)
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x) {
                const double q = std::pow((static_cast<double>(x) - c[0]) / r[0], 2) +
                                 std::pow((static_cast<double>(y) - c[1]) / r[1], 2) +
                                 std::pow((static_cast<double>(z) - c[2]) / r[2], 2);
                if (q <= 1.0) vol[static_cast<std::size_t>((z * H + y) * W + x)] += 1.0;
            }
    Box3D negative;
    negative.lo = {1.0, 1.0, 0.5};
    negative.hi = {6.0, 5.0, 2.5};
    const std::vector<GroundTruthBox> boxes{{lesion, false}, {negative, true}};
    const auto strides = det.config().output_stride();

    auto params = det.parameters();
    // Zero biases put dead-ReLU regions exactly on the kink; jitter them so
    // the check runs at a generic point.
    std::normal_distribution<double> jitter(0.0, 0.05);
    for (auto& p : params)
        if (p.rank() == 1)
            for (auto& v : p.mutable_data()) v = jitter(rng);
    std::vector<std::pair<std::size_t, std::int64_t>> coords;
    for (int k = 0; k < 20; ++k) {
        const auto i = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(params.size()) - 1));
        coords.emplace_back(i, uniform_int(rng, 0, params[i].numel() - 1));
    }
    return check_gradients(
        [&](const std::vector<Tensor<double>>&) { return detector_loss(det.forward(noise), boxes, strides).total; },
        params, 1e-5, coords);
}

}  // namespace

GradSuiteResult run_gradient_suite(const std::string& name, std::int64_t trials, double tolerance,
                                   std::uint64_t first_seed) {
    const auto& names = gradient_suite_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        throw ArgumentError("gradcheck: unknown suite '" + name + "'");
    }
    GradSuiteResult r;
    r.name = name;
    r.tolerance = tolerance;
    for (std::int64_t t = 0; t < trials; ++t) {
        const auto seed = first_seed + static_cast<std::uint64_t>(t);
        Rng rng(seed * 7919 + 17);
        GradCheckResult g;
        // Central differences are no oracle across a kink (ReLU, min/max,
        // hinge), so such instances are redrawn from the same stream.
        for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
            if (name == "focal") {
                g = focal_trial(rng);
            } else if (name == "point_box") {
                g = point_box_trial(rng);
            } else if (name == "triplet") {
                g = triplet_trial(rng);
            } else {
                g = joint_trial(rng, seed + 1000003ull * static_cast<std::uint64_t>(attempt));
            }
            if (g.nonsmooth == 0) break;
            ++r.redrawn;
        }
        ++r.trials;
        if (!(g.relative_error < tolerance)) ++r.failures;
        if (r.worst_seed < 0 || !(g.relative_error <= r.max_relative_error)) {
            r.max_relative_error = g.relative_error;
            r.worst_seed = static_cast<std::int64_t>(seed);
        }
    }
    return r;
}

std::vector<BenchRow> bench_variants(const BackboneConfig& config, Index3 input, std::int64_t repeats) {
    using p3dc::Variant;
    std::vector<BenchRow> rows;
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(config.in_channels * input[0] * input[1] * input[2]));
    for (auto& x : v) x = n(rng);
    const auto volume = Tensor<float>::from({1, config.in_channels, input[0], input[1], input[2]}, std::move(v));
    for (auto variant : {Variant::Slicewise, Variant::I3D, Variant::ST3D, Variant::ACS3D}) {
        auto c = config;
        c.p3dc_variant = variant;
        Detector<float> det(c);
        BenchRow row{variant, det.parameter_count(), det.block_parameter_count(2), det.flops(input), 0.0};
        std::vector<double> ms;
        NoTapeScope<float> no_tape;
        for (std::int64_t r = 0; r < repeats; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            auto out = det.forward(volume);
            ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        }
        if (!ms.empty()) {
            std::sort(ms.begin(), ms.end());
            row.median_ms = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
        }
        rows.push_back(row);
    }
    return rows;
}

std::string format_bench(const std::vector<BenchRow>& rows, Index3 input) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "input %lldx%lldx%lld\n%-10s %12s %14s %16s %12s\n", static_cast<long long>(input[0]),
                  static_cast<long long>(input[1]), static_cast<long long>(input[2]), "variant", "params",
                  "block3_params", "flops", "median_ms");
    std::string out = buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-10s %12lld %14lld %16lld %12.2f\n", p3dc::to_string(r.variant).c_str(),
                      static_cast<long long>(r.params), static_cast<long long>(r.block3_params),
                      static_cast<long long>(r.flops), r.median_ms);
        out += buf;
    }
    return out;
}

}  // namespace vuld
