#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vuld/detector/detector.hpp"

namespace vuld {

struct GradSuiteResult {
    std::string name;
    std::int64_t trials = 0;
    std::int64_t failures = 0;
    double max_relative_error = 0.0;
    std::int64_t worst_seed = -1;
    double tolerance = 0.0;
    std::int64_t redrawn = 0;  // instances replaced because they sat on a kink

    bool passed() const { return failures == 0; }
};

/// Names accepted by run_gradient_suite.
const std::vector<std::string>& gradient_suite_names();

/// Float64 finite-difference checks (h = 1e-5) of one loss over `trials`
/// seeded random instances: "focal", "point_box", "triplet" or "joint"
/// (the full detector objective, 20 sampled weights per trial).
GradSuiteResult run_gradient_suite(const std::string& name, std::int64_t trials, double tolerance = 1e-4,
                                   std::uint64_t first_seed = 0);

struct BenchRow {
    p3dc::Variant variant;
    std::int64_t params = 0;
    std::int64_t block3_params = 0;
    std::int64_t flops = 0;
    double median_ms = 0.0;
};

/// Builds every backbone variant from `config` and measures parameters,
/// analytic forward FLOPs at input [C, D, H, W] and median forward time.
std::vector<BenchRow> bench_variants(const BackboneConfig& config, Index3 input, std::int64_t repeats);
std::string format_bench(const std::vector<BenchRow>& rows, Index3 input);

}  // namespace vuld
