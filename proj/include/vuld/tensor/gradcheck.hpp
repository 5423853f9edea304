#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "vuld/tensor/tensor.hpp"

namespace vuld {

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCheckResult {
    double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
    double analytic_norm = 0.0;
    double numeric_norm = 0.0;
    std::size_t checked = 0;
    std::size_t nonsmooth = 0;  // coordinates with a kink inside [-h, h]
};

/// Compares reverse-mode gradients of `fn` against central differences.
/// When `coordinates` is empty every element of every input is checked;
/// otherwise only the listed (input index, flat element) pairs. A
/// coordinate counts as nonsmooth when the third differences of f on
/// {-h, -h/2, 0, h/2, h} exceed kink_tolerance * h * max(1, |f|).
GradCheckResult check_gradients(const ScalarFn& fn, std::vector<Tensor<double>> inputs, double step = 1e-5,
                                const std::vector<std::pair<std::size_t, std::int64_t>>& coordinates = {},
                                double kink_tolerance = 1e-6);

}  // namespace vuld
