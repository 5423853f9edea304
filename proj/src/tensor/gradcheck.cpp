#include "vuld/tensor/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace vuld {

GradCheckResult check_gradients(const ScalarFn& fn, std::vector<Tensor<double>> inputs, double step,
                                const std::vector<std::pair<std::size_t, std::int64_t>>& coordinates,
                                double kink_tolerance) {
    std::vector<std::pair<std::size_t, std::int64_t>> coords = coordinates;
    if (coords.empty()) {
        for (std::size_t i = 0; i < inputs.size(); ++i)
            for (std::int64_t j = 0; j < inputs[i].numel(); ++j) coords.emplace_back(i, j);
    }
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }

    std::vector<double> analytic;
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        auto loss = fn(inputs);
        tape.backward(loss);
        for (auto [i, j] : coords) {
            analytic.push_back(inputs[i].has_grad() ? inputs[i].grad()[static_cast<std::size_t>(j)] : 0.0);
        }
    }

    GradCheckResult r;
    std::vector<double> numeric;
    {
        NoTapeScope<double> off;
        const double f0 = fn(inputs).item();
        for (auto [i, j] : coords) {
            auto data = inputs[i].mutable_data();
            const double saved = data[static_cast<std::size_t>(j)];
            auto at = [&](double t) {
                data[static_cast<std::size_t>(j)] = saved + t * step;
                return fn(inputs).item();
            };
            const std::array<double, 5> f{at(-1.0), at(-0.5), f0, at(0.5), at(1.0)};
            data[static_cast<std::size_t>(j)] = saved;
            numeric.push_back((f[4] - f[0]) / (2.0 * step));
            // A kink inside [-h, h] leaves a third difference of order
            // |slope jump| * h; on a smooth function it is O(h^3).
            const double s1 = f[0] - 2 * f[1] + f[2], s2 = f[1] - 2 * f[2] + f[3], s3 = f[2] - 2 * f[3] + f[4];
            const double third = std::max(std::fabs(s2 - s1), std::fabs(s3 - s2));
            if (third > kink_tolerance * step * std::max(1.0, std::fabs(f0))) ++r.nonsmooth;
        }
    }

    r.checked = coords.size();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < coords.size(); ++k) {
        diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
        na += analytic[k] * analytic[k];
        nn += numeric[k] * numeric[k];
    }
    r.analytic_norm = std::sqrt(na);
    r.numeric_norm = std::sqrt(nn);
    const double denom = std::max({r.analytic_norm, r.numeric_norm, 1e-12});
    r.relative_error = (r.analytic_norm == 0.0 && r.numeric_norm == 0.0) ? 0.0 : std::sqrt(diff) / denom;
    return r;
}

}  // namespace vuld
