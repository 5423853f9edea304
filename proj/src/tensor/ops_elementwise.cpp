#include <algorithm>
#include <cmath>

#include "vuld/tensor/ops.hpp"

namespace vuld {

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

// y = f(x); dx += dy * d(x, y)
template <typename T, typename Forward, typename Derivative>
Tensor<T> unary(const Tensor<T>& a, const char* name, Forward f, Derivative d) {
    auto out = detail::make_output<T>(a.shape());
    auto in = a.data();
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
    detail::check_finite(std::span<const T>(o), name);
    if (auto* tape = detail::recording_tape<T>({&a})) {
        ImplPtr<T> x = a.impl(), y = out.impl();
        tape->record(out, [x, y, d] {
            if (y->grad.empty() || !x->requires_grad) return;
            auto& gx = x->grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += y->grad[i] * d(x->data[i], y->data[i]);
        });
    }
    return out;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* name) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(name) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

// z = f(x, y); dx += dz * dfx(x, y), dy += dz * dfy(x, y)
template <typename T, typename Forward, typename DX, typename DY>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, Forward f, DX dfx, DY dfy) {
    check_same_shape(a, b, name);
    auto out = detail::make_output<T>(a.shape());
    auto xa = a.data();
    auto xb = b.data();
    auto o = out.mutable_data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(xa[i], xb[i]);
    detail::check_finite(std::span<const T>(o), name);
    if (auto* tape = detail::recording_tape<T>({&a, &b})) {
        ImplPtr<T> x = a.impl(), y = b.impl(), z = out.impl();
        tape->record(out, [x, y, z, dfx, dfy] {
            if (z->grad.empty()) return;
            if (x->requires_grad) {
                auto& g = x->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += z->grad[i] * dfx(x->data[i], y->data[i]);
            }
            if (y->requires_grad) {
                auto& g = y->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += z->grad[i] * dfy(x->data[i], y->data[i]);
            }
        });
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary<T>(
        a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary<T>(
        a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary<T>(
        a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return unary<T>(
        a, "scale", [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
    return unary<T>(
        a, "add_scalar", [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return scale(a, T(-1));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary<T>(
        a, "sigmoid",
        [](T x) {
            if (x >= 0) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    for (T x : a.data()) {
        if (!(x > 0)) throw DomainError("log: input must be strictly positive");
    }
    return unary<T>(
        a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> pow(const Tensor<T>& a, T exponent) {
    return unary<T>(
        a, "pow", [exponent](T x) { return std::pow(x, exponent); },
        [exponent](T x, T) {
            if (exponent == T(0)) return T(0);
            return exponent * std::pow(x, exponent - T(1));
        });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    return unary<T>(
        a, "abs", [](T x) { return std::abs(x); },
        [](T x, T) { return x > 0 ? T(1) : (x < 0 ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary<T>(
        a, "relu", [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    if (lo > hi) throw ArgumentError("clamp: lo > hi");
    return unary<T>(
        a, "clamp", [lo, hi](T x) { return std::clamp(x, lo, hi); },
        [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
    }
    auto out = Tensor<T>::from(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()));
    if (auto* tape = detail::recording_tape<T>({&a})) {
        ImplPtr<T> x = a.impl(), y = out.impl();
        tape->record(out, [x, y] {
            if (y->grad.empty() || !x->requires_grad) return;
            x->accumulate_grad(y->grad);
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = 0;
    for (T x : a.data()) acc += x;
    auto out = Tensor<T>::scalar(acc);
    detail::check_finite(out.data(), "sum");
    if (auto* tape = detail::recording_tape<T>({&a})) {
        ImplPtr<T> x = a.impl(), y = out.impl();
        tape->record(out, [x, y] {
            if (y->grad.empty() || !x->requires_grad) return;
            const T g = y->grad[0];
            auto& gx = x->grad_buffer();
            for (auto& v : gx) v += g;
        });
    }
    return out;
}

template <typename T>
MinMax<T> reduce_min_max(const Tensor<T>& values) {
    if (values.rank() != 1) throw DimensionError("reduce_min_max: expected rank-1 input");
    if (values.numel() == 0) throw ArgumentError("reduce_min_max: empty input");
    auto v = values.data();
    std::int64_t lo = 0, hi = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] < v[static_cast<std::size_t>(lo)]) lo = static_cast<std::int64_t>(i);
        if (v[i] > v[static_cast<std::size_t>(hi)]) hi = static_cast<std::int64_t>(i);
    }
    MinMax<T> r;
    r.argmin = lo;
    r.argmax = hi;
    r.min = Tensor<T>::scalar(v[static_cast<std::size_t>(lo)]);
    r.max = Tensor<T>::scalar(v[static_cast<std::size_t>(hi)]);
    if (auto* tape = detail::recording_tape<T>({&values})) {
        ImplPtr<T> x = values.impl();
        for (auto [outp, idx] : {std::pair{r.min.impl(), lo}, std::pair{r.max.impl(), hi}}) {
            tape->record(Tensor<T>(outp), [x, y = outp, idx] {
                if (y->grad.empty() || !x->requires_grad) return;
                x->grad_buffer()[static_cast<std::size_t>(idx)] += y->grad[0];
            });
        }
    }
    return r;
}

template <typename T>
Tensor<T> select_column(const Tensor<T>& a, std::int64_t column) {
    if (a.rank() != 2) throw DimensionError("select_column: expected [n, m]");
    const auto n = a.dim(0), m = a.dim(1);
    if (column < 0 || column >= m) throw ArgumentError("select_column: column out of range");
    auto out = detail::make_output<T>({n});
    auto o = out.mutable_data();
    for (std::int64_t i = 0; i < n; ++i) o[i] = a.data()[i * m + column];
    if (auto* tape = detail::recording_tape<T>({&a})) {
        ImplPtr<T> x = a.impl(), y = out.impl();
        tape->record(out, [x, y, n, m, column] {
            if (y->grad.empty() || !x->requires_grad) return;
            auto& g = x->grad_buffer();
            for (std::int64_t i = 0; i < n; ++i) g[i * m + column] += y->grad[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> affine_columns(const Tensor<T>& a, const std::array<T, 3>& scales, const std::array<T, 3>& shifts) {
    if (a.rank() != 2 || a.dim(1) != 3) throw DimensionError("affine_columns: expected [n, 3]");
    const auto n = a.dim(0);
    auto out = detail::make_output<T>(a.shape());
    auto o = out.mutable_data();
    for (std::int64_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) o[i * 3 + c] = a.data()[i * 3 + c] * scales[c] + shifts[c];
    detail::check_finite(std::span<const T>(o), "affine_columns");
    if (auto* tape = detail::recording_tape<T>({&a})) {
        ImplPtr<T> x = a.impl(), y = out.impl();
        tape->record(out, [x, y, n, scales] {
            if (y->grad.empty() || !x->requires_grad) return;
            auto& g = x->grad_buffer();
            for (std::int64_t i = 0; i < n; ++i)
                for (int c = 0; c < 3; ++c) g[i * 3 + c] += y->grad[i * 3 + c] * scales[c];
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub_row(const Tensor<T>& rows, const Tensor<T>& row) {
    if (rows.rank() != 2 || row.rank() != 1 || rows.dim(1) != row.dim(0)) {
        throw DimensionError("sub_row: expected [k, c] and [c]");
    }
    const auto k = rows.dim(0), c = rows.dim(1);
    auto out = detail::make_output<T>(rows.shape());
    auto o = out.mutable_data();
    for (std::int64_t i = 0; i < k; ++i)
        for (std::int64_t j = 0; j < c; ++j) o[i * c + j] = rows.data()[i * c + j] - row.data()[j];
    if (auto* tape = detail::recording_tape<T>({&rows, &row})) {
        ImplPtr<T> x = rows.impl(), v = row.impl(), y = out.impl();
        tape->record(out, [x, v, y, k, c] {
            if (y->grad.empty()) return;
            if (x->requires_grad) x->accumulate_grad(y->grad);
            if (v->requires_grad) {
                auto& g = v->grad_buffer();
                for (std::int64_t i = 0; i < k; ++i)
                    for (std::int64_t j = 0; j < c; ++j) g[j] -= y->grad[i * c + j];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> row_norm(const Tensor<T>& rows) {
    if (rows.rank() != 2) throw DimensionError("row_norm: expected [k, c]");
    const auto k = rows.dim(0), c = rows.dim(1);
    auto out = detail::make_output<T>({k});
    auto o = out.mutable_data();
    for (std::int64_t i = 0; i < k; ++i) {
        T acc = 0;
        for (std::int64_t j = 0; j < c; ++j) acc += rows.data()[i * c + j] * rows.data()[i * c + j];
        o[i] = std::sqrt(acc);
    }
    detail::check_finite(std::span<const T>(o), "row_norm");
    if (auto* tape = detail::recording_tape<T>({&rows})) {
        ImplPtr<T> x = rows.impl(), y = out.impl();
        tape->record(out, [x, y, k, c] {
            if (y->grad.empty() || !x->requires_grad) return;
            auto& g = x->grad_buffer();
            for (std::int64_t i = 0; i < k; ++i) {
                const T norm = y->data[i];
                if (norm == T(0)) continue;
                const T s = y->grad[i] / norm;
                for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += s * x->data[i * c + j];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> outer_sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 1 || b.rank() != 1) throw DimensionError("outer_sub: expected rank-1 inputs");
    const auto n = a.dim(0), m = b.dim(0);
    auto out = detail::make_output<T>({n, m});
    auto o = out.mutable_data();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) o[i * m + j] = a.data()[i] - b.data()[j];
    if (auto* tape = detail::recording_tape<T>({&a, &b})) {
        ImplPtr<T> x = a.impl(), z = b.impl(), y = out.impl();
        tape->record(out, [x, z, y, n, m] {
            if (y->grad.empty()) return;
            if (x->requires_grad) {
                auto& g = x->grad_buffer();
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < m; ++j) g[i] += y->grad[i * m + j];
            }
            if (z->requires_grad) {
                auto& g = z->grad_buffer();
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < m; ++j) g[j] -= y->grad[i * m + j];
            }
        });
    }
    return out;
}

#define VULD_INSTANTIATE(T)                                                                             \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> scale(const Tensor<T>&, T);                                                      \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                 \
    template Tensor<T> neg(const Tensor<T>&);                                                           \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
    template Tensor<T> log(const Tensor<T>&);                                                           \
    template Tensor<T> pow(const Tensor<T>&, T);                                                        \
    template Tensor<T> abs(const Tensor<T>&);                                                           \
    template Tensor<T> relu(const Tensor<T>&);                                                          \
    template Tensor<T> clamp(const Tensor<T>&, T, T);                                                   \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                \
    template Tensor<T> sum(const Tensor<T>&);                                                           \
    template MinMax<T> reduce_min_max(const Tensor<T>&);                                                \
    template Tensor<T> select_column(const Tensor<T>&, std::int64_t);                                   \
    template Tensor<T> affine_columns(const Tensor<T>&, const std::array<T, 3>&, const std::array<T, 3>&); \
    template Tensor<T> sub_row(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> row_norm(const Tensor<T>&);                                                      \
    template Tensor<T> outer_sub(const Tensor<T>&, const Tensor<T>&);

VULD_INSTANTIATE(float)
VULD_INSTANTIATE(double)

}  // namespace vuld
