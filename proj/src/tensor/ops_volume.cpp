#include <algorithm>
#include <cmath>
#include <limits>

#include "vuld/tensor/ops.hpp"

namespace vuld {

namespace {

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

constexpr std::int64_t kColumnBlock = 512;

struct ConvGeometry {
    std::int64_t n, c, d, h, w;
    std::int64_t co, kd, kh, kw;
    Index3 stride, pad;
    std::int64_t od, oh, ow;

    std::int64_t rows() const { return c * kd * kh * kw; }
    std::int64_t cols() const { return od * oh * ow; }
    std::int64_t in_volume() const { return d * h * w; }
    bool pointwise() const {
        return kd == 1 && kh == 1 && kw == 1 && stride == Index3{1, 1, 1} && pad == Index3{0, 0, 0};
    }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& k, Index3 stride, Index3 pad) {
    if (in.size() != 5) throw DimensionError("conv3d: input must be [N, C, D, H, W], got " + shape_string(in));
    if (k.size() != 5) throw DimensionError("conv3d: kernel must be [Co, Ci, Kd, Kh, Kw], got " + shape_string(k));
    if (k[1] != in[1]) {
        throw DimensionError("conv3d: kernel expects " + std::to_string(k[1]) + " input channels, input has " +
                             std::to_string(in[1]));
    }
    for (int a = 0; a < 3; ++a) {
        if (stride[a] < 1) throw GeometryError("conv3d: stride must be >= 1");
        if (pad[a] < 0) throw GeometryError("conv3d: negative padding");
    }
    ConvGeometry g{in[0], in[1], in[2], in[3], in[4], k[0], k[2], k[3], k[4], stride, pad, 0, 0, 0};
    const std::int64_t dims[3] = {g.d, g.h, g.w};
    const std::int64_t ks[3] = {g.kd, g.kh, g.kw};
    std::int64_t outs[3];
    for (int a = 0; a < 3; ++a) {
        const auto padded = dims[a] + 2 * pad[a];
        if (ks[a] > padded || padded <= 0) {
            throw GeometryError("conv3d: kernel " + shape_string(k) + " exceeds padded input " + shape_string(in));
        }
        outs[a] = (padded - ks[a]) / stride[a] + 1;
    }
    g.od = outs[0];
    g.oh = outs[1];
    g.ow = outs[2];
    if (g.n == 0 || g.cols() == 0 || g.co == 0) throw GeometryError("conv3d: zero-size output");
    return g;
}

template <typename T>
void im2col(const ConvGeometry& g, const T* in, T* col) {
    const auto P = g.cols();
    for (std::int64_t ci = 0; ci < g.c; ++ci)
        for (std::int64_t a = 0; a < g.kd; ++a)
            for (std::int64_t b = 0; b < g.kh; ++b)
                for (std::int64_t e = 0; e < g.kw; ++e) {
                    const auto r = ((ci * g.kd + a) * g.kh + b) * g.kw + e;
                    T* row = col + r * P;
                    for (std::int64_t z = 0; z < g.od; ++z) {
                        const auto iz = z * g.stride[0] - g.pad[0] + a;
                        for (std::int64_t y = 0; y < g.oh; ++y) {
                            const auto iy = y * g.stride[1] - g.pad[1] + b;
                            T* dst = row + (z * g.oh + y) * g.ow;
                            if (iz < 0 || iz >= g.d || iy < 0 || iy >= g.h) {
                                std::fill(dst, dst + g.ow, T(0));
                                continue;
                            }
                            const T* src = in + ((ci * g.d + iz) * g.h + iy) * g.w;
                            for (std::int64_t x = 0; x < g.ow; ++x) {
                                const auto ix = x * g.stride[2] - g.pad[2] + e;
                                dst[x] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
                            }
                        }
                    }
                }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* in) {
    const auto P = g.cols();
    for (std::int64_t ci = 0; ci < g.c; ++ci)
        for (std::int64_t a = 0; a < g.kd; ++a)
            for (std::int64_t b = 0; b < g.kh; ++b)
                for (std::int64_t e = 0; e < g.kw; ++e) {
                    const auto r = ((ci * g.kd + a) * g.kh + b) * g.kw + e;
                    const T* row = col + r * P;
                    for (std::int64_t z = 0; z < g.od; ++z) {
                        const auto iz = z * g.stride[0] - g.pad[0] + a;
                        if (iz < 0 || iz >= g.d) continue;
                        for (std::int64_t y = 0; y < g.oh; ++y) {
                            const auto iy = y * g.stride[1] - g.pad[1] + b;
                            if (iy < 0 || iy >= g.h) continue;
                            const T* src = row + (z * g.oh + y) * g.ow;
                            T* dst = in + ((ci * g.d + iz) * g.h + iy) * g.w;
                            for (std::int64_t x = 0; x < g.ow; ++x) {
                                const auto ix = x * g.stride[2] - g.pad[2] + e;
                                if (ix >= 0 && ix < g.w) dst[ix] += src[x];
                            }
                        }
                    }
                }
}

// Fixed-order dot product with eight interleaved partial sums.
template <typename T>
T dot(const T* a, const T* b, std::int64_t n) {
    T acc[8] = {};
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// out[Co, P] += W[Co, R] * col[R, P]
template <typename T>
void gemm_forward(const T* w, const T* col, T* out, std::int64_t Co, std::int64_t R, std::int64_t P) {
    for (std::int64_t p0 = 0; p0 < P; p0 += kColumnBlock) {
        const auto len = std::min(kColumnBlock, P - p0);
        for (std::int64_t o = 0; o < Co; ++o) {
            T* dst = out + o * P + p0;
            const T* wr = w + o * R;
            for (std::int64_t r = 0; r < R; ++r) {
                const T a = wr[r];
                const T* src = col + r * P + p0;
                for (std::int64_t p = 0; p < len; ++p) dst[p] += a * src[p];
            }
        }
    }
}

// dW[Co, R] += dOut[Co, P] * col[R, P]^T
template <typename T>
void gemm_weight_grad(const T* dout, const T* col, T* dw, std::int64_t Co, std::int64_t R, std::int64_t P) {
    for (std::int64_t p0 = 0; p0 < P; p0 += kColumnBlock) {
        const auto len = std::min(kColumnBlock, P - p0);
        for (std::int64_t o = 0; o < Co; ++o) {
            const T* g = dout + o * P + p0;
            T* dst = dw + o * R;
            for (std::int64_t r = 0; r < R; ++r) dst[r] += dot(g, col + r * P + p0, len);
        }
    }
}

// dCol[R, P] += W[Co, R]^T * dOut[Co, P]
template <typename T>
void gemm_input_grad(const T* w, const T* dout, T* dcol, std::int64_t Co, std::int64_t R, std::int64_t P) {
    for (std::int64_t p0 = 0; p0 < P; p0 += kColumnBlock) {
        const auto len = std::min(kColumnBlock, P - p0);
        for (std::int64_t r = 0; r < R; ++r) {
            T* dst = dcol + r * P + p0;
            for (std::int64_t o = 0; o < Co; ++o) {
                const T a = w[o * R + r];
                const T* g = dout + o * P + p0;
                for (std::int64_t p = 0; p < len; ++p) dst[p] += a * g[p];
            }
        }
    }
}

void check_5d(const Shape& s, const char* name) {
    if (s.size() != 5) throw DimensionError(std::string(name) + ": expected [N, C, D, H, W], got " + shape_string(s));
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& kernel, std::type_identity_t<const Tensor<T>*> bias,
                 Index3 stride, Index3 padding) {
    const auto g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
    if (bias != nullptr && (bias->rank() != 1 || bias->dim(0) != g.co)) {
        throw DimensionError("conv3d: bias must be [Co]");
    }
    auto out = detail::make_output<T>({g.n, g.co, g.od, g.oh, g.ow});
    const auto R = g.rows(), P = g.cols();
    std::vector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(R * P));
    T* o = out.mutable_data().data();
    for (std::int64_t b = 0; b < g.n; ++b) {
        const T* in = input.data().data() + b * g.c * g.in_volume();
        const T* cols = in;
        if (!g.pointwise()) {
            im2col(g, in, col.data());
            cols = col.data();
        }
        T* ob = o + b * g.co * P;
        if (bias != nullptr) {
            for (std::int64_t c = 0; c < g.co; ++c) std::fill(ob + c * P, ob + (c + 1) * P, bias->data()[c]);
        }
        gemm_forward(kernel.data().data(), cols, ob, g.co, R, P);
    }
    detail::check_finite(out.data(), "conv3d");

    if (auto* tape = detail::recording_tape<T>({&input, &kernel, bias})) {
        ImplPtr<T> x = input.impl(), k = kernel.impl(), y = out.impl();
        ImplPtr<T> bi = bias ? bias->impl() : nullptr;
        tape->record(out, [x, k, bi, y, g] {
            if (y->grad.empty()) return;
            const auto R = g.rows(), P = g.cols();
            std::vector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(R * P));
            std::vector<T> dcol;
            for (std::int64_t b = 0; b < g.n; ++b) {
                const T* dout = y->grad.data() + b * g.co * P;
                if (bi && bi->requires_grad) {
                    auto& gb = bi->grad_buffer();
                    for (std::int64_t c = 0; c < g.co; ++c) {
                        T s = 0;
                        for (std::int64_t p = 0; p < P; ++p) s += dout[c * P + p];
                        gb[c] += s;
                    }
                }
                const T* in = x->data.data() + b * g.c * g.in_volume();
                if (k->requires_grad) {
                    const T* cols = in;
                    if (!g.pointwise()) {
                        im2col(g, in, col.data());
                        cols = col.data();
                    }
                    gemm_weight_grad(dout, cols, k->grad_buffer().data(), g.co, R, P);
                }
                if (x->requires_grad) {
                    T* din = x->grad_buffer().data() + b * g.c * g.in_volume();
                    if (g.pointwise()) {
                        gemm_input_grad(k->data.data(), dout, din, g.co, R, P);
                    } else {
                        dcol.assign(static_cast<std::size_t>(R * P), T(0));
                        gemm_input_grad(k->data.data(), dout, dcol.data(), g.co, R, P);
                        col2im(g, dcol.data(), din);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ArgumentError("concat_channels: no inputs");
    Shape shape = parts.front().shape();
    check_5d(shape, "concat_channels");
    std::int64_t channels = 0;
    for (const auto& p : parts) {
        check_5d(p.shape(), "concat_channels");
        const auto& s = p.shape();
        if (s[0] != shape[0] || s[2] != shape[2] || s[3] != shape[3] || s[4] != shape[4]) {
            throw GeometryError("concat_channels: spatial/batch mismatch " + shape_string(s) + " vs " +
                                shape_string(shape));
        }
        channels += s[1];
    }
    const auto n = shape[0];
    const auto vol = shape[2] * shape[3] * shape[4];
    shape[1] = channels;
    auto out = detail::make_output<T>(shape);
    T* o = out.mutable_data().data();
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const auto c = p.dim(1);
        for (std::int64_t b = 0; b < n; ++b) {
            std::copy_n(p.data().data() + b * c * vol, c * vol, o + (b * channels + off) * vol);
        }
        off += c;
    }
    Tape<T>* tape = nullptr;
    for (const auto& p : parts)
        if (!tape) tape = detail::recording_tape<T>({&p});
    if (tape) {
        std::vector<ImplPtr<T>> xs;
        for (const auto& p : parts) xs.push_back(p.impl());
        ImplPtr<T> y = out.impl();
        tape->record(out, [xs, y, offsets, n, vol, channels] {
            if (y->grad.empty()) return;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (!xs[i]->requires_grad) continue;
                const auto c = xs[i]->shape[1];
                auto& g = xs[i]->grad_buffer();
                for (std::int64_t b = 0; b < n; ++b) {
                    const T* src = y->grad.data() + (b * channels + offsets[i]) * vol;
                    T* dst = g.data() + b * c * vol;
                    for (std::int64_t j = 0; j < c * vol; ++j) dst[j] += src[j];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> avgpool3d(const Tensor<T>& input, Index3 window) {
    check_5d(input.shape(), "avgpool3d");
    const auto& s = input.shape();
    for (int a = 0; a < 3; ++a) {
        if (window[a] < 1 || s[2 + a] % window[a] != 0) {
            throw GeometryError("avgpool3d: window does not tile input " + shape_string(s));
        }
    }
    const auto nc = s[0] * s[1];
    const auto D = s[2], H = s[3], W = s[4];
    const auto od = D / window[0], oh = H / window[1], ow = W / window[2];
    auto out = detail::make_output<T>({s[0], s[1], od, oh, ow});
    const T inv = T(1) / static_cast<T>(window[0] * window[1] * window[2]);
    T* o = out.mutable_data().data();
    const T* in = input.data().data();
    for (std::int64_t q = 0; q < nc; ++q)
        for (std::int64_t z = 0; z < od; ++z)
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x) {
                    T acc = 0;
                    for (std::int64_t a = 0; a < window[0]; ++a)
                        for (std::int64_t b = 0; b < window[1]; ++b)
                            for (std::int64_t c = 0; c < window[2]; ++c)
                                acc += in[((q * D + z * window[0] + a) * H + y * window[1] + b) * W + x * window[2] + c];
                    o[((q * od + z) * oh + y) * ow + x] = acc * inv;
                }
    if (auto* tape = detail::recording_tape<T>({&input})) {
        ImplPtr<T> xi = input.impl(), yo = out.impl();
        tape->record(out, [xi, yo, window, nc, D, H, W, od, oh, ow, inv] {
            if (yo->grad.empty() || !xi->requires_grad) return;
            auto& g = xi->grad_buffer();
            for (std::int64_t q = 0; q < nc; ++q)
                for (std::int64_t z = 0; z < od; ++z)
                    for (std::int64_t y = 0; y < oh; ++y)
                        for (std::int64_t x = 0; x < ow; ++x) {
                            const T v = yo->grad[((q * od + z) * oh + y) * ow + x] * inv;
                            for (std::int64_t a = 0; a < window[0]; ++a)
                                for (std::int64_t b = 0; b < window[1]; ++b)
                                    for (std::int64_t c = 0; c < window[2]; ++c)
                                        g[((q * D + z * window[0] + a) * H + y * window[1] + b) * W + x * window[2] +
                                          c] += v;
                        }
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, Index3 factors) {
    check_5d(input.shape(), "upsample_nearest");
    for (auto f : factors)
        if (f < 1) throw GeometryError("upsample_nearest: factors must be >= 1");
    const auto& s = input.shape();
    const auto nc = s[0] * s[1];
    const auto D = s[2], H = s[3], W = s[4];
    const auto od = D * factors[0], oh = H * factors[1], ow = W * factors[2];
    auto out = detail::make_output<T>({s[0], s[1], od, oh, ow});
    T* o = out.mutable_data().data();
    const T* in = input.data().data();
    for (std::int64_t q = 0; q < nc; ++q)
        for (std::int64_t z = 0; z < od; ++z)
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x)
                    o[((q * od + z) * oh + y) * ow + x] =
                        in[((q * D + z / factors[0]) * H + y / factors[1]) * W + x / factors[2]];
    if (auto* tape = detail::recording_tape<T>({&input})) {
        ImplPtr<T> xi = input.impl(), yo = out.impl();
        tape->record(out, [xi, yo, factors, nc, D, H, W, od, oh, ow] {
            if (yo->grad.empty() || !xi->requires_grad) return;
            auto& g = xi->grad_buffer();
            for (std::int64_t q = 0; q < nc; ++q)
                for (std::int64_t z = 0; z < od; ++z)
                    for (std::int64_t y = 0; y < oh; ++y)
                        for (std::int64_t x = 0; x < ow; ++x)
                            g[((q * D + z / factors[0]) * H + y / factors[1]) * W + x / factors[2]] +=
                                yo->grad[((q * od + z) * oh + y) * ow + x];
        });
    }
    return out;
}

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& input) {
    check_5d(input.shape(), "maxpool3d");
    const auto& s = input.shape();
    const auto nc = s[0] * s[1];
    const auto D = s[2], H = s[3], W = s[4];
    auto out = detail::make_output<T>(s);
    T* o = out.mutable_data().data();
    const T* in = input.data().data();
    for (std::int64_t q = 0; q < nc; ++q)
        for (std::int64_t z = 0; z < D; ++z)
            for (std::int64_t y = 0; y < H; ++y)
                for (std::int64_t x = 0; x < W; ++x) {
                    T m = -std::numeric_limits<T>::infinity();
                    for (auto a = std::max<std::int64_t>(z - 1, 0); a <= std::min(z + 1, D - 1); ++a)
                        for (auto b = std::max<std::int64_t>(y - 1, 0); b <= std::min(y + 1, H - 1); ++b)
                            for (auto c = std::max<std::int64_t>(x - 1, 0); c <= std::min(x + 1, W - 1); ++c)
                                m = std::max(m, in[((q * D + a) * H + b) * W + c]);
                    o[((q * D + z) * H + y) * W + x] = m;
                }
    return out;
}

template <typename T>
Tensor<T> gather_cell(const Tensor<T>& map, std::int64_t z, std::int64_t y, std::int64_t x) {
    check_5d(map.shape(), "gather_cell");
    const auto& s = map.shape();
    if (s[0] != 1) throw DimensionError("gather_cell: batch size must be 1");
    if (z < 0 || z >= s[2] || y < 0 || y >= s[3] || x < 0 || x >= s[4]) {
        throw ArgumentError("gather_cell: cell outside grid");
    }
    const auto C = s[1];
    const auto vol = s[2] * s[3] * s[4];
    const auto base = (z * s[3] + y) * s[4] + x;
    auto out = detail::make_output<T>({C});
    for (std::int64_t c = 0; c < C; ++c) out.mutable_data()[c] = map.data()[c * vol + base];
    if (auto* tape = detail::recording_tape<T>({&map})) {
        ImplPtr<T> xi = map.impl(), yo = out.impl();
        tape->record(out, [xi, yo, C, vol, base] {
            if (yo->grad.empty() || !xi->requires_grad) return;
            auto& g = xi->grad_buffer();
            for (std::int64_t c = 0; c < C; ++c) g[c * vol + base] += yo->grad[c];
        });
    }
    return out;
}

namespace {

struct AxisInterp {
    std::int64_t i0, i1;
    double frac;
    bool inside;  // coordinate inside [0, n - 1], so it carries gradient
};

AxisInterp axis_interp(double coord, std::int64_t n) {
    AxisInterp a{};
    const double hi = static_cast<double>(n - 1);
    a.inside = coord >= 0.0 && coord <= hi && n > 1;
    const double c = std::clamp(coord, 0.0, hi);
    if (n == 1) return {0, 0, 0.0, false};
    auto i0 = static_cast<std::int64_t>(std::floor(c));
    i0 = std::min(i0, n - 2);
    a.i0 = i0;
    a.i1 = i0 + 1;
    a.frac = c - static_cast<double>(i0);
    return a;
}

}  // namespace

template <typename T>
Tensor<T> trilinear_sample(const Tensor<T>& feature, const Tensor<T>& points) {
    const auto& fs = feature.shape();
    Shape s;
    if (fs.size() == 5 && fs[0] == 1) {
        s = {fs[1], fs[2], fs[3], fs[4]};
    } else if (fs.size() == 4) {
        s = fs;
    } else {
        throw DimensionError("trilinear_sample: feature must be [C, D, H, W] or [1, C, D, H, W]");
    }
    if (points.rank() != 2 || points.dim(1) != 3) throw DimensionError("trilinear_sample: points must be [K, 3]");
    const auto K = points.dim(0);
    if (K < 1) throw ArgumentError("trilinear_sample: empty point list");
    const auto C = s[0], D = s[1], H = s[2], W = s[3];
    const auto vol = D * H * W;

    struct Sample {
        AxisInterp x, y, z;
    };
    std::vector<Sample> samples(static_cast<std::size_t>(K));
    auto out = detail::make_output<T>({K, C});
    const T* f = feature.data().data();
    T* o = out.mutable_data().data();
    for (std::int64_t k = 0; k < K; ++k) {
        const T* p = points.data().data() + k * 3;
        if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
            throw DomainError("trilinear_sample: non-finite point");
        }
        auto& sm = samples[static_cast<std::size_t>(k)];
        sm = {axis_interp(p[0], W), axis_interp(p[1], H), axis_interp(p[2], D)};
        const T fx = static_cast<T>(sm.x.frac), fy = static_cast<T>(sm.y.frac), fz = static_cast<T>(sm.z.frac);
        const T wx[2] = {T(1) - fx, fx}, wy[2] = {T(1) - fy, fy}, wz[2] = {T(1) - fz, fz};
        const std::int64_t ix[2] = {sm.x.i0, sm.x.i1}, iy[2] = {sm.y.i0, sm.y.i1}, iz[2] = {sm.z.i0, sm.z.i1};
        for (std::int64_t c = 0; c < C; ++c) {
            T acc = 0;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    for (int e = 0; e < 2; ++e)
                        acc += wz[a] * wy[b] * wx[e] * f[c * vol + (iz[a] * H + iy[b]) * W + ix[e]];
            o[k * C + c] = acc;
        }
    }
    if (auto* tape = detail::recording_tape<T>({&feature, &points})) {
        ImplPtr<T> fi = feature.impl(), pi = points.impl(), yo = out.impl();
        tape->record(out, [fi, pi, yo, samples, K, C, H, W, vol] {
            if (yo->grad.empty()) return;
            const T* f = fi->data.data();
            for (std::int64_t k = 0; k < K; ++k) {
                const auto& sm = samples[static_cast<std::size_t>(k)];
                const T fx = static_cast<T>(sm.x.frac), fy = static_cast<T>(sm.y.frac),
                        fz = static_cast<T>(sm.z.frac);
                const T wx[2] = {T(1) - fx, fx}, wy[2] = {T(1) - fy, fy}, wz[2] = {T(1) - fz, fz};
                const T sx[2] = {T(-1), T(1)};
                const std::int64_t ix[2] = {sm.x.i0, sm.x.i1}, iy[2] = {sm.y.i0, sm.y.i1},
                                   iz[2] = {sm.z.i0, sm.z.i1};
                const T* go = yo->grad.data() + k * C;
                if (fi->requires_grad) {
                    auto& g = fi->grad_buffer();
                    for (std::int64_t c = 0; c < C; ++c)
                        for (int a = 0; a < 2; ++a)
                            for (int b = 0; b < 2; ++b)
                                for (int e = 0; e < 2; ++e)
                                    g[c * vol + (iz[a] * H + iy[b]) * W + ix[e]] += go[c] * wz[a] * wy[b] * wx[e];
                }
                if (pi->requires_grad) {
                    T dx = 0, dy = 0, dz = 0;
                    for (std::int64_t c = 0; c < C; ++c) {
                        for (int a = 0; a < 2; ++a)
                            for (int b = 0; b < 2; ++b)
                                for (int e = 0; e < 2; ++e) {
                                    const T v = go[c] * f[c * vol + (iz[a] * H + iy[b]) * W + ix[e]];
                                    dx += v * wz[a] * wy[b] * sx[e];
                                    dy += v * wz[a] * sx[b] * wx[e];
                                    dz += v * sx[a] * wy[b] * wx[e];
                                }
                    }
                    auto& g = pi->grad_buffer();
                    if (sm.x.inside) g[k * 3 + 0] += dx;
                    if (sm.y.inside) g[k * 3 + 1] += dy;
                    if (sm.z.inside) g[k * 3 + 2] += dz;
                }
            }
        });
    }
    return out;
}

#define VULD_INSTANTIATE(T)                                                                              \
    template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, Index3, Index3);     \
    template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                                    \
    template Tensor<T> avgpool3d(const Tensor<T>&, Index3);                                              \
    template Tensor<T> upsample_nearest(const Tensor<T>&, Index3);                                       \
    template Tensor<T> maxpool3d(const Tensor<T>&);                                                      \
    template Tensor<T> gather_cell(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t);          \
    template Tensor<T> trilinear_sample(const Tensor<T>&, const Tensor<T>&);

VULD_INSTANTIATE(float)
VULD_INSTANTIATE(double)

}  // namespace vuld
