#include "vuld/p3dc/convert.hpp"

#include <algorithm>
#include <cctype>
#include <random>

namespace vuld::p3dc {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Slicewise: return "SLICEWISE";
        case Variant::I3D: return "I3D";
        case Variant::ST3D: return "ST3D";
        case Variant::ACS3D: return "ACS3D";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    std::string up;
    for (char c : name) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    for (auto v : {Variant::Slicewise, Variant::I3D, Variant::ST3D, Variant::ACS3D}) {
        if (to_string(v) == up) return v;
    }
    throw ArgumentError("unsupported P3DC variant '" + name + "'");
}

namespace {

template <typename T>
void check_weights(const Conv2DWeights<T>& w) {
    if (!w.kernel.defined() || w.kernel.rank() != 4 || w.kernel.dim(2) != w.kernel.dim(3) || w.kernel.dim(2) < 1) {
        throw DimensionError("Conv2DWeights: kernel must be [c_o, c_i, N, N] with N >= 1");
    }
    if (w.bias.defined() && (w.bias.rank() != 1 || w.bias.dim(0) != w.kernel.dim(0))) {
        throw DimensionError("Conv2DWeights: bias must be [c_o]");
    }
    if (w.stride < 1) throw ArgumentError("Conv2DWeights: stride must be >= 1");
}

template <typename T>
Tensor<T> as_param(Shape shape, std::vector<T> values) {
    return Tensor<T>::parameter(std::move(shape), std::move(values));
}

template <typename T>
Tensor<T> copy_bias(const Tensor<T>& b) {
    if (!b.defined()) return {};
    return as_param<T>(b.shape(), std::vector<T>(b.data().begin(), b.data().end()));
}

// Output channels [first, first + count) of a [c_o, c_i, N, N] kernel,
// reshaped to `shape5` (same element count per channel).
template <typename T>
Tensor<T> channel_slice(const Tensor<T>& k, std::int64_t first, std::int64_t count, Shape shape5) {
    const auto per = k.numel() / k.dim(0);
    std::vector<T> v(k.data().begin() + first * per, k.data().begin() + (first + count) * per);
    return as_param<T>(std::move(shape5), std::move(v));
}

template <typename T>
Tensor<T> bias_slice(const Tensor<T>& b, std::int64_t first, std::int64_t count) {
    if (!b.defined()) return {};
    return as_param<T>({count}, std::vector<T>(b.data().begin() + first, b.data().begin() + first + count));
}

}  // namespace

template <typename T>
std::int64_t P3DCLayer<T>::out_channels() const {
    std::int64_t total = 0;
    if (fusion == Fusion::None) return kernels.front().kernel.dim(0);
    for (const auto& k : kernels) total += k.kernel.dim(0);
    return total;
}

template <typename T>
std::int64_t P3DCLayer<T>::param_count() const {
    std::int64_t n = 0;
    for (const auto& k : kernels) n += k.kernel.numel() + (k.bias.defined() ? k.bias.numel() : 0);
    return n;
}

template <typename T>
Tensor<T> P3DCLayer<T>::forward(const Tensor<T>& input) const {
    if (kernels.empty()) throw ArgumentError("P3DCLayer: no kernels");
    if (fusion == Fusion::None) {
        const auto& k = kernels.front();
        return conv3d(input, k.kernel, k.bias, k.stride, k.padding);
    }
    std::vector<Tensor<T>> parts;
    parts.reserve(kernels.size());
    for (const auto& k : kernels) parts.push_back(conv3d(input, k.kernel, k.bias, k.stride, k.padding));
    return concat_channels(parts);
}

AcsSplit acs_split(std::int64_t out_channels, std::array<int, 3> ratio) {
    if (out_channels < 3) throw ArgumentError("acs3d: c_o < 3 cannot form three nonempty groups");
    if (ratio[0] < 0 || ratio[1] < 0 || ratio[2] < 0 || ratio[0] + ratio[1] + ratio[2] <= 0) {
        throw ArgumentError("acs3d: ratio entries must be non-negative with a positive sum");
    }
    const std::int64_t total = ratio[0] + ratio[1] + ratio[2];
    AcsSplit s;
    s.coronal = std::max<std::int64_t>(1, out_channels * ratio[1] / total);
    s.sagittal = std::max<std::int64_t>(1, out_channels * ratio[2] / total);
    s.axial = out_channels - s.coronal - s.sagittal;
    if (s.axial < 1) throw ArgumentError("acs3d: ratio leaves no axial channels");
    return s;
}

template <typename T>
P3DCLayer<T> slicewise_lift(const Conv2DWeights<T>& w) {
    check_weights(w);
    const auto co = w.out_channels(), ci = w.in_channels(), n = w.size();
    const auto p = (n - 1) / 2;
    P3DCLayer<T> layer;
    layer.variant = Variant::Slicewise;
    layer.kernels.push_back({channel_slice(w.kernel, 0, co, {co, ci, 1, n, n}), copy_bias(w.bias),
                             {1, w.stride, w.stride}, {0, p, p}});
    return layer;
}

template <typename T>
P3DCLayer<T> i3d_inflate(const Conv2DWeights<T>& w, std::int64_t depth) {
    check_weights(w);
    if (depth < 1 || depth % 2 == 0) throw ArgumentError("i3d_inflate: depth must be odd and >= 1");
    const auto co = w.out_channels(), ci = w.in_channels(), n = w.size();
    const auto p = (n - 1) / 2;
    const T den = static_cast<T>(depth);
    std::vector<T> v;
    v.reserve(static_cast<std::size_t>(co * ci * depth * n * n));
    const auto plane = n * n;
    for (std::int64_t oc = 0; oc < co * ci; ++oc)
        for (std::int64_t d = 0; d < depth; ++d)
            for (std::int64_t q = 0; q < plane; ++q) v.push_back(w.kernel.data()[oc * plane + q] / den);
    P3DCLayer<T> layer;
    layer.variant = Variant::I3D;
    layer.kernels.push_back(
        {as_param<T>({co, ci, depth, n, n}, std::move(v)), copy_bias(w.bias), {1, w.stride, w.stride},
         {(depth - 1) / 2, p, p}});
    return layer;
}

template <typename T>
P3DCLayer<T> st3d_convert(const Conv2DWeights<T>& w, std::uint64_t seed) {
    check_weights(w);
    const auto co = w.out_channels(), ci = w.in_channels(), n = w.size();
    const auto p = (n - 1) / 2;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-0.01, 0.01);
    std::vector<T> temporal(static_cast<std::size_t>(co * ci * n));
    for (std::int64_t oc = 0; oc < co * ci; ++oc)
        for (std::int64_t d = 0; d < n; ++d)
            temporal[static_cast<std::size_t>(oc * n + d)] =
                static_cast<T>((d == (n - 1) / 2 ? 0.1 : 0.0) + noise(rng));
    P3DCLayer<T> layer;
    layer.variant = Variant::ST3D;
    layer.fusion = Fusion::ChannelConcat;
    layer.kernels.push_back({channel_slice(w.kernel, 0, co, {co, ci, 1, n, n}), copy_bias(w.bias),
                             {1, w.stride, w.stride}, {0, p, p}});
    layer.kernels.push_back({as_param<T>({co, ci, n, 1, 1}, std::move(temporal)), Tensor<T>{},
                             {1, w.stride, w.stride}, {p, 0, 0}});
    return layer;
}

template <typename T>
P3DCLayer<T> acs3d_convert(const Conv2DWeights<T>& w, std::array<int, 3> ratio) {
    check_weights(w);
    const auto co = w.out_channels(), ci = w.in_channels(), n = w.size();
    const auto p = (n - 1) / 2;
    const auto split = acs_split(co, ratio);
    const auto s = w.stride;
    P3DCLayer<T> layer;
    layer.variant = Variant::ACS3D;
    layer.fusion = Fusion::ChannelConcat;
    std::int64_t first = 0;
    layer.kernels.push_back({channel_slice(w.kernel, first, split.axial, {split.axial, ci, 1, n, n}),
                             bias_slice(w.bias, first, split.axial), {1, s, s}, {0, p, p}});
    first += split.axial;
    layer.kernels.push_back({channel_slice(w.kernel, first, split.coronal, {split.coronal, ci, n, 1, n}),
                             bias_slice(w.bias, first, split.coronal), {1, s, s}, {p, 0, p}});
    first += split.coronal;
    layer.kernels.push_back({channel_slice(w.kernel, first, split.sagittal, {split.sagittal, ci, n, n, 1}),
                             bias_slice(w.bias, first, split.sagittal), {1, s, s}, {p, p, 0}});
    return layer;
}

template <typename T>
Conv2DWeights<T> inflate_input_channels(const Conv2DWeights<T>& w, std::int64_t phases) {
    check_weights(w);
    if (phases < 1) throw ArgumentError("inflate_input_channels: phases must be >= 1");
    const auto co = w.out_channels(), ci = w.in_channels(), n = w.size();
    const auto plane = n * n;
    const T inv = T(1) / static_cast<T>(phases);
    std::vector<T> v;
    v.reserve(static_cast<std::size_t>(co * ci * phases * plane));
    for (std::int64_t o = 0; o < co; ++o)
        for (std::int64_t ph = 0; ph < phases; ++ph)
            for (std::int64_t i = 0; i < ci; ++i)
                for (std::int64_t q = 0; q < plane; ++q)
                    v.push_back(phases == 1 ? w.kernel.data()[(o * ci + i) * plane + q]
                                            : w.kernel.data()[(o * ci + i) * plane + q] * inv);
    return {as_param<T>({co, ci * phases, n, n}, std::move(v)), copy_bias(w.bias), w.stride};
}

template <typename T>
Conv2DWeights<T> collapse_to_2d(const P3DCLayer<T>& layer) {
    if (layer.variant != Variant::Slicewise && layer.variant != Variant::ACS3D) {
        throw ArgumentError("collapse_to_2d: only SLICEWISE and ACS3D layers are parameter-preserving");
    }
    const auto& first = layer.kernels.front();
    const auto ci = first.kernel.dim(1);
    const auto n = first.kernel.dim(3);
    const auto co = layer.out_channels();
    std::vector<T> k, b;
    bool has_bias = first.bias.defined();
    for (const auto& br : layer.kernels) {
        k.insert(k.end(), br.kernel.data().begin(), br.kernel.data().end());
        if (has_bias) b.insert(b.end(), br.bias.data().begin(), br.bias.data().end());
    }
    Conv2DWeights<T> w{as_param<T>({co, ci, n, n}, std::move(k)), {}, first.stride[1]};
    if (has_bias) w.bias = as_param<T>({co}, std::move(b));
    return w;
}

template <typename T>
P3DCLayer<T> convert(const Conv2DWeights<T>& w, Variant variant, const ConvertOptions& options) {
    switch (variant) {
        case Variant::Slicewise: return slicewise_lift(w);
        case Variant::I3D: return i3d_inflate(w, options.i3d_depth);
        case Variant::ST3D: return st3d_convert(w, options.seed);
        case Variant::ACS3D: return acs3d_convert(w, options.acs_ratio);
    }
    throw ArgumentError("convert: unknown variant");
}

template <typename T>
Cost count_params_flops(const P3DCLayer<T>& layer, const Shape& input_shape) {
    Shape s = input_shape;
    if (s.size() == 5) s.erase(s.begin());
    if (s.size() != 4) throw DimensionError("count_params_flops: input shape must be [C, D, H, W]");
    Cost c;
    c.params = layer.param_count();
    for (const auto& br : layer.kernels) {
        const auto& k = br.kernel.shape();
        std::int64_t out_volume = 1;
        for (int a = 0; a < 3; ++a) {
            const auto padded = s[1 + a] + 2 * br.padding[a];
            if (k[2 + a] > padded) throw GeometryError("count_params_flops: kernel exceeds input");
            out_volume *= (padded - k[2 + a]) / br.stride[a] + 1;
        }
        const auto per_output = k[1] * k[2] * k[3] * k[4];
        c.flops += 2 * per_output * out_volume * k[0];
    }
    return c;
}

#define VULD_INSTANTIATE(T)                                                                   \
    template struct P3DCLayer<T>;                                                             \
    template P3DCLayer<T> slicewise_lift(const Conv2DWeights<T>&);                            \
    template P3DCLayer<T> i3d_inflate(const Conv2DWeights<T>&, std::int64_t);                 \
    template P3DCLayer<T> st3d_convert(const Conv2DWeights<T>&, std::uint64_t);               \
    template P3DCLayer<T> acs3d_convert(const Conv2DWeights<T>&, std::array<int, 3>);         \
    template Conv2DWeights<T> inflate_input_channels(const Conv2DWeights<T>&, std::int64_t);  \
    template Conv2DWeights<T> collapse_to_2d(const P3DCLayer<T>&);                            \
    template P3DCLayer<T> convert(const Conv2DWeights<T>&, Variant, const ConvertOptions&);   \
    template Cost count_params_flops(const P3DCLayer<T>&, const Shape&);

VULD_INSTANTIATE(float)
VULD_INSTANTIATE(double)

}  // namespace vuld::p3dc
