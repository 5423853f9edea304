#include <gtest/gtest.h>

#include <random>

#include "vuld/p3dc/convert.hpp"

using namespace vuld;
using namespace vuld::p3dc;

namespace {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<T>(u(rng));
    return Tensor<T>::from(std::move(shape), std::move(v));
}

template <typename T = double>
Conv2DWeights<T> random_weights(std::int64_t co, std::int64_t ci, std::int64_t n, std::mt19937_64& rng,
                                bool bias = true) {
    Conv2DWeights<T> w{random_tensor<T>({co, ci, n, n}, rng), {}, 1};
    if (bias) w.bias = random_tensor<T>({co}, rng);
    return w;
}

// Plain 2D cross-correlation of one axial slice with "same" padding.
std::vector<double> conv2d_slice(const Tensor<double>& vol, std::int64_t z, const Conv2DWeights<double>& w) {
    const auto C = vol.dim(1), H = vol.dim(3), W = vol.dim(4);
    const auto co = w.out_channels(), n = w.size(), p = (n - 1) / 2;
    std::vector<double> out;
    for (std::int64_t o = 0; o < co; ++o)
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x) {
                double acc = w.bias.defined() ? w.bias.data()[o] : 0.0;
                for (std::int64_t c = 0; c < C; ++c)
                    for (std::int64_t a = 0; a < n; ++a)
                        for (std::int64_t b = 0; b < n; ++b) {
                            const auto iy = y - p + a, ix = x - p + b;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += vol.at({0, c, z, iy, ix}) * w.kernel.at({o, c, a, b});
                        }
                out.push_back(acc);
            }
    return out;
}

std::vector<double> output_slice(const Tensor<double>& out, std::int64_t z, std::int64_t first, std::int64_t count) {
    std::vector<double> v;
    for (std::int64_t o = first; o < first + count; ++o)
        for (std::int64_t y = 0; y < out.dim(3); ++y)
            for (std::int64_t x = 0; x < out.dim(4); ++x) v.push_back(out.at({0, o, z, y, x}));
    return v;
}

}  // namespace

TEST(SlicewiseLift, ReshapeIsBitIdentical) {
    std::mt19937_64 rng(1);
    auto w = random_weights(4, 3, 3, rng);
    auto layer = slicewise_lift(w);
    ASSERT_EQ(layer.kernels.size(), 1u);
    EXPECT_EQ(layer.kernels[0].kernel.shape(), (Shape{4, 3, 1, 3, 3}));
    for (std::int64_t o = 0; o < 4; ++o)
        for (std::int64_t i = 0; i < 3; ++i)
            for (std::int64_t a = 0; a < 3; ++a)
                for (std::int64_t b = 0; b < 3; ++b)
                    EXPECT_EQ(layer.kernels[0].kernel.at({o, i, 0, a, b}), w.kernel.at({o, i, a, b}));
    EXPECT_EQ(layer.kernels[0].stride[0], 1);
    EXPECT_EQ(layer.kernels[0].padding[0], 0);
    EXPECT_EQ(layer.param_count(), 4 * 3 * 3 * 3 + 4);
    EXPECT_EQ(layer.fusion, Fusion::None);
}

TEST(SlicewiseLift, EqualsPerSlice2DConvolution) {
    std::mt19937_64 rng(2);
    auto w = random_weights(3, 2, 3, rng);
    auto layer = slicewise_lift(w);
    auto vol = random_tensor({1, 2, 4, 5, 6}, rng);
    auto out = layer.forward(vol);
    for (std::int64_t z = 0; z < 4; ++z) {
        auto expected = conv2d_slice(vol, z, w);
        auto got = output_slice(out, z, 0, 3);
        for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);
    }
}

TEST(I3DInflate, UniformKernelAndDepthSum) {
    auto ones = Conv2DWeights<double>{Tensor<double>::full({1, 1, 3, 3}, 1.0), {}, 1};
    auto layer = i3d_inflate(ones, 3);
    EXPECT_EQ(layer.kernels[0].kernel.shape(), (Shape{1, 1, 3, 3, 3}));
    for (double v : layer.kernels[0].kernel.data()) EXPECT_EQ(v, 1.0 / 3.0);
    EXPECT_EQ(layer.kernels[0].padding[0], 1);

    std::mt19937_64 rng(3);
    auto w = random_weights(2, 3, 3, rng);
    for (std::int64_t depth : {1, 3, 5}) {
        auto l = i3d_inflate(w, depth);
        for (std::int64_t o = 0; o < 2; ++o)
            for (std::int64_t i = 0; i < 3; ++i)
                for (std::int64_t a = 0; a < 3; ++a)
                    for (std::int64_t b = 0; b < 3; ++b) {
                        double s = 0;
                        for (std::int64_t d = 0; d < depth; ++d) s += l.kernels[0].kernel.at({o, i, d, a, b});
                        EXPECT_NEAR(s, w.kernel.at({o, i, a, b}), 1e-15);
                    }
    }
}

TEST(I3DInflate, DepthOneMatchesSlicewise) {
    std::mt19937_64 rng(4);
    auto w = random_weights(2, 2, 3, rng);
    auto a = i3d_inflate(w, 1);
    auto b = slicewise_lift(w);
    EXPECT_EQ(a.kernels[0].kernel.shape(), b.kernels[0].kernel.shape());
    for (std::int64_t i = 0; i < a.kernels[0].kernel.numel(); ++i)
        EXPECT_EQ(a.kernels[0].kernel.data()[i], b.kernels[0].kernel.data()[i]);
    EXPECT_THROW(i3d_inflate(w, 2), ArgumentError);
    EXPECT_THROW(i3d_inflate(w, 0), ArgumentError);
}

TEST(I3DInflate, DepthConstantInputReproduces2DInInterior) {
    std::mt19937_64 rng(5);
    auto w = random_weights<float>(3, 2, 3, rng);
    auto layer = i3d_inflate(w, 3);
    auto plane = random_tensor<float>({1, 2, 1, 6, 6}, rng);
    std::vector<float> v;
    for (int c = 0; c < 2; ++c)
        for (int z = 0; z < 5; ++z)
            for (int q = 0; q < 36; ++q) v.push_back(plane.data()[c * 36 + q]);
    auto vol = Tensor<float>::from({1, 2, 5, 6, 6}, v);
    auto out = layer.forward(vol);
    auto ref = slicewise_lift(w).forward(plane);
    for (std::int64_t z = 1; z < 4; ++z)
        for (std::int64_t o = 0; o < 3; ++o)
            for (std::int64_t y = 0; y < 6; ++y)
                for (std::int64_t x = 0; x < 6; ++x)
                    EXPECT_NEAR(out.at({0, o, z, y, x}), ref.at({0, o, 0, y, x}), 1e-5);
}

TEST(ST3DConvert, CountsAndConstruction) {
    std::mt19937_64 rng(6);
    auto w = random_weights(4, 3, 3, rng, false);
    auto layer = st3d_convert(w, 7);
    EXPECT_EQ(layer.param_count(), 4 * 3 * 3 * 3 + 4 * 3 * 3);
    EXPECT_EQ(layer.out_channels(), 8);
    EXPECT_EQ(layer.kernels[1].kernel.shape(), (Shape{4, 3, 3, 1, 1}));
    for (std::int64_t o = 0; o < 4; ++o)
        for (std::int64_t i = 0; i < 3; ++i) {
            EXPECT_NEAR(layer.kernels[1].kernel.at({o, i, 1, 0, 0}), 0.1, 0.01 + 1e-12);
            EXPECT_NEAR(layer.kernels[1].kernel.at({o, i, 0, 0, 0}), 0.0, 0.01 + 1e-12);
        }

    // Zeroed temporal kernel: the first c_o channels equal the slicewise layer.
    auto zeroed = layer;
    zeroed.kernels[1].kernel = Tensor<double>::zeros(layer.kernels[1].kernel.shape());
    auto vol = random_tensor({1, 3, 3, 5, 5}, rng);
    auto out = zeroed.forward(vol);
    auto ref = slicewise_lift(w).forward(vol);
    for (std::int64_t i = 0; i < ref.numel(); ++i) EXPECT_EQ(out.data()[i], ref.data()[i]);
    EXPECT_EQ(out.dim(1), 8);

    auto again = st3d_convert(w, 7);
    for (std::int64_t i = 0; i < again.kernels[1].kernel.numel(); ++i)
        EXPECT_EQ(again.kernels[1].kernel.data()[i], layer.kernels[1].kernel.data()[i]);
}

TEST(ACS3DConvert, SplitRule) {
    auto s = acs_split(80, {8, 1, 1});
    EXPECT_EQ(s.axial, 64);
    EXPECT_EQ(s.coronal, 8);
    EXPECT_EQ(s.sagittal, 8);
    s = acs_split(10, {8, 1, 1});
    EXPECT_EQ(s.axial, 8);
    EXPECT_EQ(s.coronal, 1);
    EXPECT_EQ(s.sagittal, 1);
    s = acs_split(3, {8, 1, 1});
    EXPECT_EQ(s.axial + s.coronal + s.sagittal, 3);
    EXPECT_THROW(acs_split(2, {8, 1, 1}), ArgumentError);
}

TEST(ACS3DConvert, PartitionPreservesParametersAndValues) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> co_d(3, 40), ci_d(1, 12), n_d(0, 2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto co = co_d(rng), ci = ci_d(rng), n = 2 * n_d(rng) + 1;
        auto w = random_weights(co, ci, n, rng, trial % 2 == 0);
        auto layer = acs3d_convert(w);
        EXPECT_EQ(layer.param_count(), w.param_count());
        EXPECT_EQ(layer.out_channels(), co);
        auto back = collapse_to_2d(layer);
        ASSERT_EQ(back.kernel.shape(), w.kernel.shape());
        for (std::int64_t i = 0; i < w.kernel.numel(); ++i) EXPECT_EQ(back.kernel.data()[i], w.kernel.data()[i]);
    }
}

TEST(ACS3DConvert, BranchesSeeTheirPlanes) {
    std::mt19937_64 rng(9);
    auto w = random_weights(10, 2, 3, rng);
    auto layer = acs3d_convert(w);
    EXPECT_EQ(layer.kernels[0].kernel.shape(), (Shape{8, 2, 1, 3, 3}));
    EXPECT_EQ(layer.kernels[1].kernel.shape(), (Shape{1, 2, 3, 1, 3}));
    EXPECT_EQ(layer.kernels[2].kernel.shape(), (Shape{1, 2, 3, 3, 1}));
    auto vol = random_tensor({1, 2, 4, 5, 5}, rng);
    auto out = layer.forward(vol);
    EXPECT_EQ(out.shape(), (Shape{1, 10, 4, 5, 5}));
    // Axial group equals the 2D convolution restricted to those channels.
    Conv2DWeights<double> axial{Tensor<double>::from({8, 2, 3, 3}, std::vector<double>(w.kernel.data().begin(),
                                                                                      w.kernel.data().begin() + 144)),
                                Tensor<double>::from({8}, std::vector<double>(w.bias.data().begin(),
                                                                              w.bias.data().begin() + 8)),
                                1};
    for (std::int64_t z = 0; z < 4; ++z) {
        auto expected = conv2d_slice(vol, z, axial);
        auto got = output_slice(out, z, 0, 8);
        for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);
    }
    EXPECT_THROW(acs3d_convert(random_weights(2, 2, 3, rng)), ArgumentError);
}

TEST(InflateInputChannels, ReplicatedPhasesReproduceOutput) {
    std::mt19937_64 rng(10);
    auto w = random_weights(3, 1, 3, rng);
    auto same = inflate_input_channels(w, 1);
    for (std::int64_t i = 0; i < w.kernel.numel(); ++i) EXPECT_EQ(same.kernel.data()[i], w.kernel.data()[i]);

    auto tri = inflate_input_channels(w, 3);
    EXPECT_EQ(tri.kernel.numel(), 3 * w.kernel.numel());
    auto vol = random_tensor({1, 1, 2, 5, 5}, rng);
    std::vector<double> rep;
    for (int ph = 0; ph < 3; ++ph) rep.insert(rep.end(), vol.data().begin(), vol.data().end());
    auto out3 = slicewise_lift(tri).forward(Tensor<double>::from({1, 3, 2, 5, 5}, rep));
    auto out1 = slicewise_lift(w).forward(vol);
    for (std::int64_t i = 0; i < out1.numel(); ++i) EXPECT_NEAR(out3.data()[i], out1.data()[i], 1e-6);
    EXPECT_THROW(inflate_input_channels(w, 0), ArgumentError);
}

TEST(CountParamsFlops, Examples) {
    Conv2DWeights<float> pw{Tensor<float>::zeros({256, 512, 1, 1}), {}, 1};
    auto layer = slicewise_lift(pw);
    auto cost = count_params_flops(layer, {512, 4, 8, 8});
    EXPECT_EQ(cost.params, 131072);
    EXPECT_EQ(cost.flops, 2 * 512 * 256 * 4 * 8 * 8);

    std::mt19937_64 rng(12);
    auto w = random_weights<float>(20, 6, 3, rng);
    const Shape in{6, 8, 16, 16};
    const auto base = count_params_flops(slicewise_lift(w), in);
    const auto acs = count_params_flops(acs3d_convert(w), in);
    const auto st = count_params_flops(st3d_convert(w, 1), in);
    const auto i3d = count_params_flops(i3d_inflate(w, 3), in);
    EXPECT_EQ(acs.params, base.params);
    EXPECT_EQ(acs.flops, base.flops);
    EXPECT_EQ(st.params, base.params + 20 * 6 * 3);
    EXPECT_EQ(i3d.params, base.params + 2 * 20 * 6 * 9);
    EXPECT_EQ(st.flops, base.flops + 2 * 6 * 3 * (8 * 16 * 16) * 20);
}

TEST(Variant, NamesRoundTrip) {
    for (auto v : {Variant::Slicewise, Variant::I3D, Variant::ST3D, Variant::ACS3D})
        EXPECT_EQ(parse_variant(to_string(v)), v);
    EXPECT_EQ(parse_variant("acs3d"), Variant::ACS3D);
    EXPECT_THROW(parse_variant("conv4d"), ArgumentError);
}
