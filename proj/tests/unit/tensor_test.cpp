#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vuld/tensor/checkpoint.hpp"
#include "vuld/tensor/gradcheck.hpp"
#include "vuld/tensor/ops.hpp"

using namespace vuld;

namespace {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<T>(u(rng));
    return Tensor<T>::from(std::move(shape), std::move(v));
}

// Straight seven-loop cross-correlation.
std::vector<double> naive_conv(const Tensor<double>& in, const Tensor<double>& k, const Tensor<double>* bias,
                               Index3 s, Index3 p, Shape& out_shape) {
    const auto N = in.dim(0), C = in.dim(1), D = in.dim(2), H = in.dim(3), W = in.dim(4);
    const auto Co = k.dim(0), Kd = k.dim(2), Kh = k.dim(3), Kw = k.dim(4);
    const auto Od = (D + 2 * p[0] - Kd) / s[0] + 1, Oh = (H + 2 * p[1] - Kh) / s[1] + 1,
               Ow = (W + 2 * p[2] - Kw) / s[2] + 1;
    out_shape = {N, Co, Od, Oh, Ow};
    std::vector<double> out;
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t o = 0; o < Co; ++o)
            for (std::int64_t z = 0; z < Od; ++z)
                for (std::int64_t y = 0; y < Oh; ++y)
                    for (std::int64_t x = 0; x < Ow; ++x) {
                        double acc = bias ? bias->data()[o] : 0.0;
                        for (std::int64_t c = 0; c < C; ++c)
                            for (std::int64_t a = 0; a < Kd; ++a)
                                for (std::int64_t b = 0; b < Kh; ++b)
                                    for (std::int64_t e = 0; e < Kw; ++e) {
                                        const auto iz = z * s[0] - p[0] + a, iy = y * s[1] - p[1] + b,
                                                   ix = x * s[2] - p[2] + e;
                                        if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                        acc += in.at({n, c, iz, iy, ix}) * k.at({o, c, a, b, e});
                                    }
                        out.push_back(acc);
                    }
    return out;
}

void expect_close(std::span<const double> a, const std::vector<double>& b, double rel) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], rel * std::max(1.0, std::abs(b[i]))) << "at " << i;
    }
}

}  // namespace

TEST(Conv3d, IdentityKernelReturnsInput) {
    std::mt19937_64 rng(1);
    auto in = random_tensor({1, 1, 3, 3, 3}, rng);
    auto k = Tensor<double>::full({1, 1, 1, 1, 1}, 1.0);
    auto out = conv3d(in, k, nullptr, {1, 1, 1}, {0, 0, 0});
    ASSERT_EQ(out.shape(), in.shape());
    for (std::int64_t i = 0; i < in.numel(); ++i) EXPECT_EQ(out.data()[i], in.data()[i]);
}

TEST(Conv3d, ConstantFieldGivesKernelSum) {
    auto in = Tensor<float>::full({1, 1, 3, 5, 5}, 1.0f);
    auto k = Tensor<float>::full({1, 1, 1, 3, 3}, 1.0f);
    auto out = conv3d(in, k, nullptr, {1, 1, 1}, {0, 0, 0});
    EXPECT_EQ(out.shape(), (Shape{1, 1, 3, 3, 3}));
    for (float v : out.data()) EXPECT_EQ(v, 9.0f);
}

TEST(Conv3d, MatchesNaiveLoopOracle) {
    std::mt19937_64 rng(7);
    auto in = random_tensor({1, 2, 4, 6, 6}, rng);
    auto k = random_tensor({3, 2, 3, 3, 3}, rng);
    Shape s;
    auto expected = naive_conv(in, k, nullptr, {1, 1, 1}, {0, 0, 0}, s);
    auto out = conv3d(in, k, nullptr, {1, 1, 1}, {0, 0, 0});
    EXPECT_EQ(out.shape(), s);
    expect_close(out.data(), expected, 1e-6);
}

TEST(Conv3d, MatchesOracleAcrossStridesAndPadding) {
    std::mt19937_64 rng(11);
    const Shape shapes[] = {{1, 1, 3, 3, 3}, {2, 3, 5, 7, 7}, {1, 2, 4, 5, 6}};
    const Shape kernels[] = {{2, 0, 1, 1, 1}, {2, 0, 3, 3, 3}, {3, 0, 1, 3, 3}, {2, 0, 3, 1, 3}, {2, 0, 3, 3, 1}};
    for (const auto& shape : shapes) {
        for (auto ks : kernels) {
            ks[1] = shape[1];
            for (std::int64_t pad : {0, 1}) {
                for (std::int64_t stride : {1, 2}) {
                    auto in = random_tensor(shape, rng);
                    auto k = random_tensor(ks, rng);
                    auto bias = random_tensor({ks[0]}, rng);
                    Index3 st{stride, stride, stride}, pd{pad, pad, pad};
                    Shape s;
                    auto expected = naive_conv(in, k, &bias, st, pd, s);
                    auto out = conv3d(in, k, &bias, st, pd);
                    EXPECT_EQ(out.shape(), s);
                    expect_close(out.data(), expected, 1e-12);
                }
            }
        }
    }
}

TEST(Conv3d, Errors) {
    auto in = Tensor<float>::zeros({1, 2, 3, 3, 3});
    EXPECT_THROW(conv3d(in, Tensor<float>::zeros({1, 3, 1, 1, 1}), nullptr, {1, 1, 1}, {0, 0, 0}), DimensionError);
    EXPECT_THROW(conv3d(in, Tensor<float>::zeros({1, 2, 5, 1, 1}), nullptr, {1, 1, 1}, {0, 0, 0}), GeometryError);
    EXPECT_THROW(conv3d(in, Tensor<float>::zeros({1, 2, 1, 1, 1}), nullptr, {0, 1, 1}, {0, 0, 0}), GeometryError);
}

TEST(TrilinearSample, LatticePointIsExact) {
    std::mt19937_64 rng(3);
    auto f = random_tensor({4, 3, 4, 5}, rng);
    auto pts = Tensor<double>::from({1, 3}, {2.0, 1.0, 0.0});
    auto out = trilinear_sample(f, pts);
    for (std::int64_t c = 0; c < 4; ++c) EXPECT_EQ(out.at({0, c}), f.at({c, 0, 1, 2}));
}

TEST(TrilinearSample, MidpointOnRampIsMean) {
    std::vector<double> v;
    for (int z = 0; z < 3; ++z)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x) v.push_back(2.0 * x + 5.0 * y - z);
    auto f = Tensor<double>::from({1, 3, 3, 3}, v);
    auto out = trilinear_sample(f, Tensor<double>::from({1, 3}, {0.5, 1.0, 2.0}));
    EXPECT_DOUBLE_EQ(out.item(), 0.5 * (f.at({0, 2, 1, 0}) + f.at({0, 2, 1, 1})));
}

TEST(TrilinearSample, MatchesDenseUpsamplingOracle) {
    // Oracle: materialize the field upsampled 64x per axis by separable
    // linear refinement, then read the nearest dense sample.
    std::mt19937_64 rng(5);
    const int C = 2, D = 2, H = 3, W = 3, R = 64;
    auto f = random_tensor({C, D, H, W}, rng);
    const int dd = (D - 1) * R + 1, dh = (H - 1) * R + 1, dw = (W - 1) * R + 1;
    auto refine = [R](const std::vector<double>& src, int n) {
        std::vector<double> out((n - 1) * R + 1);
        for (int i = 0; i < static_cast<int>(out.size()); ++i) {
            const int lo = std::min(i / R, n - 2);
            const double t = double(i - lo * R) / R;
            out[i] = (1 - t) * src[lo] + t * src[lo + 1];
        }
        return out;
    };
    std::vector<double> dense(static_cast<std::size_t>(C) * dd * dh * dw);
    for (int c = 0; c < C; ++c) {
        std::vector<double> xy(static_cast<std::size_t>(D) * dh * dw);
        for (int z = 0; z < D; ++z) {
            std::vector<std::vector<double>> rows(H);
            for (int y = 0; y < H; ++y) {
                std::vector<double> line(W);
                for (int x = 0; x < W; ++x) line[x] = f.at({c, z, y, x});
                rows[y] = refine(line, W);
            }
            for (int x = 0; x < dw; ++x) {
                std::vector<double> col(H);
                for (int y = 0; y < H; ++y) col[y] = rows[y][x];
                auto r = refine(col, H);
                for (int y = 0; y < dh; ++y) xy[(z * dh + y) * dw + x] = r[y];
            }
        }
        for (int y = 0; y < dh; ++y)
            for (int x = 0; x < dw; ++x) {
                std::vector<double> col(D);
                for (int z = 0; z < D; ++z) col[z] = xy[(z * dh + y) * dw + x];
                auto r = refine(col, D);
                for (int z = 0; z < dd; ++z) dense[((static_cast<std::size_t>(c) * dd + z) * dh + y) * dw + x] = r[z];
            }
    }
    std::uniform_real_distribution<double> ux(0.0, W - 1), uy(0.0, H - 1), uz(0.0, D - 1);
    std::vector<double> pts;
    std::vector<std::array<int, 3>> nearest;
    for (int k = 0; k < 200; ++k) {
        const int ix = int(std::lround(ux(rng) * R)), iy = int(std::lround(uy(rng) * R)),
                  iz = int(std::lround(uz(rng) * R));
        pts.insert(pts.end(), {double(ix) / R, double(iy) / R, double(iz) / R});
        nearest.push_back({iz, iy, ix});
    }
    auto out = trilinear_sample(f, Tensor<double>::from({200, 3}, pts));
    for (int k = 0; k < 200; ++k)
        for (int c = 0; c < C; ++c) {
            const auto [iz, iy, ix] = nearest[k];
            const double expected = dense[((static_cast<std::size_t>(c) * dd + iz) * dh + iy) * dw + ix];
            EXPECT_NEAR(out.at({k, c}), expected, 1e-4 * std::max(1.0, std::abs(expected)));
        }
}

TEST(TrilinearSample, ClampsOutsideGridAndRejectsEmpty) {
    std::mt19937_64 rng(9);
    auto f = random_tensor({1, 2, 2, 2}, rng);
    auto out = trilinear_sample(f, Tensor<double>::from({1, 3}, {-3.0, 5.0, 0.0}));
    EXPECT_EQ(out.item(), f.at({0, 0, 1, 0}));
    EXPECT_THROW(trilinear_sample(f, Tensor<double>::zeros({0, 3})), ArgumentError);
}

TEST(TrilinearSample, LinearBetweenLatticePoints) {
    std::mt19937_64 rng(13);
    auto f = random_tensor({1, 3, 3, 3}, rng);
    for (double t : {0.1, 0.25, 0.6, 0.9}) {
        auto v = trilinear_sample(f, Tensor<double>::from({1, 3}, {1.0 + t, 1.0, 1.0})).item();
        EXPECT_NEAR(v, (1 - t) * f.at({0, 1, 1, 1}) + t * f.at({0, 1, 1, 2}), 1e-14);
    }
}

TEST(Elementwise, SpotValues) {
    EXPECT_EQ(sigmoid(Tensor<double>::scalar(0.0)).item(), 0.5);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto x = Tensor<double>::parameter({}, {3.0});
    auto y = pow(x, 2.0);
    EXPECT_EQ(y.item(), 9.0);
    tape.backward(y);
    EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Elementwise, LogDomainError) {
    EXPECT_THROW(log(Tensor<double>::from({2}, {1.0, 0.0})), DomainError);
    EXPECT_THROW(log(Tensor<double>::from({1}, {-2.0})), DomainError);
}

TEST(Elementwise, ClampHasZeroGradientOutsideBounds) {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto x = Tensor<double>::parameter({3}, {-2.0, 0.5, 2.0});
    tape.backward(sum(clamp(x, -1.0, 1.0)));
    EXPECT_EQ(x.grad()[0], 0.0);
    EXPECT_EQ(x.grad()[1], 1.0);
    EXPECT_EQ(x.grad()[2], 0.0);
}

TEST(Elementwise, CompositeGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(21);
    auto a = random_tensor({6}, rng, 0.2, 2.0);
    auto b = random_tensor({6}, rng, -1.0, 1.0);
    auto fn = [](const std::vector<Tensor<double>>& in) {
        auto s = sigmoid(mul(in[0], in[1]));
        auto l = log(add_scalar(abs(in[1]), 0.5));
        return sum(add(pow(s, 3.0), mul(l, clamp(in[0], 0.0, 1.5))));
    };
    auto r = check_gradients(fn, {a, b});
    EXPECT_LT(r.relative_error, 1e-6);
}

TEST(ReduceMinMax, ValuesAndTies) {
    auto r = reduce_min_max(Tensor<double>::from({3}, {3.0, 1.0, 2.0}));
    EXPECT_EQ(r.min.item(), 1.0);
    EXPECT_EQ(r.argmin, 1);
    EXPECT_EQ(r.max.item(), 3.0);
    EXPECT_EQ(r.argmax, 0);
    auto t = reduce_min_max(Tensor<double>::from({3}, {5.0, 5.0, 5.0}));
    EXPECT_EQ(t.min.item(), 5.0);
    EXPECT_EQ(t.argmin, 0);
    EXPECT_EQ(t.argmax, 0);
    EXPECT_THROW(reduce_min_max(Tensor<double>::zeros({0})), ArgumentError);
}

TEST(ReduceMinMax, TieGradientGoesToLowestIndex) {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto x = Tensor<double>::parameter({3}, {5.0, 5.0, 5.0});
    auto r = reduce_min_max(x);
    tape.backward(add(r.min, r.max));
    EXPECT_EQ(x.grad()[0], 2.0);
    EXPECT_EQ(x.grad()[1], 0.0);
    EXPECT_EQ(x.grad()[2], 0.0);
}

TEST(ReduceMinMax, MaxGradientIsOneHotAtArgmax) {
    std::mt19937_64 rng(17);
    auto v = random_tensor({9}, rng);
    auto fn = [](const std::vector<Tensor<double>>& in) { return reduce_min_max(in[0]).max; };
    auto r = check_gradients(fn, {v});
    EXPECT_LT(r.relative_error, 1e-9);
    const auto arg = reduce_min_max(v).argmax;
    for (std::int64_t i = 0; i < 9; ++i) EXPECT_EQ(v.grad()[i], i == arg ? 1.0 : 0.0);
}

TEST(Maxpool3d, Cases) {
    auto peak = Tensor<double>::zeros({1, 1, 5, 5, 5});
    peak.mutable_data()[(2 * 5 + 2) * 5 + 2] = 3.0;
    auto pooled = maxpool3d(peak);
    for (int z = 0; z < 5; ++z)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x) {
                const bool near = std::abs(z - 2) <= 1 && std::abs(y - 2) <= 1 && std::abs(x - 2) <= 1;
                EXPECT_EQ(pooled.at({0, 0, z, y, x}), near ? 3.0 : 0.0);
            }
    auto flat = Tensor<double>::full({1, 2, 3, 4, 2}, 1.5);
    auto pooled_flat = maxpool3d(flat);
    for (double v : pooled_flat.data()) EXPECT_EQ(v, 1.5);

    std::mt19937_64 rng(4);
    auto f = random_tensor({1, 2, 4, 5, 3}, rng);
    auto p = maxpool3d(f);
    for (int c = 0; c < 2; ++c)
        for (int z = 0; z < 4; ++z)
            for (int y = 0; y < 5; ++y)
                for (int x = 0; x < 3; ++x) {
                    double m = -1e300;
                    for (int a = -1; a <= 1; ++a)
                        for (int b = -1; b <= 1; ++b)
                            for (int e = -1; e <= 1; ++e) {
                                int zz = z + a, yy = y + b, xx = x + e;
                                if (zz < 0 || zz >= 4 || yy < 0 || yy >= 5 || xx < 0 || xx >= 3) continue;
                                m = std::max(m, f.at({0, c, zz, yy, xx}));
                            }
                    EXPECT_EQ(p.at({0, c, z, y, x}), m);
                }
}

TEST(Backward, SimpleLosses) {
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        auto w = Tensor<double>::parameter({4}, {1.0, -2.0, 3.0, 0.5});
        tape.backward(sum(w));
        for (double g : w.grad()) EXPECT_EQ(g, 1.0);
    }
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        auto w = Tensor<double>::parameter({4}, {1.0, -2.0, 3.0, 0.5});
        tape.backward(scale(sum(mul(w, w)), 0.5));
        for (int i = 0; i < 4; ++i) EXPECT_EQ(w.grad()[i], w.data()[i]);
    }
}

TEST(Backward, ErrorsOnNonScalarAndConsumedTape) {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto w = Tensor<double>::parameter({2}, {1.0, 2.0});
    auto y = mul(w, w);
    EXPECT_THROW(tape.backward(y), ArgumentError);
    auto loss = sum(y);
    tape.backward(loss);
    EXPECT_THROW(tape.backward(loss), TapeError);
    tape.reset();
    EXPECT_THROW(tape.backward(loss), ArgumentError);
    auto again = sum(mul(w, w));
    w.zero_grad();
    tape.backward(again);
    EXPECT_EQ(w.grad()[1], 4.0);
}

TEST(Backward, Deterministic) {
    auto run = [] {
        std::mt19937_64 rng(99);
        auto in = random_tensor<float>({1, 2, 4, 6, 6}, rng);
        auto k = random_tensor<float>({3, 2, 3, 3, 3}, rng);
        k.set_requires_grad(true);
        Tape<float> tape;
        TapeScope<float> scope(tape);
        tape.backward(sum(pow(conv3d(in, k, nullptr, {1, 1, 1}, {1, 1, 1}), 2.0f)));
        return std::vector<float>(k.grad().begin(), k.grad().end());
    };
    EXPECT_EQ(run(), run());
}

// Every op against central differences over seeded random inputs.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, MatchFiniteDifferences) {
    const int seed = GetParam();
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const double tol = 1e-4;
    auto check = [&](const char* name, const ScalarFn& fn, std::vector<Tensor<double>> in) {
        auto r = check_gradients(fn, std::move(in));
        EXPECT_LT(r.relative_error, tol) << name << " seed " << seed;
    };
    auto weights = random_tensor({2, 3, 4, 3, 3}, rng);  // fixed projection for non-scalar outputs
    auto project = [weights](const Tensor<double>& t) {
        auto w = Tensor<double>::from(t.shape(), std::vector<double>(weights.data().begin(),
                                                                     weights.data().begin() + t.numel()));
        return sum(mul(t, w));
    };
    check("conv3d",
          [&](const auto& in) { return project(conv3d(in[0], in[1], in[2], {1, 2, 1}, {1, 0, 1})); },
          {random_tensor({1, 2, 3, 4, 4}, rng), random_tensor({2, 2, 3, 1, 3}, rng), random_tensor({2}, rng)});
    check("sigmoid", [&](const auto& in) { return project(sigmoid(in[0])); }, {random_tensor({5}, rng, -3, 3)});
    check("log", [&](const auto& in) { return project(log(in[0])); }, {random_tensor({5}, rng, 0.1, 3)});
    check("pow", [&](const auto& in) { return project(pow(in[0], 2.5)); }, {random_tensor({5}, rng, 0.1, 2)});
    check("abs", [&](const auto& in) { return project(abs(in[0])); }, {random_tensor({5}, rng)});
    check("relu", [&](const auto& in) { return project(relu(in[0])); }, {random_tensor({5}, rng)});
    check("clamp", [&](const auto& in) { return project(clamp(in[0], -0.5, 0.5)); }, {random_tensor({5}, rng)});
    check("add_mul_sub",
          [&](const auto& in) { return project(sub(mul(in[0], in[1]), add(in[0], in[1]))); },
          {random_tensor({6}, rng), random_tensor({6}, rng)});
    check("reduce_min_max",
          [&](const auto& in) {
              auto r = reduce_min_max(in[0]);
              return add(scale(r.min, 2.0), r.max);
          },
          {random_tensor({7}, rng)});
    check("trilinear_sample",
          [&](const auto& in) { return project(trilinear_sample(in[0], in[1])); },
          {random_tensor({3, 3, 4, 4}, rng), random_tensor({4, 3}, rng, 0.05, 1.95)});
    check("avgpool_upsample",
          [&](const auto& in) { return project(upsample_nearest(avgpool3d(in[0], {1, 2, 2}), {1, 2, 1})); },
          {random_tensor({1, 2, 2, 4, 4}, rng)});
    check("concat",
          [&](const auto& in) { return project(concat_channels<double>({in[0], in[1]})); },
          {random_tensor({1, 1, 2, 2, 2}, rng), random_tensor({1, 2, 2, 2, 2}, rng)});
    check("rows",
          [&](const auto& in) {
              auto d = row_norm(sub_row(in[0], in[1]));
              return project(outer_sub(d, select_column(affine_columns(in[2], {2.0, -1.0, 0.5}, {1, 2, 3}), 1)));
          },
          {random_tensor({4, 3}, rng), random_tensor({3}, rng), random_tensor({2, 3}, rng)});
    check("gather_cell", [&](const auto& in) { return project(gather_cell(in[0], 1, 0, 2)); },
          {random_tensor({1, 3, 2, 2, 3}, rng)});
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, 100));

TEST(Checkpoint, ByteExactRoundTrip) {
    std::vector<CheckpointEntry> entries = {
        {"stem.weight", {2, 1, 1, 3, 3}, std::vector<float>(18, 0.25f)},
        {"scalar", {}, {-1.5f}},
        text_entry("__config__", "growth_rate = 8\nblock_layers = 2,2,4\n"),
    };
    entries[0].values[3] = -0.0f;
    entries[0].values[4] = 1e-38f;
    const auto bytes = encode_checkpoint(entries);
    EXPECT_EQ(bytes.substr(0, 4), "P3DW");
    auto back = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_EQ(entry_text(back[2]), "growth_rate = 8\nblock_layers = 2,2,4\n");
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), CheckpointError);
    EXPECT_THROW(decode_checkpoint("P3DX" + bytes.substr(4)), CheckpointError);
}
