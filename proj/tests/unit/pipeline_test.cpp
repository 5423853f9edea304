#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>

#include "vuld/io/binary.hpp"
#include "vuld/pipeline/pipeline.hpp"

using namespace vuld;
namespace fs = std::filesystem;

namespace {

BackboneConfig tiny() {
    auto c = BackboneConfig::toy();
    c.stem_channels = 8;
    c.growth_rate = 8;
    c.block_layers = {1, 1, 2};
    c.fpn_channels = 8;
    c.head_channels = 8;
    c.n_points = 4;
    c.embed_channels = 4;
    return c;
}

struct SmallData : ::testing::Test {
    fs::path dir;
    Dataset ds;

    void SetUp() override {
        dir = fs::temp_directory_path() / ("vuld_pipeline_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        SynthConfig c;
        c.dims = {8, 32, 32};
        c.radius_inplane = {3.0, 5.0};
        c.radius_axial = {2.0, 2.5};
        c.lesions = {1, 1};
        c.confusers = {0, 1};
        c.split = {2, 1, 1};
        ds = write_dataset(c, 4, dir / "data");
    }
    void TearDown() override { fs::remove_all(dir); }

    TrainConfig train_config() const {
        TrainConfig t;
        t.steps = 2;
        t.batch_size = 2;
        t.crop = {8, 32, 32};
        t.eval_every = 2;
        t.val_volumes = 1;
        t.log_every = 1;
        return t;
    }
};

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
    auto p = Tensor<float>::parameter({2}, {1.0f, -1.0f});
    Adam opt({p}, 0.1);
    auto g = p.mutable_grad();
    g[0] = 3.0f;
    g[1] = -0.5f;
    opt.step();
    EXPECT_NEAR(p.data()[0], 0.9f, 1e-6);
    EXPECT_NEAR(p.data()[1], -0.9f, 1e-6);
    opt.zero_grad();
    EXPECT_FALSE(p.has_grad());
    EXPECT_EQ(opt.steps(), 1);
}

TEST(PlateauScheduler, DropsAfterPatience) {
    auto p = Tensor<float>::parameter({1}, {0.0f});
    Adam opt({p}, 1.0);
    PlateauScheduler s(2, 1e-4, 0.1);
    EXPECT_TRUE(s.observe(1.0, opt));
    EXPECT_FALSE(s.observe(1.0, opt));
    EXPECT_DOUBLE_EQ(opt.lr(), 1.0);
    EXPECT_FALSE(s.observe(0.99995, opt));
    EXPECT_DOUBLE_EQ(opt.lr(), 0.1);
    EXPECT_TRUE(s.observe(0.5, opt));
}

TEST(MakeCrop, ShiftsBoxesIntoCrop) {
    Volume v{Tensor<float>::zeros({1, 16, 64, 64}), {1, 1, 1}};
    Box3D b;
    b.lo = {40, 40, 8};
    b.hi = {48, 48, 12};
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        const auto s = make_crop(v, {{b, false}}, {8, 32, 32}, 0.0, false, rng);
        EXPECT_EQ(s.volume.shape(), (Shape{1, 1, 8, 32, 32}));
        ASSERT_EQ(s.boxes.size(), 1u);
        for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(s.boxes[0].box.extent(a), b.extent(a));
        const double cx = s.boxes[0].box.center(0);
        EXPECT_GE(cx, 0.0);
        EXPECT_LT(cx, 32.0);
    }
}

TEST_F(SmallData, TrainSmokeWritesArtifacts) {
    Detector<float> det(tiny());
    const auto before = det.to_checkpoint();
    const auto r = train_detector(det, ds, train_config(), dir / "run");
    EXPECT_EQ(r.steps, 2);
    EXPECT_FALSE(r.validation.empty());
    EXPECT_TRUE(std::isfinite(r.best_validation));
    for (const char* f : {"best.p3dw", "last.p3dw", "train_log.csv", "validation_log.csv"})
        EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
    EXPECT_NE(encode_checkpoint(det.to_checkpoint()), encode_checkpoint(before));
}

TEST_F(SmallData, TrainingIsDeterministic) {
    Detector<float> a(tiny()), b(tiny());
    train_detector(a, ds, train_config(), {});
    train_detector(b, ds, train_config(), {});
    EXPECT_EQ(encode_checkpoint(a.to_checkpoint()), encode_checkpoint(b.to_checkpoint()));
}

TEST_F(SmallData, EvaluateRescoresIdentically) {
    Detector<float> det(tiny());
    EvalSettings s;
    s.decode.score_min = 0.0;
    const auto r = evaluate(det, ds, Split::Test, s);
    EXPECT_EQ(r.volumes.size(), 1u);
    EXPECT_EQ(r.froc.sensitivity.size(), default_fp_points().size());
    const auto again = score_detections(parse_detections(r.detections_text), ds, Split::Test, s);
    EXPECT_EQ(format_froc_csv(again.froc), format_froc_csv(r.froc));
    EXPECT_EQ(format_size_csv(again.sizes), format_size_csv(r.sizes));
    EXPECT_EQ(format_froc_csv(evaluate(det, ds, Split::Test, s).froc), format_froc_csv(r.froc));
}
