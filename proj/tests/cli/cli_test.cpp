#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>

#include "vuld/io/binary.hpp"

namespace fs = std::filesystem;

#ifndef VULD_CLI_PATH
#error "VULD_CLI_PATH must point at the vuld binary"
#endif

namespace {

const fs::path& work() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("vuld_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(VULD_CLI_PATH) + " " + args + " > " + (work() / "stdout.txt").string() +
                            " 2> " + (work() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) { return vuld::io::read_file(p); }

const std::string kSmall =
    "-s synth.dims=8,32,32 -s synth.radius_inplane=3,5 -s synth.radius_axial=2,2.5 -s synth.split=2,1,1"
    " -s synth.lesions=1,1 -s synth.confusers=0,1";

struct Cleanup : ::testing::Environment {
    void TearDown() override { fs::remove_all(work()); }
};
const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new Cleanup);

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("synth --count 2"), 2);
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("synth --count 2 --out " + (work() / "x").string() + " -s synth.nope=1"), 2);
    EXPECT_EQ(run("gradcheck --suite nope --trials 1"), 2);
}

TEST(Cli, MissingInputIsRuntimeError) {
    EXPECT_EQ(run("eval --checkpoint /nonexistent.p3dw --data /nonexistent --out " + (work() / "e").string()), 1);
    EXPECT_NE(slurp(work() / "stderr.txt").find("error"), std::string::npos);
}

TEST(Cli, SynthIsDeterministic) {
    ASSERT_EQ(run("synth --count 4 --out " + (work() / "s1").string() + " " + kSmall), 0);
    ASSERT_EQ(run("synth --count 4 --out " + (work() / "s2").string() + " " + kSmall), 0);
    for (const auto& e : fs::directory_iterator(work() / "s1" / "volumes")) {
        EXPECT_EQ(slurp(e.path()), slurp(work() / "s2" / "volumes" / e.path().filename())) << e.path();
    }
    EXPECT_EQ(slurp(work() / "s1" / "annotations.txt"), slurp(work() / "s2" / "annotations.txt"));
    EXPECT_EQ(slurp(work() / "s1" / "manifest.txt"), slurp(work() / "s2" / "manifest.txt"));
}

TEST(Cli, TrainEvalFrocPipeline) {
    const auto data = (work() / "d").string();
    ASSERT_EQ(run("synth --count 4 --out " + data + " " + kSmall), 0);
    const std::string model =
        " -s model.stem_channels=8 -s model.block_layers=1,1,2 -s model.fpn_channels=8 -s model.head_channels=8"
        " -s model.n_points=4 -s model.embed_channels=4";
    ASSERT_EQ(run("train --data " + data + " --out " + (work() / "run").string() + model +
                  " -s train.steps=1 -s train.crop=8,32,32 -s train.eval_every=1 -s train.val_volumes=1"),
              0);
    const auto ckpt = (work() / "run" / "best.p3dw").string();
    ASSERT_TRUE(fs::exists(ckpt));
    ASSERT_EQ(run("eval --checkpoint " + ckpt + " --data " + data + " --out " + (work() / "e1").string()), 0);
    ASSERT_EQ(run("eval --checkpoint " + ckpt + " --data " + data + " --out " + (work() / "e2").string()), 0);
    EXPECT_EQ(slurp(work() / "e1" / "froc.csv"), slurp(work() / "e2" / "froc.csv"));
    EXPECT_EQ(slurp(work() / "e1" / "detections.txt"), slurp(work() / "e2" / "detections.txt"));

    ASSERT_EQ(run("froc --detections " + (work() / "e1" / "detections.txt").string() + " --data " + data +
                  " --out " + (work() / "f").string()),
              0);
    EXPECT_EQ(slurp(work() / "f" / "froc.csv"), slurp(work() / "e1" / "froc.csv"));

    ASSERT_EQ(run("convert --checkpoint " + ckpt + " --variant slicewise --out " + (work() / "sw.p3dw").string()), 0);
    EXPECT_EQ(run("convert --checkpoint " + ckpt + " --variant i3d --out " + (work() / "i3d.p3dw").string()), 1);
}

TEST(Cli, GradcheckAndBench) {
    EXPECT_EQ(run("gradcheck --trials 2 --suite focal --suite triplet"), 0);
    EXPECT_NE(slurp(work() / "stdout.txt").find("PASS"), std::string::npos);
    EXPECT_EQ(run("bench -s bench.input=4,16,16 -s bench.repeats=1 -s model.block_layers=1,1,1"), 0);
    EXPECT_NE(slurp(work() / "stdout.txt").find("ACS3D"), std::string::npos);
}
