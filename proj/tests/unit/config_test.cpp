#include <gtest/gtest.h>

#include "vuld/config/config.hpp"

using namespace vuld;

TEST(Config, DefaultsFromTable) {
    RunConfig c;
    EXPECT_EQ(c.get("model.variant"), "acs3d");
    EXPECT_EQ(c.get_int("model.n_points"), 16);
    EXPECT_DOUBLE_EQ(c.get_double("loss.aux_weight"), 0.1);
    EXPECT_EQ(c.get_ints("synth.split"), (std::vector<std::int64_t>{384, 92, 98}));
    for (const auto& k : config_keys()) EXPECT_NO_THROW(c.get(k.key)) << k.key;
}

TEST(Config, ApplyTextWithComments) {
    RunConfig c;
    c.apply_text("# header\ntrain.lr = 0.01   # faster\n\nmodel.head=direct\n");
    EXPECT_DOUBLE_EQ(c.get_double("train.lr"), 0.01);
    EXPECT_EQ(c.get("model.head"), "direct");
}

TEST(Config, UnknownKeyNamesLine) {
    RunConfig c;
    try {
        c.apply_text("train.lr = 0.1\ntrain.lrr = 0.2\n", "run.cfg");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("run.cfg:2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("train.lrr"), std::string::npos) << msg;
    }
    EXPECT_THROW(c.set_assignment("nope=1"), ConfigError);
    EXPECT_THROW(c.set_assignment("train.lr"), ConfigError);
}

TEST(Config, BadNumbersThrow) {
    RunConfig c;
    c.set("train.steps", "12x");
    EXPECT_THROW(c.get_int("train.steps"), ConfigError);
    c.set("train.lr", "fast");
    EXPECT_THROW(c.get_double("train.lr"), ConfigError);
    c.set("train.flip", "maybe");
    EXPECT_THROW(c.get_bool("train.flip"), ConfigError);
}

TEST(Config, ToTextRoundTrip) {
    RunConfig c;
    c.set_assignment("synth.seed=42");
    RunConfig d;
    d.apply_text(c.to_text());
    EXPECT_EQ(d.get_int("synth.seed"), 42);
    EXPECT_EQ(d.to_text(), c.to_text());
    EXPECT_EQ(c.to_text("synth.").find("train."), std::string::npos);
}
