#include <gtest/gtest.h>

#include "groundpoint/config.hpp"
#include "groundpoint/errors.hpp"

using namespace gp;

TEST(Config, ParsesKeyValuesWithComments) {
    const auto kv = parse_key_values("# toy\nsteps = 10\n  head=text  # baseline\n\nlr = 0.001\n");
    EXPECT_EQ(kv.size(), 3u);
    EXPECT_EQ(kv.at("head"), "text");
    const TrainConfig c = apply_config(TrainConfig::defaults(), kv);
    EXPECT_EQ(c.steps, 10);
    EXPECT_EQ(c.model.head, HeadKind::text);
    EXPECT_DOUBLE_EQ(c.optim.backbone.lr, 0.001);
}

TEST(Config, Errors) {
    try {
        parse_key_values("steps = 1\nbroken line\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.position(), 10u);
    }
    EXPECT_THROW(parse_key_values("a = 1\na = 2\n"), ParseError);
    EXPECT_THROW(apply_config(TrainConfig::defaults(), {{"bogus", "1"}}), InvalidArgument);
    EXPECT_THROW(apply_config(TrainConfig::defaults(), {{"steps", "ten"}}), InvalidArgument);
    EXPECT_THROW(apply_config(TrainConfig::defaults(), {{"rotary", "maybe"}}), InvalidArgument);
    EXPECT_THROW(apply_config(TrainConfig::defaults(), {{"head", "pixels"}}), InvalidArgument);
    EXPECT_THROW(read_key_value_file("/nonexistent/cfg.txt"), IoError);
}

TEST(Config, RoundTripsThroughText) {
    TrainConfig c = TrainConfig::multi_frame_defaults();
    c.model.point_sorting = false;
    c.optim.pointing.lr = 2.5e-4;
    c.seed = 77;
    const TrainConfig back = apply_config(TrainConfig{}, parse_key_values(to_key_values(c)));
    EXPECT_EQ(to_key_values(back), to_key_values(c));
    EXPECT_EQ(back.task.frames, 3);
    EXPECT_FALSE(back.model.point_sorting);
}

TEST(Config, ColorCountFollowsTask) {
    const TrainConfig c = apply_config(TrainConfig::defaults(), {{"n_colors", "6"}});
    EXPECT_EQ(c.model.backbone.n_colors, 6);
}
