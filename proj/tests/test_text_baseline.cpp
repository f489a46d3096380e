#include <random>

#include <gtest/gtest.h>

#include "groundpoint/decoder.hpp"
#include "groundpoint/errors.hpp"
#include "groundpoint/model.hpp"
#include "groundpoint/task.hpp"
#include "groundpoint/text_baseline.hpp"
#include "mock_session.hpp"

using namespace gp;

namespace {

std::vector<int> digits_of(const std::vector<int>& tokens) {
    std::vector<int> out;
    for (int id : tokens)
        out.push_back(Vocab::is_digit(id) ? Vocab::digit_value(id) : -1);
    return out;
}

ModelConfig small_model(HeadKind head) {
    ModelConfig mc;
    mc.backbone.hidden = 16;
    mc.backbone.layers = 1;
    mc.backbone.heads = 2;
    mc.backbone.vit_dim = 6;
    mc.backbone.context = 128;
    mc.backbone.n_colors = 4;
    mc.head_dim = mc.subpatch_dim = 8;
    mc.head = head;
    return mc;
}

} // namespace

TEST(TextCoords, OriginIsAllZeros) {
    for (const GridSpec& g : {build_grid(56, 56), build_grid(300, 120, 2)})
        EXPECT_EQ(digits_of(encode_text_point(g, {0, 0, 0, std::nullopt})),
                  (std::vector<int>{0, 0, 0, -1, 0, 0, 0, -1}));
}

TEST(TextCoords, HalfWidthIsFiveHundred) {
    const GridSpec g = build_grid(56, 56);
    const auto t = encode_text_point(g, {28, 0, 0, std::nullopt});
    EXPECT_EQ(digits_of(t), (std::vector<int>{5, 0, 0, -1, 0, 0, 0, -1}));
    EXPECT_EQ(t[3], Vocab::kSpace);
    EXPECT_EQ(t[7], Vocab::kSpace);
}

TEST(TextCoords, RoundTripWithinExtentOver2000) {
    const GridSpec g = build_grid(56, 56);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 56.0);
    double worst = 0;
    for (int k = 0; k < 20000; ++k) {
        const PixelPoint p{u(rng), u(rng), 0, std::nullopt};
        const PixelPoint q = decode_text_point(encode_text_point(g, p), g);
        worst = std::max({worst, std::abs(p.x - q.x), std::abs(p.y - q.y)});
    }
    EXPECT_LE(worst, 56.0 / 2000.0 + 1e-12);
    EXPECT_GT(worst, 0.02);
}

TEST(TextCoords, Errors) {
    const GridSpec g = build_grid(56, 56);
    EXPECT_THROW(encode_text_point(g, {56, 3, 0, std::nullopt}), InvalidArgument);
    auto t = encode_text_point(g, {10, 10, 0, std::nullopt});
    t[5] = Vocab::kSep;
    EXPECT_THROW(decode_text_point(t, g), ParseError);
    t = encode_text_point(g, {10, 10, 0, std::nullopt});
    t[3] = Vocab::digit(1);
    EXPECT_THROW(decode_text_point(t, g), ParseError);
    t.pop_back();
    EXPECT_THROW(decode_text_point(t, g), ParseError);
}

TEST(TextBudget, EightVersusThreeTokensPerPoint) {
    std::mt19937_64 rng(2);
    TaskConfig tc;
    tc.min_targets = 1;
    tc.max_targets = 6;
    const Vocab vocab(4);
    for (int trial = 0; trial < 200; ++trial) {
        const Example ex = gen_example(rng, tc);
        const GridSpec& g = ex.image.grid;
        const auto ordered = order_points(g, ex.annotation.points);
        const auto text_order = order_pixel_points(g, ex.annotation.points, true);
        const SequencePlan gplan = plan_grounding_sequence(g, ex.query_color, ordered, {}, vocab);
        const SequencePlan tplan = plan_text_sequence(g, ex.query_color, text_order, vocab);
        int grounding_tokens = 0, coord_tokens = 0, id_tokens_g = 0, id_tokens_t = 0;
        for (int pos = gplan.prompt_length; pos < gplan.length(); ++pos) {
            const auto& it = gplan.items[size_t(pos)];
            grounding_tokens += it.kind == InputKind::patch && it.image_token >= 0;
            grounding_tokens += it.kind == InputKind::subpatch || it.kind == InputKind::location;
            id_tokens_g += Vocab::is_digit(it.token_id);
        }
        // Text layout per point: 3 digits, space, 3 digits, space, then id digits.
        int in_point = 0;
        for (int pos = tplan.prompt_length; pos < tplan.length(); ++pos) {
            const int id = tplan.items[size_t(pos)].token_id;
            if (id == Vocab::kSep) {
                in_point = 0;
                continue;
            }
            if (in_point < 8)
                ++coord_tokens;
            else
                ++id_tokens_t;
            ++in_point;
        }
        const int n = int(ordered.size());
        ASSERT_EQ(grounding_tokens, 3 * n);
        ASSERT_EQ(coord_tokens, 8 * n);
        ASSERT_EQ(id_tokens_g, id_tokens_t);
    }
}

TEST(TextHead, SharesBackboneInitialization) {
    const Model g(small_model(HeadKind::grounding), 7);
    const Model t(small_model(HeadKind::text), 7);
    EXPECT_FALSE(t.params().grounding.has_value());
    EXPECT_EQ(g.params().backbone.token_embedding, t.params().backbone.token_embedding);
    EXPECT_EQ(g.params().backbone.blocks[0].wq, t.params().backbone.blocks[0].wq);
    std::mt19937_64 rng(3);
    TaskConfig tc;
    const Example ex = gen_example(rng, tc);
    EXPECT_EQ(g.session(ex.image, ex.query_color)->text_logits(), t.session(ex.image, ex.query_color)->text_logits());
}

TEST(TextHead, LossIsFiniteAndCoversEveryPosition) {
    const Model t(small_model(HeadKind::text), 9);
    std::mt19937_64 rng(4);
    TaskConfig tc;
    tc.min_targets = 2;
    const Example ex = gen_example(rng, tc);
    const ExampleLoss l = t.loss(ex);
    const SequencePlan plan = t.plan(ex);
    EXPECT_EQ(int(l.llm_losses.size()), plan.length() - plan.prompt_length + 1);
    EXPECT_EQ(l.breakdown.patch_loss, 0.0);
    EXPECT_TRUE(std::isfinite(l.breakdown.total));
}

TEST(TextDecode, RandomSessionsProduceWellFormedPoints) {
    for (int seed = 0; seed < 300; ++seed) {
        const GridSpec g = build_grid(56, 84, 1 + seed % 3);
        gp::testing::RandomSession s(g, std::uint64_t(seed), 400);
        const int cap = 1 + seed % 7;
        const TextDecodeResult r = decode_text(s, g, cap);
        ASSERT_LE(int(r.points.size()), cap);
        ASSERT_EQ(r.tokens.back(), Vocab::kListClose);
        for (const auto& p : r.points) {
            ASSERT_GE(p.x, 0);
            ASSERT_LT(p.x, g.image_width());
            ASSERT_LT(p.y, g.image_height());
            ASSERT_LT(p.frame, g.n_frames());
            ASSERT_TRUE(p.object_id.has_value());
        }
    }
}
