#include <random>

#include <gtest/gtest.h>

#include "groundpoint/gradcheck.hpp"
#include "groundpoint/task.hpp"

using namespace gp;

namespace {

void check(const ModelConfig& mc, std::uint64_t seed) {
    TaskConfig task = gradcheck_task();
    task.min_targets = 2;
    std::mt19937_64 rng(seed);
    const Model model(mc, seed);
    const Example ex = gen_example(rng, task);
    const GradcheckReport r = gradcheck(model, ex);
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_GT(r.scalars, 0);
    for (const auto& t : r.tensors)
        EXPECT_LT(t.rel_error, 1e-4) << t.name << " analytic " << t.analytic_norm << " numeric " << t.numeric_norm;
}

} // namespace

TEST(Gradcheck, GroundingHead) { check(gradcheck_model_config(), 11); }

TEST(Gradcheck, TextHead) { check(gradcheck_model_config(HeadKind::text), 12); }

TEST(Gradcheck, WithoutRotary) {
    ModelConfig mc = gradcheck_model_config();
    mc.rotary = false;
    check(mc, 13);
}

TEST(Gradcheck, WithoutNoMorePoints) {
    ModelConfig mc = gradcheck_model_config();
    mc.no_more_points = false;
    check(mc, 14);
}

TEST(Gradcheck, WithoutPointSorting) {
    ModelConfig mc = gradcheck_model_config();
    mc.point_sorting = false;
    check(mc, 15);
}

TEST(Gradcheck, CoversEveryTensor) {
    const ModelConfig mc = gradcheck_model_config();
    Model m(mc, 1);
    TaskConfig task = gradcheck_task();
    std::mt19937_64 rng(1);
    const GradcheckReport r = gradcheck(m, gen_example(rng, task));
    EXPECT_EQ(r.tensors.size(), tensor_slots(m.params()).size());
}
