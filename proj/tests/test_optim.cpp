#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "groundpoint/errors.hpp"
#include "groundpoint/gradcheck.hpp"
#include "groundpoint/optim.hpp"

using namespace gp;

TEST(Schedule, WarmupThenCosine) {
    const GroupSchedule g{1e-4, 200, 1.0, 0.0};
    EXPECT_DOUBLE_EQ(scheduled_lr(g, 0, 3000, 0.1), 1e-4 / 200);
    EXPECT_DOUBLE_EQ(scheduled_lr(g, 199, 3000, 0.1), 1e-4);
    EXPECT_DOUBLE_EQ(scheduled_lr(g, 200, 3000, 0.1), 1e-4);
    EXPECT_NEAR(scheduled_lr(g, 1600, 3000, 0.1), 1e-4 * (0.1 + 0.9 * 0.5), 1e-18);
    EXPECT_NEAR(scheduled_lr(g, 3000, 3000, 0.1), 1e-5, 1e-18);
    const GroupSchedule b{3e-4, 0, 1.0, 0.01};
    EXPECT_DOUBLE_EQ(scheduled_lr(b, 0, 3000, 0.1), 3e-4);
    for (int s = 1; s < 3000; s += 97)
        EXPECT_LE(scheduled_lr(b, s, 3000, 0.1), scheduled_lr(b, s - 1, 3000, 0.1));
}

TEST(Defaults, PointingGroupHyperparameters) {
    const OptimConfig c;
    EXPECT_DOUBLE_EQ(c.pointing.lr, 1e-4);
    EXPECT_EQ(c.pointing.warmup, 200);
    EXPECT_DOUBLE_EQ(c.pointing.clip, 1.0);
    EXPECT_DOUBLE_EQ(c.backbone.lr, 3e-4);
}

TEST(AdamW, FirstStepMovesEachScalarByLearningRate) {
    const ModelConfig mc = gradcheck_model_config();
    Model m(mc, 1);
    ModelParams before = m.params();
    ModelParams grad = zeros_like(mc);
    for (auto& s : tensor_slots(grad))
        s.map().setConstant(1e-3);
    OptimConfig oc;
    oc.backbone = {1e-2, 0, 0.0, 0.0};
    oc.pointing = {1e-3, 0, 0.0, 0.0};
    AdamW opt(mc, oc);
    const StepStats st = opt.step(m.params(), grad);
    EXPECT_DOUBLE_EQ(st.backbone_lr, 1e-2);
    auto a = tensor_slots(before);
    auto b = tensor_slots(m.params());
    for (size_t k = 0; k < a.size(); ++k) {
        const double lr = a[k].group == ParamGroup::pointing ? 1e-3 : 1e-2;
        for (Eigen::Index i = 0; i < a[k].size(); ++i)
            ASSERT_NEAR(a[k].data[i] - b[k].data[i], lr, lr * 1e-4) << a[k].name;
    }
    EXPECT_EQ(opt.steps_taken(), 1);
}

TEST(AdamW, DecayTouchesOnlyBackboneMatrices) {
    const ModelConfig mc = gradcheck_model_config();
    Model m(mc, 2);
    ModelParams before = m.params();
    ModelParams grad = zeros_like(mc);
    OptimConfig oc;
    oc.backbone = {0.1, 0, 1.0, 0.5};
    AdamW opt(mc, oc);
    opt.step(m.params(), grad);
    auto a = tensor_slots(before);
    auto b = tensor_slots(m.params());
    for (size_t k = 0; k < a.size(); ++k) {
        const bool decays = a[k].group == ParamGroup::backbone && a[k].cols > 1;
        const double factor = decays ? 1.0 - 0.1 * 0.5 : 1.0;
        for (Eigen::Index i = 0; i < a[k].size(); ++i)
            ASSERT_DOUBLE_EQ(b[k].data[i], a[k].data[i] * factor) << a[k].name;
    }
}

TEST(AdamW, ReportsNormsAndRejectsNonFinite) {
    const ModelConfig mc = gradcheck_model_config();
    Model m(mc, 3);
    ModelParams grad = zeros_like(mc);
    grad.backbone.lm_bias(0) = 3.0;
    grad.grounding->done_key(0) = 4.0;
    AdamW opt(mc, OptimConfig{});
    const StepStats st = opt.step(m.params(), grad);
    EXPECT_DOUBLE_EQ(st.backbone_grad_norm, 3.0);
    EXPECT_DOUBLE_EQ(st.pointing_grad_norm, 4.0);
    grad.backbone.lm_bias(1) = std::nan("");
    EXPECT_THROW(opt.step(m.params(), grad), NumericError);
}

TEST(TensorSlots, GroupsAndNames) {
    const ModelConfig mc = gradcheck_model_config();
    Model m(mc, 4);
    int pointing = 0;
    std::set<std::string> names;
    for (const auto& s : tensor_slots(m.params())) {
        EXPECT_TRUE(names.insert(s.name).second) << s.name;
        pointing += s.group == ParamGroup::pointing;
        EXPECT_EQ(s.name.rfind("pointing.", 0) == 0, s.group == ParamGroup::pointing) << s.name;
    }
    EXPECT_EQ(pointing, 14);
}
