#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "groundpoint/errors.hpp"
#include "groundpoint/targets.hpp"
#include "test_support.hpp"

using namespace gp;
using namespace gp::testing;

namespace {

PixelPoint pt(double x, double y, int frame = 0) { return {x, y, frame, std::nullopt}; }

std::vector<PixelPoint> random_points(std::mt19937_64& rng, const GridSpec& grid, int n) {
    std::vector<PixelPoint> out;
    std::set<std::pair<int, int>> pairs;
    std::uniform_real_distribution<double> ux(0.0, grid.image_width()), uy(0.0, grid.image_height());
    std::uniform_int_distribution<int> uf(0, grid.n_frames() - 1);
    for (int tries = 0; int(out.size()) < n && tries < 1000; ++tries) {
        const PixelPoint p = pt(ux(rng), uy(rng), uf(rng));
        const PointTriple t = encode_point(grid, p);
        if (pairs.emplace(t.token, t.subpatch).second)
            out.push_back(p);
    }
    return out;
}

double lse_oracle(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double a : v)
        m = std::max(m, a);
    double s = 0;
    for (double a : v)
        s += std::exp(a - m);
    return m + std::log(s);
}

} // namespace

TEST(SortPoints, OrdersByRasterToken) {
    const GridSpec g = build_grid(56, 56);
    const std::vector<PixelPoint> pts{pt(5, 40), pt(30, 10)};
    const auto s = sort_points(g, pts);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].token, 1);
    EXPECT_EQ(s[1].token, 2);
}

TEST(SortPoints, SinglePointUnchanged) {
    const GridSpec g = build_grid(56, 56);
    const std::vector<PixelPoint> pts{pt(40, 40)};
    EXPECT_EQ(sort_points(g, pts), std::vector<PointTriple>{encode_point(g, pts[0])});
}

TEST(SortPoints, SameTokenOrderedBySubpatch) {
    const GridSpec g = build_grid(56, 56);
    const std::vector<PixelPoint> pts{pt(20, 20), pt(3, 3), pt(20, 3)};
    const auto s = sort_points(g, pts);
    EXPECT_EQ(s[0].subpatch, 0);
    EXPECT_EQ(s[1].subpatch, 1);
    EXPECT_EQ(s[2].subpatch, 3);
}

TEST(SortPoints, RejectsDuplicatePairs) {
    const GridSpec g = build_grid(56, 56);
    const std::vector<PixelPoint> pts{pt(2, 2), pt(12, 12)};
    EXPECT_THROW(sort_points(g, pts), DuplicatePoint);
    PointAnnotation a{g, pts};
    EXPECT_THROW(build_targets(g, a), DuplicatePoint);
}

TEST(BuildTargets, TwoPointsGiveSevenStepsEndingInDone) {
    const GridSpec g = build_grid(56, 56);
    const auto steps = build_targets(g, PointAnnotation{g, {pt(30, 10), pt(5, 40)}});
    ASSERT_EQ(steps.size(), 7u);
    const StepKind kinds[] = {StepKind::patch, StepKind::subpatch, StepKind::location};
    for (size_t k = 0; k < 6; ++k)
        EXPECT_EQ(steps[k].kind, kinds[k % 3]);
    EXPECT_EQ(steps[6].kind, StepKind::patch);
    EXPECT_EQ(steps[6].target, g.total_tokens());
}

TEST(BuildTargets, EmptyListIsSingleDoneStep) {
    const GridSpec g = build_grid(56, 56);
    const auto steps = build_targets(g, PointAnnotation{g, {}});
    ASSERT_EQ(steps.size(), 1u);
    EXPECT_EQ(steps[0].kind, StepKind::patch);
    EXPECT_EQ(steps[0].target, 4);
    EXPECT_EQ(steps[0].legal_floor, 0);
}

TEST(BuildTargets, LegalFloorsFollowPreviousTargets) {
    const GridSpec g = build_grid(84, 56); // tokens 0..5
    const auto steps = build_targets(g, PointAnnotation{g, {pt(75, 5), pt(60, 35), pt(60, 5)}});
    ASSERT_EQ(steps.size(), 10u);
    EXPECT_EQ(steps[0].target, 2);
    EXPECT_EQ(steps[3].target, 2);
    EXPECT_EQ(steps[6].target, 5);
    EXPECT_EQ(steps[0].legal_floor, 0);
    EXPECT_EQ(steps[3].legal_floor, 2);
    EXPECT_EQ(steps[6].legal_floor, 2);
    EXPECT_EQ(steps[9].legal_floor, 5);
    EXPECT_EQ(steps[9].target, 6);
    EXPECT_FALSE(steps[0].prev_selected.has_value());
    EXPECT_EQ(steps[3].prev_selected, 2);
    EXPECT_EQ(steps[9].prev_selected, 5);
}

TEST(BuildTargets, SubpatchStepsBlockWhatTheDecoderForbids) {
    const GridSpec g = build_grid(56, 56);
    // token 0, subpatches 0 and 3
    const auto steps = build_targets(g, PointAnnotation{g, {pt(3, 3), pt(20, 20)}});
    EXPECT_TRUE(steps[1].blocked.empty());
    EXPECT_EQ(steps[4].blocked, (std::vector<int>{0}));
    TargetOptions unsorted{false, true};
    const auto u = build_targets(g, PointAnnotation{g, {pt(20, 20), pt(3, 3)}}, unsorted);
    EXPECT_EQ(u[4].blocked, (std::vector<int>{3}));
}

TEST(BuildTargets, SortingDisabledKeepsOrderAndZeroFloors) {
    const GridSpec g = build_grid(84, 56);
    const auto steps = build_targets(g, PointAnnotation{g, {pt(60, 35), pt(5, 5), pt(75, 5)}}, {false, true});
    ASSERT_EQ(steps.size(), 10u);
    EXPECT_EQ(steps[0].target, 5);
    EXPECT_EQ(steps[3].target, 0);
    EXPECT_EQ(steps[6].target, 2);
    for (const auto& s : steps)
        EXPECT_EQ(s.legal_floor, 0);
}

TEST(BuildTargets, NoDoneModeOmitsTrailingStep) {
    const GridSpec g = build_grid(56, 56);
    const auto steps = build_targets(g, PointAnnotation{g, {pt(30, 10), pt(5, 40)}}, {true, false});
    ASSERT_EQ(steps.size(), 6u);
    EXPECT_EQ(steps.back().kind, StepKind::location);
    EXPECT_TRUE(build_targets(g, PointAnnotation{g, {}}, {true, false}).empty());
}

TEST(BuildTargets, TargetsNeverMaskedByOwnStep) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const GridSpec g = build_grid(28 * (1 + trial % 4), 28 * (1 + trial % 3), 1 + trial % 3);
        const bool sorting = trial % 2 == 0, done = trial % 5 != 0;
        const auto pts = random_points(rng, g, 1 + trial % 9);
        const auto steps = build_targets(g, PointAnnotation{g, pts}, {sorting, done});
        EXPECT_EQ(steps.size(), pts.size() * 3 + (done ? 1 : 0));
        for (const auto& s : steps) {
            const Eigen::Index n = s.kind == StepKind::patch     ? g.total_tokens() + (done ? 1 : 0)
                                   : s.kind == StepKind::subpatch ? g.subpatches_per_token()
                                                                  : GridSpec::kLocations;
            EXPECT_TRUE(step_mask(s, n, done)[size_t(s.target)]);
        }
    }
}

TEST(StepMask, DoneClassAlwaysLegal) {
    SupervisionStep s{StepKind::patch, 4, 4, -1, 3, {}};
    const auto m = step_mask(s, 5, true);
    EXPECT_EQ(m, (std::vector<bool>{false, false, false, false, true}));
    const auto n = step_mask(s, 4, false);
    EXPECT_EQ(n, (std::vector<bool>{false, false, false, false}));
}

TEST(StepLoss, UniformFourWayIsLnFour) {
    for (int target = 0; target < 4; ++target) {
        SupervisionStep s{StepKind::patch, target, 0, -1, std::nullopt, {}};
        EXPECT_NEAR(grounding_step_loss(Vec::Constant(4, 0.7), s).loss, std::log(4.0), 1e-12);
    }
}

TEST(StepLoss, InfiniteMarginGivesZero) {
    Vec v = Vec::Zero(5);
    v(2) = std::numeric_limits<double>::infinity();
    SupervisionStep s{StepKind::patch, 2, 0, -1, std::nullopt, {}};
    EXPECT_EQ(grounding_step_loss(v, s).loss, 0.0);
    v(2) = 60.0;
    EXPECT_LT(grounding_step_loss(v, s).loss, 1e-25);
}

TEST(StepLoss, SixWayMatchesOracle) {
    std::mt19937_64 rng(4);
    const Vec v = random_vec(rng, 6, 2.0);
    SupervisionStep s{StepKind::patch, 4, 2, -1, 1, {}};
    const double oracle = lse_oracle({v(2), v(3), v(4), v(5)}) - v(4);
    const StepLoss l = grounding_step_loss(v, s);
    EXPECT_NEAR(l.loss, oracle, 1e-12);
    EXPECT_EQ(l.grad(0), 0.0);
    EXPECT_EQ(l.grad(1), 0.0);
    EXPECT_NEAR(l.grad.sum(), 0.0, 1e-12);
    SupervisionStep sub{StepKind::subpatch, 2, 0, 0, std::nullopt, {0, 1}};
    const Vec w = v.head(4);
    EXPECT_NEAR(grounding_step_loss(w, sub).loss, lse_oracle({w(2), w(3)}) - w(2), 1e-12);
}

TEST(StepLoss, MaskedTargetThrows) {
    SupervisionStep s{StepKind::patch, 1, 2, -1, 2, {}};
    EXPECT_THROW(grounding_step_loss(Vec::Zero(5), s), ContractViolation);
    SupervisionStep o{StepKind::location, 9, 0, 0, std::nullopt, {}};
    EXPECT_THROW(grounding_step_loss(Vec::Zero(9), o), ContractViolation);
}

TEST(StepLoss, MaskingCompetitorsNeverIncreasesLoss) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 200; ++t) {
        const Vec v = random_vec(rng, 8, 3.0);
        const int target = 5;
        SupervisionStep prev{StepKind::patch, target, 0, -1, std::nullopt, {}};
        double last = grounding_step_loss(v, prev).loss;
        for (int floor = 1; floor <= target; ++floor) {
            SupervisionStep s{StepKind::patch, target, floor, -1, std::nullopt, {}};
            const double l = grounding_step_loss(v, s).loss;
            EXPECT_LE(l, last + 1e-15);
            last = l;
        }
    }
}

TEST(CombineLosses, Examples) {
    const double ln2 = std::log(2.0);
    const std::vector<double> four(4, ln2);
    EXPECT_NEAR(combine_losses(four, std::log(3.0), 0, 0, 4).total, 0.9678, 5e-5);
    EXPECT_NEAR(combine_losses(four, std::log(3.0), 0, 0, 4).total, (4 * ln2 + std::log(3.0)) / 4, 1e-15);
    const std::vector<double> llm{1.0, 2.0, 6.0};
    EXPECT_NEAR(combine_losses(llm, 0, 0, 0, 3).total, 3.0, 1e-15);
    EXPECT_EQ(combine_losses(std::vector<double>(5, 0.0), 0, 0, 0, 5).total, 0.0);
    EXPECT_THROW(combine_losses(llm, 0, 0, 0, 0), InvalidArgument);
}

TEST(TeacherForcing, ReturnsTargetRegardlessOfScores) {
    SupervisionStep s{StepKind::patch, 5, 0, -1, std::nullopt, {}};
    EXPECT_EQ(teacher_force_select(s), 5);
    const GridSpec g = build_grid(56, 56);
    const auto steps = build_targets(g, PointAnnotation{g, {}});
    EXPECT_EQ(teacher_force_select(steps.back()), g.total_tokens());
}
