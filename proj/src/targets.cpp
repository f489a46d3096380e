#include "groundpoint/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "groundpoint/errors.hpp"

namespace gp {

namespace {

void reject_duplicates(std::span<const PointTriple> triples) {
    std::set<std::pair<int, int>> seen;
    for (const auto& t : triples)
        if (!seen.emplace(t.token, t.subpatch).second)
            throw DuplicatePoint("duplicate point at token " + std::to_string(t.token) + ", subpatch " +
                                 std::to_string(t.subpatch));
}

std::vector<PointTriple> encode_all(const GridSpec& grid, std::span<const PixelPoint> points) {
    std::vector<PointTriple> out;
    out.reserve(points.size());
    for (const auto& p : points)
        out.push_back(encode_point(grid, p));
    return out;
}

} // namespace

std::vector<PointTriple> sort_points(const GridSpec& grid, std::span<const PixelPoint> points) {
    auto triples = encode_all(grid, points);
    std::stable_sort(triples.begin(), triples.end(), [](const PointTriple& a, const PointTriple& b) {
        return std::tie(a.token, a.subpatch, a.location) < std::tie(b.token, b.subpatch, b.location);
    });
    reject_duplicates(triples);
    return triples;
}

std::vector<PointTriple> order_points(const GridSpec& grid, std::span<const PixelPoint> points,
                                      const TargetOptions& options) {
    if (options.point_sorting)
        return sort_points(grid, points);
    auto triples = encode_all(grid, points);
    reject_duplicates(triples);
    return triples;
}

std::vector<SupervisionStep> build_targets(const GridSpec& grid, std::span<const PointTriple> ordered,
                                           const TargetOptions& options) {
    std::vector<SupervisionStep> steps;
    steps.reserve(ordered.size() * 3 + 1);
    int floor = 0;
    std::optional<int> prev;
    int prev_subpatch = -1;
    std::set<std::pair<int, int>> used;
    for (const auto& t : ordered) {
        check_triple(grid, t);
        if (options.point_sorting && t.token < floor)
            throw ContractViolation("build_targets: points are not in sorted order");
        steps.push_back({StepKind::patch, t.token, options.point_sorting ? floor : 0, -1, prev, {}});
        SupervisionStep sub{StepKind::subpatch, t.subpatch, 0, t.token, std::nullopt, {}};
        for (int s = 0; s < grid.subpatches_per_token(); ++s) {
            const bool below = options.point_sorting && prev == t.token && s <= prev_subpatch;
            if (below || used.count({t.token, s}))
                sub.blocked.push_back(s);
        }
        steps.push_back(std::move(sub));
        steps.push_back({StepKind::location, t.location, 0, t.token, std::nullopt, {}});
        if (options.point_sorting)
            floor = t.token;
        prev = t.token;
        prev_subpatch = t.subpatch;
        used.insert({t.token, t.subpatch});
    }
    if (options.no_more_points)
        steps.push_back({StepKind::patch, grid.total_tokens(), floor, -1, prev, {}});
    return steps;
}

std::vector<SupervisionStep> build_targets(const GridSpec& grid, const PointAnnotation& annotation,
                                           const TargetOptions& options) {
    const auto ordered = order_points(grid, annotation.points, options);
    return build_targets(grid, std::span<const PointTriple>(ordered), options);
}

std::vector<bool> step_mask(const SupervisionStep& step, Eigen::Index n_scores, bool has_done_class) {
    std::vector<bool> mask(static_cast<size_t>(n_scores), true);
    if (step.kind == StepKind::subpatch)
        for (int s : step.blocked)
            if (s >= 0 && s < n_scores)
                mask[static_cast<size_t>(s)] = false;
    if (step.kind != StepKind::patch)
        return mask;
    const Eigen::Index tokens = has_done_class ? n_scores - 1 : n_scores;
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(step.legal_floor, tokens); ++i)
        mask[static_cast<size_t>(i)] = false;
    return mask;
}

StepLoss grounding_step_loss(const Vec& scores, const SupervisionStep& step, bool has_done_class) {
    if (step.target < 0 || step.target >= scores.size())
        throw ContractViolation("grounding_step_loss: target " + std::to_string(step.target) + " outside " +
                                std::to_string(scores.size()) + " classes");
    const auto mask = step_mask(step, scores.size(), has_done_class);
    if (!mask[static_cast<size_t>(step.target)])
        throw ContractViolation("grounding_step_loss: target is masked out");
    StepLoss out;
    out.grad = Vec::Zero(scores.size());
    const double lse = masked_logsumexp(scores, mask);
    if (std::isinf(scores(step.target)) && scores(step.target) > 0) {
        out.loss = 0.0;
        return out;
    }
    out.loss = lse - scores(step.target);
    for (Eigen::Index i = 0; i < scores.size(); ++i)
        if (mask[static_cast<size_t>(i)])
            out.grad(i) = std::exp(scores(i) - lse);
    out.grad(step.target) -= 1.0;
    return out;
}

LossBreakdown combine_losses(std::span<const double> llm_losses, double patch_loss, double subpatch_loss,
                             double location_loss, int n_tokens) {
    if (n_tokens <= 0)
        throw InvalidArgument("combine_losses: n_tokens must be positive");
    LossBreakdown b;
    b.patch_loss = patch_loss;
    b.subpatch_loss = subpatch_loss;
    b.location_loss = location_loss;
    b.llm_token_loss_sum = std::accumulate(llm_losses.begin(), llm_losses.end(), 0.0);
    b.n_tokens = n_tokens;
    b.total = (b.llm_token_loss_sum + patch_loss + subpatch_loss + location_loss) / n_tokens;
    if (!std::isfinite(b.total))
        throw NumericError("combine_losses: non-finite total loss");
    return b;
}

} // namespace gp
