#pragma once

#include <optional>
#include <span>
#include <vector>

#include "groundpoint/geometry.hpp"
#include "groundpoint/nn.hpp"

namespace gp {

struct PointAnnotation {
    GridSpec grid;
    std::vector<PixelPoint> points;
};

enum class StepKind { patch, subpatch, location };

/// One teacher-forced grounding decision.
struct SupervisionStep {
    StepKind kind = StepKind::patch;
    int target = 0;      // patch targets may equal the token count (the no-more-points class)
    int legal_floor = 0; // patch candidates below this index are masked
    int token = -1;      // subpatch/location steps: the image token the point lives in
    std::optional<int> prev_selected; // patch steps: rotary query position
    std::vector<int> blocked;         // subpatch steps: indices the decoder would forbid in this token

    bool operator==(const SupervisionStep&) const = default;
};

struct TargetOptions {
    bool point_sorting = true;
    bool no_more_points = true;
};

struct LossBreakdown {
    double patch_loss = 0.0;    // L_p
    double subpatch_loss = 0.0; // L_s
    double location_loss = 0.0; // L_loc
    double llm_token_loss_sum = 0.0;
    int n_tokens = 0;
    double total = 0.0;
};

/// Encodes and sorts by (token, subpatch, location); rejects repeated (token, subpatch) pairs.
std::vector<PointTriple> sort_points(const GridSpec& grid, std::span<const PixelPoint> points);

/// Triples in decoding order: sorted, or annotation order when sorting is disabled.
std::vector<PointTriple> order_points(const GridSpec& grid, std::span<const PixelPoint> points,
                                      const TargetOptions& options = {});

/// 3n+1 steps (3n without the no-more-points class).
std::vector<SupervisionStep> build_targets(const GridSpec& grid, const PointAnnotation& annotation,
                                           const TargetOptions& options = {});
std::vector<SupervisionStep> build_targets(const GridSpec& grid, std::span<const PointTriple> ordered,
                                           const TargetOptions& options = {});

/// Legal classes for a step over `n_scores` scores. With `has_done_class` the last
/// score is the no-more-points class and is always legal.
std::vector<bool> step_mask(const SupervisionStep& step, Eigen::Index n_scores, bool has_done_class);

struct StepLoss {
    double loss = 0.0;
    Vec grad; // d loss / d scores; zero on masked entries
};

/// Masked softmax cross-entropy at the step's target.
StepLoss grounding_step_loss(const Vec& scores, const SupervisionStep& step, bool has_done_class = true);

LossBreakdown combine_losses(std::span<const double> llm_losses, double patch_loss, double subpatch_loss,
                             double location_loss, int n_tokens);

inline int teacher_force_select(const SupervisionStep& step) { return step.target; }

} // namespace gp
