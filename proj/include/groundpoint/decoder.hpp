#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "groundpoint/geometry.hpp"
#include "groundpoint/nn.hpp"
#include "groundpoint/targets.hpp"

namespace gp {

struct DecodeConfig {
    int max_points = 256;
    bool no_more_points = true;
    bool monotone = true; // point sorting: tokens non-decreasing, subpatches increasing within a token
    int max_id_digits = 3;
};

enum class DecodePhase { text, expect_subpatch, expect_location };

/// What the grammar requires after a grounding selection.
enum class Directive { expect_subpatch, expect_location, text, list_close };

struct Selection {
    StepKind kind = StepKind::patch;
    int index = 0; // for patch: token index, or the token count for the no-more-points class
};

/// Grammar cursor for one generation session.
class DecodeState {
public:
    DecodeState(const GridSpec& grid, const DecodeConfig& config);

    DecodePhase phase() const { return phase_; }
    bool done() const { return done_; }
    int points_emitted() const { return static_cast<int>(points_.size()); }
    int last_token_floor() const { return floor_; }
    std::optional<int> last_token() const { return last_token_; }
    int max_points() const { return config_.max_points; }
    int grounding_steps() const { return steps_; }
    const std::set<std::pair<int, int>>& used_pairs() const { return used_; }
    const std::vector<PointTriple>& points() const { return points_; }
    const GridSpec& grid() const { return grid_; }
    const DecodeConfig& config() const { return config_; }
    int done_class() const { return grid_.total_tokens(); }

    /// Tightens the point budget (the decoder uses it when context runs short).
    void cap_points(int cap);
    /// True when another point may still be started.
    bool can_start_point() const;

    std::vector<bool> legal_patch_mask() const;
    std::vector<bool> legal_subpatch_mask(int token) const;
    Directive step(const Selection& selection);
    /// Text-driven end of the list (only when the no-more-points class is disabled).
    void close();
    void set_object_id(int id);

private:
    bool subpatch_legal(int token, int subpatch) const;

    GridSpec grid_;
    DecodeConfig config_;
    DecodePhase phase_ = DecodePhase::text;
    int floor_ = 0;
    std::optional<int> last_token_;
    int last_subpatch_ = -1;
    int pending_token_ = -1;
    int pending_subpatch_ = -1;
    std::set<std::pair<int, int>> used_;
    std::vector<PointTriple> points_;
    bool done_ = false;
    int steps_ = 0;
};

/// Free-function forms of the mask queries.
std::vector<bool> legal_patch_mask(const DecodeState& state);
std::vector<bool> legal_subpatch_mask(const DecodeState& state, int token);

int masked_argmax(const Vec& scores, const std::vector<bool>& mask);

// Surface format: <points "<PATCH_t><SUBPATCH_s><LOCATION_l>id, ... <PATCH_DONE>">

struct ParsedPoints {
    std::vector<PointTriple> points;
    bool has_done = false;
};

std::string serialize_points(const std::vector<PointTriple>& points, bool with_done = true);
ParsedPoints parse_points(const std::string& text, const GridSpec& grid);
/// Grounding tokens in a serialized list (3 per point plus the done marker).
int count_grounding_tokens(const std::string& text);

// Emitted-token trace used to check the grammar.

enum class TraceKind { patch, subpatch, location, done, digit, sep, close };
struct TraceToken {
    TraceKind kind;
    int value = 0;
};
std::string render_trace(const std::vector<TraceToken>& trace);
bool matches_grammar(const std::vector<TraceToken>& trace, bool no_more_points);

/// Model side of a constrained generation session over one image and query whose
/// prompt (ending in the list-open marker) has already been consumed.
class PointingSession {
public:
    virtual ~PointingSession() = default;
    virtual int tokens() const = 0;
    virtual int subpatches() const = 0;
    /// Free context positions.
    virtual int remaining_context() const = 0;
    virtual Vec text_logits() = 0;
    virtual Vec patch_scores(std::optional<int> prev_selected) = 0;
    virtual Vec subpatch_scores(int token) = 0;
    virtual Vec location_logits() = 0;
    virtual void feed_text(int token_id) = 0;
    /// nullopt feeds the done PATCH token.
    virtual void feed_patch(std::optional<int> selected) = 0;
    virtual void feed_subpatch(int token, int subpatch) = 0;
    virtual void feed_location(int location) = 0;
};

struct DecodeResult {
    std::vector<PixelPoint> points;
    std::vector<PointTriple> triples;
    std::vector<TraceToken> trace;
    int grounding_steps = 0;
    int n_grounding_tokens = 0;
    bool ended_with_done = false;
    std::string text;
};

/// Greedy grammar-constrained rollout.
DecodeResult decode(PointingSession& session, const GridSpec& grid, const DecodeConfig& config);

} // namespace gp
