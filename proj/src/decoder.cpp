#include "groundpoint/decoder.hpp"

#include <algorithm>
#include <limits>
#include <regex>
#include <string_view>

#include "groundpoint/errors.hpp"
#include "groundpoint/vocab.hpp"

namespace gp {

DecodeState::DecodeState(const GridSpec& grid, const DecodeConfig& config) : grid_(grid), config_(config) {
    if (config.max_points < 0)
        throw InvalidArgument("DecodeState: max_points must be non-negative");
}

void DecodeState::cap_points(int cap) { config_.max_points = std::max(0, std::min(config_.max_points, cap)); }

bool DecodeState::subpatch_legal(int token, int subpatch) const {
    if (used_.count({token, subpatch}))
        return false;
    if (config_.monotone && last_token_ && token == *last_token_ && subpatch <= last_subpatch_)
        return false;
    return true;
}

bool DecodeState::can_start_point() const {
    if (done_ || points_emitted() >= config_.max_points)
        return false;
    const int K = grid_.subpatches_per_token();
    for (int t = config_.monotone ? floor_ : 0; t < grid_.total_tokens(); ++t)
        for (int s = 0; s < K; ++s)
            if (subpatch_legal(t, s))
                return true;
    return false;
}

std::vector<bool> DecodeState::legal_patch_mask() const {
    if (done_ || phase_ != DecodePhase::text)
        throw ContractViolation("legal_patch_mask: no patch step is expected in the current phase");
    const int I = grid_.total_tokens();
    const int K = grid_.subpatches_per_token();
    std::vector<bool> mask(static_cast<size_t>(I + (config_.no_more_points ? 1 : 0)), false);
    if (points_emitted() < config_.max_points) {
        for (int t = config_.monotone ? floor_ : 0; t < I; ++t)
            for (int s = 0; s < K; ++s)
                if (subpatch_legal(t, s)) {
                    mask[static_cast<size_t>(t)] = true;
                    break;
                }
    }
    if (config_.no_more_points)
        mask.back() = true;
    return mask;
}

std::vector<bool> DecodeState::legal_subpatch_mask(int token) const {
    if (phase_ != DecodePhase::expect_subpatch)
        throw ContractViolation("legal_subpatch_mask: no subpatch step is expected in the current phase");
    if (token < 0 || token >= grid_.total_tokens())
        throw InvalidArgument("legal_subpatch_mask: token out of range");
    std::vector<bool> mask(static_cast<size_t>(grid_.subpatches_per_token()));
    for (int s = 0; s < grid_.subpatches_per_token(); ++s)
        mask[static_cast<size_t>(s)] = subpatch_legal(token, s);
    return mask;
}

Directive DecodeState::step(const Selection& sel) {
    if (done_)
        throw ConstraintViolation("step: the point list is already closed");
    switch (phase_) {
    case DecodePhase::text: {
        if (sel.kind != StepKind::patch)
            throw ConstraintViolation("step: expected a patch selection");
        const auto mask = legal_patch_mask();
        if (sel.index < 0 || sel.index >= static_cast<int>(mask.size()) || !mask[static_cast<size_t>(sel.index)])
            throw ConstraintViolation("step: illegal patch selection " + std::to_string(sel.index));
        ++steps_;
        if (config_.no_more_points && sel.index == done_class()) {
            done_ = true;
            return Directive::list_close;
        }
        pending_token_ = sel.index;
        if (config_.monotone)
            floor_ = sel.index;
        phase_ = DecodePhase::expect_subpatch;
        return Directive::expect_subpatch;
    }
    case DecodePhase::expect_subpatch: {
        if (sel.kind != StepKind::subpatch)
            throw ConstraintViolation("step: expected a subpatch selection");
        if (sel.index < 0 || sel.index >= grid_.subpatches_per_token() || !subpatch_legal(pending_token_, sel.index))
            throw ConstraintViolation("step: illegal subpatch selection " + std::to_string(sel.index));
        ++steps_;
        pending_subpatch_ = sel.index;
        phase_ = DecodePhase::expect_location;
        return Directive::expect_location;
    }
    case DecodePhase::expect_location: {
        if (sel.kind != StepKind::location)
            throw ConstraintViolation("step: expected a location selection");
        if (sel.index < 0 || sel.index >= GridSpec::kLocations)
            throw ConstraintViolation("step: illegal location selection " + std::to_string(sel.index));
        ++steps_;
        used_.emplace(pending_token_, pending_subpatch_);
        points_.push_back({pending_token_, pending_subpatch_, sel.index, std::nullopt});
        last_token_ = pending_token_;
        last_subpatch_ = pending_subpatch_;
        phase_ = DecodePhase::text;
        return Directive::text;
    }
    }
    throw ConstraintViolation("step: unknown phase");
}

void DecodeState::close() {
    if (config_.no_more_points)
        throw ConstraintViolation("close: the list must end through the no-more-points class");
    if (done_ || phase_ != DecodePhase::text)
        throw ConstraintViolation("close: the list cannot end here");
    done_ = true;
}

void DecodeState::set_object_id(int id) {
    if (points_.empty())
        throw ContractViolation("set_object_id: no point to label");
    points_.back().object_id = id;
}

std::vector<bool> legal_patch_mask(const DecodeState& state) { return state.legal_patch_mask(); }
std::vector<bool> legal_subpatch_mask(const DecodeState& state, int token) { return state.legal_subpatch_mask(token); }

int masked_argmax(const Vec& scores, const std::vector<bool>& mask) {
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        if (!mask[static_cast<size_t>(i)])
            continue;
        if (best < 0 || scores(i) > best_score) {
            best = static_cast<int>(i);
            best_score = scores(i);
        }
    }
    if (best < 0)
        throw ConstraintViolation("masked_argmax: no legal candidate");
    return best;
}

// ---------------------------------------------------------------------------
// Surface text

namespace {

constexpr std::string_view kOpen = "<points \"";
constexpr std::string_view kClose = "\">";
constexpr std::string_view kSepText = ", ";
constexpr std::string_view kDone = "<PATCH_DONE>";

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    bool at_end() const { return pos_ == s_.size(); }
    size_t pos() const { return pos_; }
    bool peek(std::string_view lit) const { return s_.compare(pos_, lit.size(), lit) == 0; }

    void expect(std::string_view lit) {
        if (!peek(lit))
            throw ParseError("expected '" + std::string(lit) + "'", pos_);
        pos_ += lit.size();
    }

    int integer() {
        const size_t start = pos_;
        long long v = 0;
        while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') {
            v = v * 10 + (s_[pos_] - '0');
            if (v > std::numeric_limits<int>::max())
                throw ParseError("integer overflow", start);
            ++pos_;
        }
        if (pos_ == start)
            throw ParseError("expected digits", pos_);
        return static_cast<int>(v);
    }

private:
    const std::string& s_;
    size_t pos_ = 0;
};

} // namespace

std::string serialize_points(const std::vector<PointTriple>& points, bool with_done) {
    std::string out(kOpen);
    for (size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        if (!p.object_id)
            throw InvalidArgument("serialize_points: every point needs an object id");
        if (k > 0)
            out += kSepText;
        out += "<PATCH_" + std::to_string(p.token) + "><SUBPATCH_" + std::to_string(p.subpatch) + "><LOCATION_" +
               std::to_string(p.location) + ">" + std::to_string(*p.object_id);
    }
    if (with_done) {
        if (!points.empty())
            out += kSepText;
        out += kDone;
    }
    out += kClose;
    return out;
}

ParsedPoints parse_points(const std::string& text, const GridSpec& grid) {
    Parser p(text);
    ParsedPoints out;
    p.expect(kOpen);
    bool first = true;
    while (true) {
        if (p.peek(kClose)) {
            p.expect(kClose);
            break;
        }
        if (!first)
            p.expect(kSepText);
        if (p.peek(kDone)) {
            p.expect(kDone);
            p.expect(kClose);
            out.has_done = true;
            break;
        }
        const size_t start = p.pos();
        PointTriple t;
        p.expect("<PATCH_");
        t.token = p.integer();
        p.expect("><SUBPATCH_");
        t.subpatch = p.integer();
        p.expect("><LOCATION_");
        t.location = p.integer();
        p.expect(">");
        t.object_id = p.integer();
        try {
            check_triple(grid, t);
        } catch (const InvalidArgument& e) {
            throw ParseError(e.what(), start);
        }
        out.points.push_back(t);
        first = false;
    }
    if (!p.at_end())
        throw ParseError("trailing characters", p.pos());
    return out;
}

int count_grounding_tokens(const std::string& text) {
    int n = 0;
    for (std::string_view marker : {"<PATCH_", "<SUBPATCH_", "<LOCATION_"}) {
        for (size_t pos = text.find(marker); pos != std::string::npos; pos = text.find(marker, pos + 1))
            ++n;
    }
    return n;
}

std::string render_trace(const std::vector<TraceToken>& trace) {
    std::string s;
    for (const auto& t : trace) {
        switch (t.kind) {
        case TraceKind::patch: s += 'P'; break;
        case TraceKind::subpatch: s += 'S'; break;
        case TraceKind::location: s += 'L'; break;
        case TraceKind::done: s += 'D'; break;
        case TraceKind::digit: s += 'd'; break;
        case TraceKind::sep: s += ','; break;
        case TraceKind::close: s += '>'; break;
        }
    }
    return s;
}

bool matches_grammar(const std::vector<TraceToken>& trace, bool no_more_points) {
    static const std::regex with_done("^(PSLd+,)*D>$");
    static const std::regex without_done("^((PSLd+,)*PSLd+)?>$");
    return std::regex_match(render_trace(trace), no_more_points ? with_done : without_done);
}

// ---------------------------------------------------------------------------
// Rollout

namespace {

int choose_text(const Vec& logits, const std::vector<int>& allowed) {
    int best = allowed.front();
    for (int id : allowed)
        if (logits(id) > logits(best))
            best = id;
    return best;
}

} // namespace

DecodeResult decode(PointingSession& session, const GridSpec& grid, const DecodeConfig& config) {
    if (session.tokens() != grid.total_tokens() || session.subpatches() != grid.subpatches_per_token())
        throw InvalidArgument("decode: session does not match the grid");
    if (config.max_id_digits < 1)
        throw InvalidArgument("decode: max_id_digits must be positive");

    DecodeState st(grid, config);
    // Room for the final done PATCH and terminator, then whole points.
    const int per_point = 3 + config.max_id_digits + 1;
    st.cap_points(std::max(0, (session.remaining_context() - 2) / per_point));

    DecodeResult r;
    bool list_start = true;
    while (!st.done()) {
        if (!config.no_more_points) {
            bool patch_next = st.can_start_point();
            if (patch_next && list_start)
                patch_next = choose_text(session.text_logits(), {Vocab::kPatch, Vocab::kListClose}) == Vocab::kPatch;
            if (!patch_next) {
                st.close();
                r.trace.push_back({TraceKind::close});
                break;
            }
        }
        list_start = false;

        const Vec ps = session.patch_scores(st.last_token());
        const int sel = masked_argmax(ps, st.legal_patch_mask());
        if (st.step({StepKind::patch, sel}) == Directive::list_close) {
            session.feed_patch(std::nullopt);
            r.trace.push_back({TraceKind::done});
            r.trace.push_back({TraceKind::close});
            r.ended_with_done = true;
            break;
        }
        session.feed_patch(sel);
        r.trace.push_back({TraceKind::patch, sel});

        const Vec ss = session.subpatch_scores(sel);
        const int sub = masked_argmax(ss, st.legal_subpatch_mask(sel));
        st.step({StepKind::subpatch, sub});
        session.feed_subpatch(sel, sub);
        r.trace.push_back({TraceKind::subpatch, sub});

        const Vec ls = session.location_logits();
        const int loc = masked_argmax(ls, std::vector<bool>(static_cast<size_t>(ls.size()), true));
        st.step({StepKind::location, loc});
        session.feed_location(loc);
        r.trace.push_back({TraceKind::location, loc});

        int id = 0;
        for (int digits = 0;; ++digits) {
            std::vector<int> allowed;
            if (digits < config.max_id_digits)
                for (int d = 0; d < 10; ++d)
                    allowed.push_back(Vocab::digit(d));
            if (digits > 0) {
                if (config.no_more_points || st.can_start_point())
                    allowed.push_back(Vocab::kSep);
                if (!config.no_more_points)
                    allowed.push_back(Vocab::kListClose);
            }
            const int tok = allowed.size() == 1 ? allowed.front() : choose_text(session.text_logits(), allowed);
            if (Vocab::is_digit(tok)) {
                id = id * 10 + Vocab::digit_value(tok);
                session.feed_text(tok);
                r.trace.push_back({TraceKind::digit, Vocab::digit_value(tok)});
                continue;
            }
            st.set_object_id(id);
            if (tok == Vocab::kSep) {
                session.feed_text(tok);
                r.trace.push_back({TraceKind::sep});
            } else {
                st.close();
                r.trace.push_back({TraceKind::close});
            }
            break;
        }
    }

    r.triples = st.points();
    for (const auto& t : r.triples)
        r.points.push_back(decode_triple(grid, t));
    r.grounding_steps = st.grounding_steps();
    r.n_grounding_tokens = 3 * static_cast<int>(r.triples.size()) + (r.ended_with_done ? 1 : 0);
    r.text = serialize_points(r.triples, r.ended_with_done);
    return r;
}

} // namespace gp
