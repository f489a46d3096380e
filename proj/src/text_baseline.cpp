#include "groundpoint/text_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "groundpoint/errors.hpp"
#include "groundpoint/targets.hpp"

namespace gp {

int to_per_mille(double v, int extent) {
    return std::clamp(static_cast<int>(std::floor(v / extent * 1000.0)), 0, 999);
}

double from_per_mille(int v, int extent) { return (v + 0.5) * extent / 1000.0; }

namespace {

void push_three_digits(std::vector<int>& out, int v) {
    out.push_back(Vocab::digit(v / 100));
    out.push_back(Vocab::digit((v / 10) % 10));
    out.push_back(Vocab::digit(v % 10));
}

int read_three_digits(std::span<const int> tokens, size_t at) {
    int v = 0;
    for (size_t k = at; k < at + 3; ++k) {
        if (!Vocab::is_digit(tokens[k]))
            throw ParseError("expected a coordinate digit", k);
        v = v * 10 + Vocab::digit_value(tokens[k]);
    }
    return v;
}

} // namespace

std::vector<int> encode_text_point(const GridSpec& grid, const PixelPoint& p) {
    if (!(p.x >= 0 && p.x < grid.image_width() && p.y >= 0 && p.y < grid.image_height()))
        throw InvalidArgument("encode_text_point: point outside the image");
    std::vector<int> out;
    out.reserve(kCoordTokensPerPoint);
    push_three_digits(out, to_per_mille(p.x, grid.image_width()));
    out.push_back(Vocab::kSpace);
    push_three_digits(out, to_per_mille(p.y, grid.image_height()));
    out.push_back(Vocab::kSpace);
    return out;
}

PixelPoint decode_text_point(std::span<const int> tokens, const GridSpec& grid, int frame) {
    if (tokens.size() != kCoordTokensPerPoint)
        throw ParseError("coordinate text needs 8 tokens", tokens.size());
    if (tokens[3] != Vocab::kSpace)
        throw ParseError("expected a space", 3);
    if (tokens[7] != Vocab::kSpace)
        throw ParseError("expected a space", 7);
    PixelPoint p;
    p.x = from_per_mille(read_three_digits(tokens, 0), grid.image_width());
    p.y = from_per_mille(read_three_digits(tokens, 4), grid.image_height());
    p.frame = frame;
    return p;
}

std::vector<PixelPoint> order_pixel_points(const GridSpec& grid, std::span<const PixelPoint> points,
                                           bool point_sorting) {
    std::vector<PixelPoint> out(points.begin(), points.end());
    if (!point_sorting)
        return out;
    std::vector<PointTriple> keys;
    keys.reserve(out.size());
    for (const auto& p : out)
        keys.push_back(encode_point(grid, p));
    std::vector<size_t> idx(out.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        return std::tie(keys[a].token, keys[a].subpatch, keys[a].location) <
               std::tie(keys[b].token, keys[b].subpatch, keys[b].location);
    });
    std::vector<PixelPoint> sorted;
    sorted.reserve(out.size());
    for (size_t i : idx)
        sorted.push_back(out[i]);
    return sorted;
}

SequencePlan plan_text_sequence(const GridSpec& grid, int query_color, const std::vector<PixelPoint>& ordered,
                                const Vocab& vocab) {
    SequencePlan plan = plan_prompt(grid, query_color, vocab);
    const auto push = [&](int id) { plan.items.push_back({InputKind::text, id, -1, -1}); };
    for (size_t k = 0; k < ordered.size(); ++k) {
        const PixelPoint& p = ordered[k];
        if (!p.object_id)
            throw InvalidArgument("plan_text_sequence: points need object ids");
        if (k > 0)
            push(Vocab::kSep);
        if (grid.n_frames() > 1) {
            for (int d : id_digits(p.frame))
                push(d);
            push(Vocab::kSpace);
        }
        for (int id : encode_text_point(grid, p))
            push(id);
        for (int d : id_digits(*p.object_id))
            push(d);
    }
    for (int pos = plan.prompt_length - 1; pos < plan.length(); ++pos) {
        const int next = pos + 1 < plan.length() ? plan.items[static_cast<size_t>(pos + 1)].token_id : Vocab::kListClose;
        plan.lm_targets.emplace_back(pos, next);
    }
    return plan;
}

namespace {

int choose(const Vec& logits, const std::vector<int>& allowed) {
    int best = allowed.front();
    for (int id : allowed)
        if (logits(id) > logits(best))
            best = id;
    return best;
}

std::vector<int> digit_ids() {
    std::vector<int> d;
    for (int k = 0; k < 10; ++k)
        d.push_back(Vocab::digit(k));
    return d;
}

} // namespace

TextDecodeResult decode_text(PointingSession& session, const GridSpec& grid, int max_points, int max_id_digits) {
    if (max_id_digits < 1)
        throw InvalidArgument("decode_text: max_id_digits must be positive");
    const bool multi_frame = grid.n_frames() > 1;
    const int frame_digits = static_cast<int>(std::to_string(grid.n_frames() - 1).size());
    const int per_point = kCoordTokensPerPoint + max_id_digits + 1 + (multi_frame ? frame_digits + 1 : 0);
    const int cap = std::max(0, std::min(max_points, (session.remaining_context() - 1) / per_point));
    const std::vector<int> digits = digit_ids();

    TextDecodeResult r;
    const auto emit = [&](int id) {
        r.tokens.push_back(id);
        if (id != Vocab::kListClose)
            session.feed_text(id);
    };
    const auto forced_or_chosen = [&](const std::vector<int>& allowed) {
        return allowed.size() == 1 ? allowed.front() : choose(session.text_logits(), allowed);
    };

    int emitted = 0;
    bool start = true;
    while (true) {
        if (emitted >= cap) {
            emit(Vocab::kListClose);
            break;
        }
        if (start) {
            std::vector<int> allowed = digits;
            allowed.push_back(Vocab::kListClose);
            const int first = forced_or_chosen(allowed);
            if (first == Vocab::kListClose) {
                emit(first);
                break;
            }
            // The chosen digit opens the point; replay it below as the first token.
            r.tokens.push_back(first);
            session.feed_text(first);
        }
        std::vector<int> point_tokens;
        const bool first_fed = start;
        start = false;

        int frame = 0;
        size_t next = 0;
        std::vector<int> layout;
        if (multi_frame) {
            for (int k = 0; k < frame_digits; ++k)
                layout.push_back(-1);
            layout.push_back(Vocab::kSpace);
        }
        for (int k = 0; k < 3; ++k)
            layout.push_back(-1);
        layout.push_back(Vocab::kSpace);
        for (int k = 0; k < 3; ++k)
            layout.push_back(-1);
        layout.push_back(Vocab::kSpace);

        std::vector<int> filled;
        for (int slot : layout) {
            int id;
            if (first_fed && next == 0) {
                id = r.tokens.back();
            } else {
                id = slot < 0 ? forced_or_chosen(digits) : slot;
                emit(id);
            }
            filled.push_back(id);
            ++next;
        }
        size_t off = 0;
        if (multi_frame) {
            for (int k = 0; k < frame_digits; ++k)
                frame = frame * 10 + Vocab::digit_value(filled[off + static_cast<size_t>(k)]);
            frame = std::min(frame, grid.n_frames() - 1);
            off += static_cast<size_t>(frame_digits) + 1;
        }
        PixelPoint p = decode_text_point(std::span<const int>(filled).subspan(off, kCoordTokensPerPoint), grid, frame);
        p.x = std::min(p.x, grid.image_width() - 0.5);
        p.y = std::min(p.y, grid.image_height() - 0.5);

        int id = 0;
        int tok = Vocab::kSep;
        for (int d = 0;; ++d) {
            std::vector<int> allowed;
            if (d < max_id_digits)
                allowed = digits;
            if (d > 0) {
                if (emitted + 1 < cap)
                    allowed.push_back(Vocab::kSep);
                allowed.push_back(Vocab::kListClose);
            }
            tok = forced_or_chosen(allowed);
            if (!Vocab::is_digit(tok))
                break;
            id = id * 10 + Vocab::digit_value(tok);
            emit(tok);
        }
        p.object_id = id;
        r.points.push_back(p);
        ++emitted;
        emit(tok);
        if (tok == Vocab::kListClose)
            break;
    }
    return r;
}

} // namespace gp
