#include "groundpoint/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

#include <json.hpp>

#include "groundpoint/errors.hpp"

namespace gp {

PointMatch match_points(const std::vector<PixelPoint>& preds, const std::vector<PixelPoint>& gts,
                        const MatchConfig& cfg) {
    if (!(cfg.radius_px > 0))
        throw InvalidArgument("match_points: radius must be positive");
    struct Pair {
        double d;
        int p, g;
    };
    std::vector<Pair> pairs;
    for (int p = 0; p < static_cast<int>(preds.size()); ++p)
        for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
            const auto& a = preds[static_cast<size_t>(p)];
            const auto& b = gts[static_cast<size_t>(g)];
            if (a.frame != b.frame)
                continue;
            const double d = std::hypot(a.x - b.x, a.y - b.y);
            if (d <= cfg.radius_px)
                pairs.push_back({d, p, g});
        }
    std::sort(pairs.begin(), pairs.end(),
              [](const Pair& a, const Pair& b) { return std::tie(a.d, a.p, a.g) < std::tie(b.d, b.p, b.g); });
    std::vector<bool> pred_used(preds.size()), gt_used(gts.size());
    PointMatch m{0, static_cast<int>(preds.size()), static_cast<int>(gts.size())};
    for (const Pair& pr : pairs) {
        if (pred_used[static_cast<size_t>(pr.p)] || gt_used[static_cast<size_t>(pr.g)])
            continue;
        pred_used[static_cast<size_t>(pr.p)] = gt_used[static_cast<size_t>(pr.g)] = true;
        ++m.matched;
    }
    return m;
}

PRF prf_from_counts(long long matched, long long n_pred, long long n_gt) {
    PRF r;
    r.precision_by_convention = n_pred == 0;
    r.precision = n_pred == 0 ? 1.0 : static_cast<double>(matched) / n_pred;
    r.recall = n_gt == 0 ? 1.0 : static_cast<double>(matched) / n_gt;
    const double s = r.precision + r.recall;
    r.f1 = s > 0 ? 2.0 * r.precision * r.recall / s : 0.0;
    return r;
}

PRF point_prf(const std::vector<PixelPoint>& preds, const std::vector<PixelPoint>& gts, const MatchConfig& cfg) {
    const PointMatch m = match_points(preds, gts, cfg);
    return prf_from_counts(m.matched, m.n_pred, m.n_gt);
}

int close_tolerance(int gt_n) { return 1 + static_cast<int>(std::floor(0.05 * gt_n)); }

CountResult count_metrics(int pred_n, int gt_n) {
    if (pred_n < 0 || gt_n < 0)
        throw InvalidArgument("count_metrics: counts must be non-negative");
    CountResult r;
    r.correct = pred_n == gt_n;
    r.close = std::abs(pred_n - gt_n) <= close_tolerance(gt_n);
    r.overcount = pred_n > 10 && pred_n >= 2 * gt_n;
    return r;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j = {
        {"precision", precision},
        {"recall", recall},
        {"f1", f1},
        {"count_accuracy", count_accuracy},
        {"close_accuracy", close_accuracy},
        {"overcount_rate", overcount_rate},
        {"n_examples", n_examples},
        {"empty_prediction_examples", empty_prediction_examples},
        {"match_radius_px", match_radius_px},
        {"matching", "radius stand-in for mask matching"},
    };
    return j.dump();
}

void MetricsAccumulator::add(const std::vector<PixelPoint>& preds, const std::vector<PixelPoint>& gts,
                             const MatchConfig& cfg) {
    const PointMatch m = match_points(preds, gts, cfg);
    matched_ += m.matched;
    n_pred_ += m.n_pred;
    n_gt_ += m.n_gt;
    const CountResult c = count_metrics(m.n_pred, m.n_gt);
    correct_ += c.correct;
    close_ += c.close;
    overcount_ += c.overcount;
    empty_ += preds.empty() && !gts.empty();
    radius_ = cfg.radius_px;
    ++n_;
}

MetricsReport MetricsAccumulator::report() const {
    MetricsReport r;
    const PRF prf = prf_from_counts(matched_, n_pred_, n_gt_);
    r.precision = prf.precision;
    r.recall = prf.recall;
    r.f1 = prf.f1;
    r.n_examples = n_;
    r.empty_prediction_examples = empty_;
    r.match_radius_px = radius_;
    if (n_ > 0) {
        r.count_accuracy = static_cast<double>(correct_) / n_;
        r.close_accuracy = static_cast<double>(close_) / n_;
        r.overcount_rate = static_cast<double>(overcount_) / n_;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Overlay

namespace {

struct Rgb {
    std::uint8_t r, g, b;
};

Rgb palette(int c) {
    static const Rgb colors[] = {{230, 25, 75},  {60, 180, 75},  {0, 130, 200},  {245, 130, 48},
                                 {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60},
                                 {250, 190, 212}, {0, 128, 128}, {170, 110, 40}, {128, 128, 128}};
    return colors[c % 12];
}

} // namespace

std::pair<int, int> overlay_pixel(const PixelPoint& p) {
    return {static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))};
}

std::vector<std::uint8_t> render_overlay(const SyntheticImage& image, const std::vector<PixelPoint>& preds,
                                         const std::vector<PixelPoint>& gts) {
    image.validate();
    const GridSpec& g = image.grid;
    const int fw = g.image_width(), h = g.image_height(), frames = g.n_frames();
    const int w = fw * frames;
    const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const size_t base = out.size();
    out.resize(base + static_cast<size_t>(w) * h * 3);

    const auto put = [&](int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= w || y >= h)
            return;
        const size_t at = base + (static_cast<size_t>(y) * w + x) * 3;
        out[at] = c.r;
        out[at + 1] = c.g;
        out[at + 2] = c.b;
    };
    const int patch = g.patch_px();
    for (int f = 0; f < frames; ++f)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < fw; ++x)
                put(f * fw + x, y, palette(image.color_at({f, x / patch, y / patch})));

    const Rgb white{255, 255, 255}, black{0, 0, 0};
    for (const auto& p : gts) {
        const auto [cx, cy] = overlay_pixel(p);
        for (int d = -2; d <= 2; ++d) {
            put(p.frame * fw + cx + d, cy, white);
            put(p.frame * fw + cx, cy + d, white);
        }
    }
    for (const auto& p : preds) {
        const auto [cx, cy] = overlay_pixel(p);
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx) {
                const int r2 = dx * dx + dy * dy;
                if (r2 >= 5 && r2 <= 10)
                    put(p.frame * fw + cx + dx, cy + dy, black);
            }
    }
    return out;
}

void render_overlay(const SyntheticImage& image, const std::vector<PixelPoint>& preds,
                    const std::vector<PixelPoint>& gts, const std::string& path) {
    const auto bytes = render_overlay(image, preds, gts);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("write failed: " + path);
}

} // namespace gp
