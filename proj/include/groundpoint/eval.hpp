#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "groundpoint/backbone.hpp"
#include "groundpoint/geometry.hpp"

namespace gp {

struct MatchConfig {
    double radius_px = 0.0; // must be positive

    static MatchConfig for_grid(const GridSpec& grid) { return {grid.location_cell_diagonal()}; }
};

struct PointMatch {
    int matched = 0;
    int n_pred = 0;
    int n_gt = 0;
};

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_by_convention = false; // no predictions: precision reported as 1 (recall likewise for no truth)
};

/// Greedy one-to-one matching by ascending distance, same frame only, within the radius.
/// Equal distances are broken by (pred index, gt index).
PointMatch match_points(const std::vector<PixelPoint>& preds, const std::vector<PixelPoint>& gts,
                        const MatchConfig& cfg);
PRF prf_from_counts(long long matched, long long n_pred, long long n_gt);
PRF point_prf(const std::vector<PixelPoint>& preds, const std::vector<PixelPoint>& gts, const MatchConfig& cfg);

struct CountResult {
    bool correct = false;
    bool close = false;
    bool overcount = false;
};

/// 1 + floor(0.05 * gt)
int close_tolerance(int gt_n);
CountResult count_metrics(int pred_n, int gt_n);

struct MetricsReport {
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
    double count_accuracy = 0.0;
    double close_accuracy = 0.0;
    double overcount_rate = 0.0;
    int n_examples = 0;
    int empty_prediction_examples = 0; // examples scored with the empty-prediction precision convention
    double match_radius_px = 0.0;

    std::string to_json() const;
};

/// Micro-averaged point metrics plus per-example count metrics.
class MetricsAccumulator {
public:
    void add(const std::vector<PixelPoint>& preds, const std::vector<PixelPoint>& gts, const MatchConfig& cfg);
    MetricsReport report() const;

private:
    long long matched_ = 0, n_pred_ = 0, n_gt_ = 0;
    int n_ = 0, correct_ = 0, close_ = 0, overcount_ = 0, empty_ = 0;
    double radius_ = 0.0;
};

/// Binary PPM (frames side by side): image colors, gt crosses, prediction circles.
std::vector<std::uint8_t> render_overlay(const SyntheticImage& image, const std::vector<PixelPoint>& preds,
                                         const std::vector<PixelPoint>& gts);
void render_overlay(const SyntheticImage& image, const std::vector<PixelPoint>& preds,
                    const std::vector<PixelPoint>& gts, const std::string& path);

/// Pixel a point is drawn at.
std::pair<int, int> overlay_pixel(const PixelPoint& p);

} // namespace gp
