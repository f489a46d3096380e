#pragma once

#include <span>
#include <vector>

#include "groundpoint/backbone.hpp"
#include "groundpoint/decoder.hpp"
#include "groundpoint/geometry.hpp"
#include "groundpoint/vocab.hpp"

namespace gp {

/// Digit-text coordinates: "xxx yyy " with per-mille values of the unpadded extent.
inline constexpr int kCoordTokensPerPoint = 8;

int to_per_mille(double v, int extent);
double from_per_mille(int v, int extent);

std::vector<int> encode_text_point(const GridSpec& grid, const PixelPoint& p);
/// Parses the 8 coordinate tokens; `frame` is carried through.
PixelPoint decode_text_point(std::span<const int> tokens, const GridSpec& grid, int frame = 0);

/// Points in the same order the grounding head would emit them.
std::vector<PixelPoint> order_pixel_points(const GridSpec& grid, std::span<const PixelPoint> points,
                                           bool point_sorting);

/// Teacher-forced sequence for the text-coordinate head. Multi-frame grids prefix each
/// point with its frame index and a space (timestamp overhead, not point tokens).
SequencePlan plan_text_sequence(const GridSpec& grid, int query_color, const std::vector<PixelPoint>& ordered,
                                const Vocab& vocab);

struct TextDecodeResult {
    std::vector<PixelPoint> points;
    std::vector<int> tokens; // generated ids after the list-open marker
};

/// Greedy digit-text rollout constrained to the coordinate format.
TextDecodeResult decode_text(PointingSession& session, const GridSpec& grid, int max_points, int max_id_digits = 3);

} // namespace gp
