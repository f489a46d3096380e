#pragma once

#include <compare>
#include <optional>
#include <vector>

namespace gp {

/// One point in pixel space. Coordinates are in the unpadded image of one frame.
struct PixelPoint {
    double x = 0.0;
    double y = 0.0;
    int frame = 0;
    std::optional<int> object_id;

    bool operator==(const PixelPoint&) const = default;
};

/// Coarse-to-fine index of a point: image token, ViT subpatch inside the token,
/// and 3x3 location cell inside the subpatch.
struct PointTriple {
    int token = 0;
    int subpatch = 0;
    int location = 0;
    std::optional<int> object_id;

    bool operator==(const PointTriple&) const = default;
    bool same_pair(const PointTriple& o) const { return token == o.token && subpatch == o.subpatch; }
};

struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double area() const { return (x1 - x0) * (y1 - y0); }
};

struct TokenRect {
    int token = 0;
    int subpatch = 0;
    int frame = 0;
    Rect rect; // padded-canvas pixels of the frame, half-open
};

/// Tiling of an image (or frame stack) into image tokens, subpatches and location cells.
/// Raster order is frame-major, then row-major. The canvas is padded on the right and
/// bottom up to a whole number of image tokens.
class GridSpec {
public:
    static constexpr int kLocationsPerSide = 3;
    static constexpr int kLocations = kLocationsPerSide * kLocationsPerSide;

    GridSpec() = default;

    int image_width() const { return width_; }
    int image_height() const { return height_; }
    int n_frames() const { return frames_; }
    int patch_px() const { return patch_px_; }
    int pool_side() const { return pool_side_; }
    int token_px() const { return patch_px_ * pool_side_; }
    int padded_width() const { return tokens_per_row_ * token_px(); }
    int padded_height() const { return tokens_per_col_ * token_px(); }
    int tokens_per_row() const { return tokens_per_row_; }
    int tokens_per_col() const { return tokens_per_col_; }
    int tokens_per_frame() const { return tokens_per_row_ * tokens_per_col_; }
    int total_tokens() const { return tokens_per_frame() * frames_; }
    int subpatches_per_token() const { return pool_side_ * pool_side_; }
    int subpatches_per_row() const { return tokens_per_row_ * pool_side_; }
    int subpatches_per_col() const { return tokens_per_col_ * pool_side_; }

    /// Edge length of one location cell (a uniform third of a subpatch).
    double location_cell_px() const { return patch_px_ / static_cast<double>(kLocationsPerSide); }
    double location_cell_diagonal() const;

    bool operator==(const GridSpec&) const = default;

private:
    friend GridSpec build_grid(int, int, int, int, int);

    int width_ = 0;
    int height_ = 0;
    int frames_ = 1;
    int patch_px_ = 14;
    int pool_side_ = 2;
    int tokens_per_row_ = 0;
    int tokens_per_col_ = 0;
};

GridSpec build_grid(int image_width_px, int image_height_px, int n_frames = 1, int vit_patch_px = 14,
                    int pool_side = 2);

PointTriple encode_point(const GridSpec& grid, const PixelPoint& p);

/// Center of the location cell, clamped into the unpadded image.
PixelPoint decode_triple(const GridSpec& grid, const PointTriple& t);

std::vector<TokenRect> token_coordinate_map(const GridSpec& grid);

int frame_of_token(const GridSpec& grid, int token_index);

/// Global subpatch cell coordinates (column, row) within a frame for a (token, subpatch) pair.
struct SubpatchCell {
    int frame = 0;
    int col = 0;
    int row = 0;
};
SubpatchCell subpatch_cell(const GridSpec& grid, int token, int subpatch);
/// Inverse of subpatch_cell.
std::pair<int, int> token_subpatch_of_cell(const GridSpec& grid, const SubpatchCell& cell);

void check_triple(const GridSpec& grid, const PointTriple& t);

} // namespace gp
