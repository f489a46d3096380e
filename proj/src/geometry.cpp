#include "groundpoint/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "groundpoint/errors.hpp"

namespace gp {

double GridSpec::location_cell_diagonal() const { return std::sqrt(2.0) * location_cell_px(); }

GridSpec build_grid(int image_width_px, int image_height_px, int n_frames, int vit_patch_px, int pool_side) {
    if (image_width_px <= 0 || image_height_px <= 0 || n_frames <= 0)
        throw InvalidArgument("build_grid: image dimensions and frame count must be positive");
    if (vit_patch_px < 3)
        throw InvalidArgument("build_grid: vit_patch_px must be >= 3");
    if (pool_side < 1)
        throw InvalidArgument("build_grid: pool_side must be >= 1");

    GridSpec g;
    g.width_ = image_width_px;
    g.height_ = image_height_px;
    g.frames_ = n_frames;
    g.patch_px_ = vit_patch_px;
    g.pool_side_ = pool_side;
    const int tp = vit_patch_px * pool_side;
    g.tokens_per_row_ = (image_width_px + tp - 1) / tp;
    g.tokens_per_col_ = (image_height_px + tp - 1) / tp;
    return g;
}

namespace {

// Floor-bin a coordinate inside [0, extent) into `bins` equal half-open cells.
int bin_of(double offset, double extent, int bins) {
    const int b = static_cast<int>(std::floor(offset * bins / extent));
    return std::clamp(b, 0, bins - 1);
}

} // namespace

PointTriple encode_point(const GridSpec& grid, const PixelPoint& p) {
    if (!(p.x >= 0.0 && p.x < grid.image_width() && p.y >= 0.0 && p.y < grid.image_height()))
        throw InvalidArgument("encode_point: point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                              ") outside the image");
    if (p.frame < 0 || p.frame >= grid.n_frames())
        throw InvalidArgument("encode_point: frame " + std::to_string(p.frame) + " out of range");

    const int tp = grid.token_px();
    const int pp = grid.patch_px();
    const int tx = static_cast<int>(std::floor(p.x / tp));
    const int ty = static_cast<int>(std::floor(p.y / tp));
    const double lx = p.x - tx * tp;
    const double ly = p.y - ty * tp;
    const int sx = bin_of(lx, tp, grid.pool_side());
    const int sy = bin_of(ly, tp, grid.pool_side());
    const double ux = lx - sx * pp;
    const double uy = ly - sy * pp;
    const int cx = bin_of(ux, pp, GridSpec::kLocationsPerSide);
    const int cy = bin_of(uy, pp, GridSpec::kLocationsPerSide);

    PointTriple t;
    t.token = p.frame * grid.tokens_per_frame() + ty * grid.tokens_per_row() + tx;
    t.subpatch = sy * grid.pool_side() + sx;
    t.location = cy * GridSpec::kLocationsPerSide + cx;
    t.object_id = p.object_id;
    return t;
}

void check_triple(const GridSpec& grid, const PointTriple& t) {
    if (t.token < 0 || t.token >= grid.total_tokens())
        throw InvalidArgument("token index " + std::to_string(t.token) + " out of range");
    if (t.subpatch < 0 || t.subpatch >= grid.subpatches_per_token())
        throw InvalidArgument("subpatch index " + std::to_string(t.subpatch) + " out of range");
    if (t.location < 0 || t.location >= GridSpec::kLocations)
        throw InvalidArgument("location index " + std::to_string(t.location) + " out of range");
}

PixelPoint decode_triple(const GridSpec& grid, const PointTriple& t) {
    check_triple(grid, t);
    const int in_frame = t.token % grid.tokens_per_frame();
    const int tx = in_frame % grid.tokens_per_row();
    const int ty = in_frame / grid.tokens_per_row();
    const int sx = t.subpatch % grid.pool_side();
    const int sy = t.subpatch / grid.pool_side();
    const int cx = t.location % GridSpec::kLocationsPerSide;
    const int cy = t.location / GridSpec::kLocationsPerSide;
    const double cell = grid.location_cell_px();

    PixelPoint p;
    p.x = tx * grid.token_px() + sx * grid.patch_px() + (cx + 0.5) * cell;
    p.y = ty * grid.token_px() + sy * grid.patch_px() + (cy + 0.5) * cell;
    p.x = std::min(p.x, grid.image_width() - 0.5);
    p.y = std::min(p.y, grid.image_height() - 0.5);
    p.frame = frame_of_token(grid, t.token);
    p.object_id = t.object_id;
    return p;
}

std::vector<TokenRect> token_coordinate_map(const GridSpec& grid) {
    std::vector<TokenRect> out;
    out.reserve(static_cast<size_t>(grid.total_tokens()) * grid.subpatches_per_token());
    const int tp = grid.token_px();
    const int pp = grid.patch_px();
    for (int token = 0; token < grid.total_tokens(); ++token) {
        const int in_frame = token % grid.tokens_per_frame();
        const int tx = in_frame % grid.tokens_per_row();
        const int ty = in_frame / grid.tokens_per_row();
        for (int s = 0; s < grid.subpatches_per_token(); ++s) {
            const double x0 = tx * tp + (s % grid.pool_side()) * pp;
            const double y0 = ty * tp + (s / grid.pool_side()) * pp;
            out.push_back({token, s, frame_of_token(grid, token), {x0, y0, x0 + pp, y0 + pp}});
        }
    }
    return out;
}

int frame_of_token(const GridSpec& grid, int token_index) {
    if (token_index < 0 || token_index >= grid.total_tokens())
        throw InvalidArgument("frame_of_token: token " + std::to_string(token_index) + " out of range");
    return token_index / grid.tokens_per_frame();
}

SubpatchCell subpatch_cell(const GridSpec& grid, int token, int subpatch) {
    const int in_frame = token % grid.tokens_per_frame();
    SubpatchCell c;
    c.frame = token / grid.tokens_per_frame();
    c.col = (in_frame % grid.tokens_per_row()) * grid.pool_side() + subpatch % grid.pool_side();
    c.row = (in_frame / grid.tokens_per_row()) * grid.pool_side() + subpatch / grid.pool_side();
    return c;
}

std::pair<int, int> token_subpatch_of_cell(const GridSpec& grid, const SubpatchCell& cell) {
    const int ps = grid.pool_side();
    const int token = cell.frame * grid.tokens_per_frame() + (cell.row / ps) * grid.tokens_per_row() + cell.col / ps;
    const int sub = (cell.row % ps) * ps + cell.col % ps;
    return {token, sub};
}

} // namespace gp
