#pragma once

#include <random>

#include "groundpoint/heads.hpp"

namespace gp::testing {

inline Mat random_mat(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Mat m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k)
        m.data()[k] = n(rng);
    return m;
}

inline Vec random_vec(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0) { return random_mat(rng, n, 1, sd).col(0); }

/// Grounding parameters with randomized norms and bias so the oracles exercise every term.
inline GroundingParams random_params(std::mt19937_64& rng, const HeadConfig& cfg) {
    GroundingParams p = GroundingParams::init(cfg, rng);
    p.patch_norm = {random_vec(rng, cfg.hidden_dim, 0.3).array() + 1.0, random_vec(rng, cfg.hidden_dim, 0.3)};
    p.subpatch_query_norm = {random_vec(rng, cfg.hidden_dim, 0.3).array() + 1.0, random_vec(rng, cfg.hidden_dim, 0.3)};
    p.subpatch_key_norm = {random_vec(rng, cfg.vit_dim, 0.3).array() + 1.0, random_vec(rng, cfg.vit_dim, 0.3)};
    p.location_bias = random_vec(rng, GridSpec::kLocations);
    return p;
}

inline ImageContext random_context(std::mt19937_64& rng, const GridSpec& grid, int D, int T) {
    ImageContext ctx;
    ctx.grid = grid;
    ctx.hidden = random_mat(rng, D, grid.total_tokens());
    ctx.embeddings = random_mat(rng, D, grid.total_tokens());
    ctx.subpatch_features = random_mat(rng, T, Eigen::Index(grid.total_tokens()) * grid.subpatches_per_token());
    return ctx;
}

} // namespace gp::testing
