#include "groundpoint/heads.hpp"

#include <cmath>
#include <string>

#include "groundpoint/errors.hpp"
#include "groundpoint/kernels.hpp"

namespace gp {

namespace {

Mat gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            m(r, c) = dist(rng);
    return m;
}

void require_finite(const Vec& v, const char* what) {
    if (!v.allFinite())
        throw NumericError(std::string(what) + ": non-finite input");
}

void require_size(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want)
        throw InvalidArgument(std::string(what) + ": expected dimension " + std::to_string(want) + ", got " +
                              std::to_string(got));
}

} // namespace

GroundingParams GroundingParams::init(const HeadConfig& cfg, std::mt19937_64& rng) {
    if (cfg.head_dim % 2 != 0 || cfg.subpatch_dim % 2 != 0)
        throw InvalidArgument("GroundingParams: head widths must be even");
    if (cfg.hidden_dim <= 0 || cfg.vit_dim <= 0 || cfg.head_dim <= 0 || cfg.subpatch_dim <= 0)
        throw InvalidArgument("GroundingParams: dimensions must be positive");
    const double d_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
    const double t_scale = 1.0 / std::sqrt(static_cast<double>(cfg.vit_dim));

    GroundingParams p;
    p.patch_query = gaussian(rng, cfg.head_dim, cfg.hidden_dim, d_scale);
    p.patch_key = gaussian(rng, cfg.head_dim, cfg.hidden_dim, d_scale);
    p.patch_norm = LayerNormParams::identity(cfg.hidden_dim);
    // Drawn even when disabled so the remaining tensors do not depend on the flag.
    Mat done = gaussian(rng, cfg.head_dim, 1, 1.0);
    if (cfg.no_more_points)
        p.done_key = done.col(0);
    p.subpatch_query = gaussian(rng, cfg.subpatch_dim, cfg.hidden_dim, d_scale);
    p.subpatch_key = gaussian(rng, cfg.subpatch_dim, cfg.vit_dim, t_scale);
    p.subpatch_query_norm = LayerNormParams::identity(cfg.hidden_dim);
    p.subpatch_key_norm = LayerNormParams::identity(cfg.vit_dim);
    p.subpatch_embed = gaussian(rng, cfg.hidden_dim, cfg.vit_dim, 0.5 * t_scale);
    p.location_weight = gaussian(rng, GridSpec::kLocations, cfg.hidden_dim, 0.1 * d_scale);
    p.location_bias = Vec::Zero(GridSpec::kLocations);
    p.rope_base = cfg.rope_base;
    p.rotary = cfg.rotary;
    return p;
}

GroundingParams GroundingParams::zeros(const HeadConfig& cfg) {
    GroundingParams p;
    p.patch_query = Mat::Zero(cfg.head_dim, cfg.hidden_dim);
    p.patch_key = Mat::Zero(cfg.head_dim, cfg.hidden_dim);
    p.patch_norm = {Vec::Zero(cfg.hidden_dim), Vec::Zero(cfg.hidden_dim)};
    if (cfg.no_more_points)
        p.done_key = Vec::Zero(cfg.head_dim);
    p.subpatch_query = Mat::Zero(cfg.subpatch_dim, cfg.hidden_dim);
    p.subpatch_key = Mat::Zero(cfg.subpatch_dim, cfg.vit_dim);
    p.subpatch_query_norm = {Vec::Zero(cfg.hidden_dim), Vec::Zero(cfg.hidden_dim)};
    p.subpatch_key_norm = {Vec::Zero(cfg.vit_dim), Vec::Zero(cfg.vit_dim)};
    p.subpatch_embed = Mat::Zero(cfg.hidden_dim, cfg.vit_dim);
    p.location_weight = Mat::Zero(GridSpec::kLocations, cfg.hidden_dim);
    p.location_bias = Vec::Zero(GridSpec::kLocations);
    p.rope_base = cfg.rope_base;
    p.rotary = cfg.rotary;
    return p;
}

HeadConfig GroundingParams::config() const {
    HeadConfig c;
    c.hidden_dim = hidden_dim();
    c.vit_dim = vit_dim();
    c.head_dim = head_dim();
    c.subpatch_dim = subpatch_dim();
    c.rope_base = rope_base;
    c.rotary = rotary;
    c.no_more_points = has_done();
    return c;
}

void ImageContext::validate(int hidden_dim, int vit_dim) const {
    const int n = grid.total_tokens();
    if (hidden.cols() != n || embeddings.cols() != n)
        throw InvalidArgument("ImageContext: token count does not match the grid");
    if (hidden.rows() != hidden_dim || embeddings.rows() != hidden_dim)
        throw InvalidArgument("ImageContext: hidden size mismatch");
    if (subpatch_features.rows() != vit_dim ||
        subpatch_features.cols() != static_cast<Eigen::Index>(n) * grid.subpatches_per_token())
        throw InvalidArgument("ImageContext: subpatch feature shape mismatch");
}

namespace {

// Column at a time, so a key never depends on how many columns were projected with it.
Mat project_columns(const Mat& w, const Mat& x) {
    Mat out(w.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        out.col(j).noalias() = w * x.col(j);
    return out;
}

} // namespace

Mat project_patch_keys(const Mat& hidden, const GroundingParams& params, LayerNormCache* norm) {
    return project_columns(params.patch_key, layer_norm(hidden, params.patch_norm, norm));
}

Vec project_patch_query(const Vec& h_p, const GroundingParams& params, LayerNormCache* norm) {
    Mat h = h_p;
    return params.patch_query * layer_norm(h, params.patch_norm, norm).col(0);
}

Mat project_subpatch_keys(const Mat& features, const GroundingParams& params, LayerNormCache* norm) {
    return project_columns(params.subpatch_key, layer_norm(features, params.subpatch_key_norm, norm));
}

Vec project_subpatch_query(const Vec& h_s, const GroundingParams& params, LayerNormCache* norm) {
    Mat h = h_s;
    return params.subpatch_query * layer_norm(h, params.subpatch_query_norm, norm).col(0);
}

Vec score_patch_keys(const Vec& query, const Mat& keys, const Vec& done_key, const RotaryTable* table,
                     std::optional<int> prev_selected) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(query.size()));
    Vec q = query;
    if (table)
        table->apply(q, prev_selected.value_or(0));
    const Vec token_scores = kernels::rotated_scores(keys, q, table, scale, kernels::Exec::parallel);
    Vec s(token_scores.size() + (done_key.size() > 0 ? 1 : 0));
    s.head(token_scores.size()) = token_scores;
    if (done_key.size() > 0)
        s(token_scores.size()) = done_key.dot(q) * scale;
    return s;
}

GroundingKeyCache prefill_cache(const ImageContext& ctx, const GroundingParams& params) {
    ctx.validate(params.hidden_dim(), params.vit_dim());
    GroundingKeyCache c;
    c.subpatches = ctx.subpatches();
    if (ctx.tokens() == 0) {
        c.patch_keys = Mat::Zero(params.head_dim(), 0);
        c.subpatch_keys = Mat::Zero(params.subpatch_dim(), 0);
    } else {
        c.patch_keys = project_patch_keys(ctx.hidden, params);
        c.subpatch_keys = project_subpatch_keys(ctx.subpatch_features, params);
    }
    c.done_key = params.done_key;
    if (params.rotary)
        c.rotary = RotaryTable(params.head_dim(), std::max(ctx.tokens(), 1), params.rope_base);
    return c;
}

Vec patch_scores(const Vec& h_p, const GroundingKeyCache& cache, const GroundingParams& params,
                 std::optional<int> prev_selected) {
    require_size(h_p.size(), params.hidden_dim(), "patch_scores");
    require_finite(h_p, "patch_scores");
    if (prev_selected && (*prev_selected < 0 || *prev_selected >= std::max(cache.tokens(), 1)))
        throw InvalidArgument("patch_scores: previous selection out of range");
    const Vec q = project_patch_query(h_p, params);
    return score_patch_keys(q, cache.patch_keys, cache.done_key, params.rotary ? &cache.rotary : nullptr,
                            prev_selected);
}

Vec patch_scores(const Vec& h_p, const ImageContext& ctx, const GroundingParams& params,
                 std::optional<int> prev_selected) {
    require_size(h_p.size(), params.hidden_dim(), "patch_scores");
    require_finite(h_p, "patch_scores");
    ctx.validate(params.hidden_dim(), params.vit_dim());
    if (!ctx.hidden.allFinite())
        throw NumericError("patch_scores: non-finite image hidden states");
    return patch_scores(h_p, prefill_cache(ctx, params), params, prev_selected);
}

Vec subpatch_scores(const Vec& h_s, const Mat& token_features, const GroundingParams& params) {
    require_size(h_s.size(), params.hidden_dim(), "subpatch_scores");
    require_size(token_features.rows(), params.vit_dim(), "subpatch_scores");
    require_finite(h_s, "subpatch_scores");
    const Vec q = project_subpatch_query(h_s, params);
    const Mat k = project_subpatch_keys(token_features, params);
    return (k.transpose() * q) / std::sqrt(static_cast<double>(params.subpatch_dim()));
}

Vec subpatch_scores(const Vec& h_s, const GroundingKeyCache& cache, int token, const GroundingParams& params) {
    require_size(h_s.size(), params.hidden_dim(), "subpatch_scores");
    require_finite(h_s, "subpatch_scores");
    if (token < 0 || token >= cache.tokens())
        throw InvalidArgument("subpatch_scores: token out of range");
    const Vec q = project_subpatch_query(h_s, params);
    const Mat k = cache.subpatch_keys.middleCols(static_cast<Eigen::Index>(token) * cache.subpatches, cache.subpatches);
    return (k.transpose() * q) / std::sqrt(static_cast<double>(params.subpatch_dim()));
}

Vec location_logits(const Vec& h_l, const GroundingParams& params) {
    require_size(h_l.size(), params.hidden_dim(), "location_logits");
    require_finite(h_l, "location_logits");
    return params.location_weight * h_l + params.location_bias;
}

Vec patch_feedback_embedding(const Vec& patch_vocab_embedding, const ImageContext& ctx, int selected) {
    if (selected < 0 || selected >= ctx.embeddings.cols())
        throw InvalidArgument("patch_feedback_embedding: selected token out of range");
    require_size(patch_vocab_embedding.size(), ctx.embeddings.rows(), "patch_feedback_embedding");
    return patch_vocab_embedding + ctx.embeddings.col(selected);
}

Vec subpatch_feedback_embedding(const Vec& subpatch_vocab_embedding, const Mat& token_features, int selected,
                                const GroundingParams& params) {
    if (selected < 0 || selected >= token_features.cols())
        throw InvalidArgument("subpatch_feedback_embedding: selected subpatch out of range");
    require_size(subpatch_vocab_embedding.size(), params.hidden_dim(), "subpatch_feedback_embedding");
    require_size(token_features.rows(), params.vit_dim(), "subpatch_feedback_embedding");
    return subpatch_vocab_embedding + params.subpatch_embed * token_features.col(selected);
}

} // namespace gp
