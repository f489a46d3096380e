#pragma once

#include <cstddef>
#include <optional>
#include <random>

#include "groundpoint/geometry.hpp"
#include "groundpoint/nn.hpp"

namespace gp {

struct HeadConfig {
    int hidden_dim = 128;   // D
    int vit_dim = 32;       // T
    int head_dim = 512;     // M
    int subpatch_dim = 512; // M_s
    double rope_base = kDefaultRopeBase;
    bool rotary = true;
    bool no_more_points = true;
};

/// Learned tensors of the three pointing heads.
struct GroundingParams {
    Mat patch_query;                     // M x D
    Mat patch_key;                       // M x D
    LayerNormParams patch_norm;          // over D, shared by query and key sides
    Vec done_key;                        // M, empty when the no-more-points class is disabled
    Mat subpatch_query;                  // M_s x D
    Mat subpatch_key;                    // M_s x T
    LayerNormParams subpatch_query_norm; // over D
    LayerNormParams subpatch_key_norm;   // over T
    Mat subpatch_embed;                  // D x T, feeds the selected subpatch back into the LLM
    Mat location_weight;                 // 9 x D
    Vec location_bias;                   // 9

    double rope_base = kDefaultRopeBase;
    bool rotary = true;

    static GroundingParams init(const HeadConfig& cfg, std::mt19937_64& rng);
    static GroundingParams zeros(const HeadConfig& cfg);

    HeadConfig config() const;
    bool has_done() const { return done_key.size() > 0; }
    int hidden_dim() const { return static_cast<int>(patch_query.cols()); }
    int vit_dim() const { return static_cast<int>(subpatch_key.cols()); }
    int head_dim() const { return static_cast<int>(patch_query.rows()); }
    int subpatch_dim() const { return static_cast<int>(subpatch_query.rows()); }
};

/// Backbone outputs the heads read for one image (or frame stack).
struct ImageContext {
    Mat hidden;            // D x I, hidden states of the image tokens
    Mat embeddings;        // D x I, input embeddings of the image tokens
    Mat subpatch_features; // T x (I*K), token-major: columns [i*K, (i+1)*K) belong to token i
    GridSpec grid;

    int tokens() const { return static_cast<int>(hidden.cols()); }
    int subpatches() const { return grid.subpatches_per_token(); }
    Mat token_features(int token) const {
        return subpatch_features.middleCols(static_cast<Eigen::Index>(token) * subpatches(), subpatches());
    }
    void validate(int hidden_dim, int vit_dim) const;
};

/// Grounding keys computed once after prefill.
struct GroundingKeyCache {
    Mat patch_keys;    // M x I, unrotated
    Mat subpatch_keys; // M_s x (I*K)
    Vec done_key;
    RotaryTable rotary;
    int subpatches = 0;

    int tokens() const { return static_cast<int>(patch_keys.cols()); }
    /// Number of cached key scalars (the rotary table is not counted).
    std::size_t scalar_count() const {
        return static_cast<std::size_t>(patch_keys.size() + subpatch_keys.size() + done_key.size());
    }
};

GroundingKeyCache prefill_cache(const ImageContext& ctx, const GroundingParams& params);

/// Scores for the I image tokens followed by the no-more-points class when enabled.
Vec patch_scores(const Vec& h_p, const ImageContext& ctx, const GroundingParams& params,
                 std::optional<int> prev_selected);
Vec patch_scores(const Vec& h_p, const GroundingKeyCache& cache, const GroundingParams& params,
                 std::optional<int> prev_selected);

Vec subpatch_scores(const Vec& h_s, const Mat& token_features, const GroundingParams& params);
Vec subpatch_scores(const Vec& h_s, const GroundingKeyCache& cache, int token, const GroundingParams& params);

Vec location_logits(const Vec& h_l, const GroundingParams& params);

Vec patch_feedback_embedding(const Vec& patch_vocab_embedding, const ImageContext& ctx, int selected);
Vec subpatch_feedback_embedding(const Vec& subpatch_vocab_embedding, const Mat& token_features, int selected,
                                const GroundingParams& params);

// Building blocks shared by the inference path and the training tapes.

Mat project_patch_keys(const Mat& hidden, const GroundingParams& params, LayerNormCache* norm = nullptr);
Vec project_patch_query(const Vec& h_p, const GroundingParams& params, LayerNormCache* norm = nullptr);
Mat project_subpatch_keys(const Mat& features, const GroundingParams& params, LayerNormCache* norm = nullptr);
Vec project_subpatch_query(const Vec& h_s, const GroundingParams& params, LayerNormCache* norm = nullptr);

/// Scores unrotated keys against an unrotated query. The query takes rotary position
/// prev_selected (or 0); key column i takes position i; the done key sits at position 0.
Vec score_patch_keys(const Vec& query, const Mat& keys, const Vec& done_key, const RotaryTable* table,
                     std::optional<int> prev_selected);

} // namespace gp
