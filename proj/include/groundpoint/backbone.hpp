#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "groundpoint/geometry.hpp"
#include "groundpoint/heads.hpp"
#include "groundpoint/nn.hpp"
#include "groundpoint/targets.hpp"
#include "groundpoint/vocab.hpp"

namespace gp {

struct ToyModelConfig {
    int hidden = 128;    // D
    int layers = 4;
    int heads = 4;
    int vit_dim = 32;    // T
    int context = 512;
    int n_colors = 8;
    int mlp_ratio = 4;
    double vit_noise = 0.05;
    double rope_base = kDefaultRopeBase;

    int head_size() const { return hidden / heads; }
    int vocab_size() const { return Vocab(n_colors).size(); }
    void validate() const;
};

/// Categorical colors at subpatch resolution over the padded canvas of every frame.
struct SyntheticImage {
    GridSpec grid;
    int n_colors = 1;
    std::vector<int> colors; // frame-major, then row-major over subpatch cells
    std::uint64_t noise_seed = 0;

    int cells_per_frame() const { return grid.subpatches_per_row() * grid.subpatches_per_col(); }
    int& color_at(const SubpatchCell& c) {
        return colors[static_cast<size_t>(c.frame * cells_per_frame() + c.row * grid.subpatches_per_row() + c.col)];
    }
    int color_at(const SubpatchCell& c) const {
        return colors[static_cast<size_t>(c.frame * cells_per_frame() + c.row * grid.subpatches_per_row() + c.col)];
    }
    void validate() const;
};

struct BlockParams {
    LayerNormParams attn_norm;
    Mat wq, wk, wv, wo; // D x D
    LayerNormParams mlp_norm;
    Mat w_up;   // (ratio*D) x D
    Vec b_up;
    Mat w_down; // D x (ratio*D)
    Vec b_down;
};

struct BackboneParams {
    Mat token_embedding; // D x V
    Mat color_embedding; // T x n_colors
    Mat pool_weight;     // D x T
    Vec pool_bias;       // D
    std::vector<BlockParams> blocks;
    LayerNormParams final_norm;
    Mat lm_head; // V x D
    Vec lm_bias; // V

    static BackboneParams init(const ToyModelConfig& cfg, std::mt19937_64& rng);
    static BackboneParams zeros(const ToyModelConfig& cfg);
};

// ---------------------------------------------------------------------------
// Mock ViT

struct VitOutput {
    Mat features;    // T x (I*K), token-major
    Mat pooled_mean; // T x I
    Mat embeddings;  // D x I
};

/// Fixed sinusoidal code of a subpatch cell position.
Vec subpatch_position_code(int vit_dim, const SubpatchCell& cell);

VitOutput mock_vit(const BackboneParams& params, const SyntheticImage& image, double noise_sigma);

/// Backward of mock_vit given gradients of features and embeddings.
void mock_vit_backward(const BackboneParams& params, const SyntheticImage& image, const VitOutput& out,
                       const Mat& d_features, const Mat& d_embeddings, BackboneParams& grad);

// ---------------------------------------------------------------------------
// Causal transformer

struct BlockTape {
    LayerNormCache attn_norm;
    Mat a;              // normalized input
    Mat q, k, v;        // q and k rotated
    std::vector<Mat> p; // per head, L x L attention probabilities (row = query)
    Mat o;              // concatenated head outputs
    LayerNormCache mlp_norm;
    Mat b;
    Mat up;             // pre-activation
    Mat act;
};

struct ForwardTape {
    std::vector<BlockTape> blocks;
    LayerNormCache final_norm;
};

class Transformer {
public:
    explicit Transformer(const ToyModelConfig& cfg);

    /// Hidden states (after the final norm) for a D x L sequence of input embeddings.
    Mat forward(const BackboneParams& params, const Mat& inputs, ForwardTape* tape = nullptr) const;
    /// Accumulates parameter gradients and returns d inputs.
    Mat backward(const BackboneParams& params, const ForwardTape& tape, const Mat& d_hidden,
                 BackboneParams& grad) const;

    struct KvCache {
        std::vector<Mat> keys;   // per layer, D x context (rotated)
        std::vector<Mat> values; // per layer
        int length = 0;
    };
    KvCache make_cache() const;
    /// Appends one position and returns its final hidden state.
    Vec step(const BackboneParams& params, const Vec& input, KvCache& cache) const;

    const ToyModelConfig& config() const { return cfg_; }

private:
    ToyModelConfig cfg_;
    RotaryTable rope_;
};

// ---------------------------------------------------------------------------
// Input assembly

enum class InputKind { image, text, patch, subpatch, location };

struct InputItem {
    InputKind kind = InputKind::text;
    int token_id = -1;    // vocabulary id for text and grounding tokens
    int image_token = -1; // image: which token; patch: selected token (-1 = done); subpatch: owning token
    int subpatch = -1;
};

struct GroundingTarget {
    int position = 0; // position whose hidden state makes the decision
    SupervisionStep step;
};

struct SequencePlan {
    std::vector<InputItem> items;
    std::vector<std::pair<int, int>> lm_targets; // (position, next token id)
    std::vector<GroundingTarget> grounding;
    int prompt_length = 0; // image tokens + query + list-open marker

    int length() const { return static_cast<int>(items.size()); }
    int supervised_count() const { return static_cast<int>(lm_targets.size() + grounding.size()); }
};

/// Prompt shared by both heads: image tokens, "point to <color>", list-open marker.
SequencePlan plan_prompt(const GridSpec& grid, int query_color, const Vocab& vocab);

/// Teacher-forced grounding sequence for ordered triples (ids required).
SequencePlan plan_grounding_sequence(const GridSpec& grid, int query_color, const std::vector<PointTriple>& ordered,
                                     const TargetOptions& options, const Vocab& vocab);

/// D x L input embeddings; patch and subpatch inputs carry teacher-forced feedback.
Mat assemble_inputs(const BackboneParams& backbone, const GroundingParams* grounding, const VitOutput& vit,
                    const SequencePlan& plan, int subpatches_per_token);

/// Scatters d inputs back onto embeddings, ViT outputs and the feedback projection.
void assemble_inputs_backward(const BackboneParams& backbone, const GroundingParams* grounding, const VitOutput& vit,
                              const SequencePlan& plan, int subpatches_per_token, const Mat& d_inputs,
                              BackboneParams& grad_backbone, GroundingParams* grad_grounding, Mat& d_features,
                              Mat& d_embeddings);

std::vector<int> id_digits(int id);

} // namespace gp
