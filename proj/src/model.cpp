#include "groundpoint/model.hpp"

#include <cmath>
#include <random>

#include "groundpoint/errors.hpp"
#include "groundpoint/text_baseline.hpp"

namespace gp {

const char* to_string(HeadKind head) { return head == HeadKind::grounding ? "grounding" : "text"; }

HeadKind head_kind_from_string(const std::string& s) {
    if (s == "grounding")
        return HeadKind::grounding;
    if (s == "text")
        return HeadKind::text;
    throw InvalidArgument("unknown head '" + s + "' (expected grounding or text)");
}

HeadConfig ModelConfig::head_config() const {
    HeadConfig h;
    h.hidden_dim = backbone.hidden;
    h.vit_dim = backbone.vit_dim;
    h.head_dim = head_dim;
    h.subpatch_dim = subpatch_dim;
    h.rope_base = backbone.rope_base;
    h.rotary = rotary;
    h.no_more_points = no_more_points;
    return h;
}

DecodeConfig ModelConfig::decode_config(int max_points) const {
    DecodeConfig d;
    d.max_points = max_points;
    d.no_more_points = no_more_points;
    d.monotone = point_sorting;
    return d;
}

// ---------------------------------------------------------------------------
// Parameter views

namespace {

void add(std::vector<TensorSlot>& out, const std::string& name, Mat& m, ParamGroup g) {
    if (m.size() > 0)
        out.push_back({name, m.data(), m.rows(), m.cols(), g});
}

void add(std::vector<TensorSlot>& out, const std::string& name, Vec& v, ParamGroup g) {
    if (v.size() > 0)
        out.push_back({name, v.data(), v.rows(), 1, g});
}

void add_norm(std::vector<TensorSlot>& out, const std::string& name, LayerNormParams& n, ParamGroup g) {
    add(out, name + ".gain", n.gain, g);
    add(out, name + ".bias", n.bias, g);
}

} // namespace

std::vector<TensorSlot> tensor_slots(ModelParams& p) {
    std::vector<TensorSlot> out;
    constexpr auto B = ParamGroup::backbone;
    auto& b = p.backbone;
    add(out, "backbone.token_embedding", b.token_embedding, B);
    add(out, "vit.color_embedding", b.color_embedding, B);
    add(out, "vit.pool_weight", b.pool_weight, B);
    add(out, "vit.pool_bias", b.pool_bias, B);
    for (size_t l = 0; l < b.blocks.size(); ++l) {
        auto& blk = b.blocks[l];
        const std::string pre = "backbone.block" + std::to_string(l) + ".";
        add_norm(out, pre + "attn_norm", blk.attn_norm, B);
        add(out, pre + "wq", blk.wq, B);
        add(out, pre + "wk", blk.wk, B);
        add(out, pre + "wv", blk.wv, B);
        add(out, pre + "wo", blk.wo, B);
        add_norm(out, pre + "mlp_norm", blk.mlp_norm, B);
        add(out, pre + "w_up", blk.w_up, B);
        add(out, pre + "b_up", blk.b_up, B);
        add(out, pre + "w_down", blk.w_down, B);
        add(out, pre + "b_down", blk.b_down, B);
    }
    add_norm(out, "backbone.final_norm", b.final_norm, B);
    add(out, "backbone.lm_head", b.lm_head, B);
    add(out, "backbone.lm_bias", b.lm_bias, B);
    if (p.grounding) {
        constexpr auto P = ParamGroup::pointing;
        auto& g = *p.grounding;
        add(out, "pointing.patch_query", g.patch_query, P);
        add(out, "pointing.patch_key", g.patch_key, P);
        add_norm(out, "pointing.patch_norm", g.patch_norm, P);
        add(out, "pointing.done_key", g.done_key, P);
        add(out, "pointing.subpatch_query", g.subpatch_query, P);
        add(out, "pointing.subpatch_key", g.subpatch_key, P);
        add_norm(out, "pointing.subpatch_query_norm", g.subpatch_query_norm, P);
        add_norm(out, "pointing.subpatch_key_norm", g.subpatch_key_norm, P);
        add(out, "pointing.subpatch_embed", g.subpatch_embed, P);
        add(out, "pointing.location_weight", g.location_weight, P);
        add(out, "pointing.location_bias", g.location_bias, P);
    }
    return out;
}

ModelParams zeros_like(const ModelConfig& cfg) {
    ModelParams p;
    p.backbone = BackboneParams::zeros(cfg.backbone);
    if (cfg.head == HeadKind::grounding)
        p.grounding = GroundingParams::zeros(cfg.head_config());
    return p;
}

void add_scaled(ModelParams& acc, ModelParams& g, double scale) {
    auto a = tensor_slots(acc);
    auto b = tensor_slots(g);
    if (a.size() != b.size())
        throw InvalidArgument("add_scaled: parameter layouts differ");
    for (size_t k = 0; k < a.size(); ++k)
        a[k].map() += scale * b[k].map();
}

// ---------------------------------------------------------------------------
// Model

Model::Model(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), vocab_(cfg.backbone.n_colors), transformer_(cfg.backbone) {
    std::mt19937_64 rng(seed);
    params_.backbone = BackboneParams::init(cfg.backbone, rng);
    if (cfg.head == HeadKind::grounding) {
        std::mt19937_64 head_rng(seed ^ 0x9e3779b97f4a7c15ULL);
        params_.grounding = GroundingParams::init(cfg.head_config(), head_rng);
    }
    if (cfg.rotary)
        patch_rope_ = RotaryTable(cfg.head_dim, cfg.backbone.context, cfg.backbone.rope_base);
}

Model::Model(const ModelConfig& cfg, ModelParams params)
    : cfg_(cfg), params_(std::move(params)), vocab_(cfg.backbone.n_colors), transformer_(cfg.backbone) {
    if ((cfg.head == HeadKind::grounding) != params_.grounding.has_value())
        throw InvalidArgument("Model: head kind does not match the parameters");
    if (cfg.rotary)
        patch_rope_ = RotaryTable(cfg.head_dim, cfg.backbone.context, cfg.backbone.rope_base);
}

SequencePlan Model::plan(const Example& ex) const {
    const GridSpec& grid = ex.image.grid;
    if (cfg_.head == HeadKind::text) {
        auto ordered = order_pixel_points(grid, ex.annotation.points, cfg_.point_sorting);
        // Duplicate pairs are rejected for both heads so the data stays identical.
        order_points(grid, ex.annotation.points, cfg_.target_options());
        for (size_t k = 0; k < ordered.size(); ++k)
            if (!ordered[k].object_id)
                ordered[k].object_id = static_cast<int>(k) + 1;
        return plan_text_sequence(grid, ex.query_color, ordered, vocab_);
    }
    auto ordered = order_points(grid, ex.annotation.points, cfg_.target_options());
    for (size_t k = 0; k < ordered.size(); ++k)
        if (!ordered[k].object_id)
            ordered[k].object_id = static_cast<int>(k) + 1;
    return plan_grounding_sequence(grid, ex.query_color, ordered, cfg_.target_options(), vocab_);
}

namespace {

// Softmax cross-entropy over the full vocabulary; writes d loss / d logits.
double token_cross_entropy(const Vec& logits, int target, Vec& d_logits) {
    const double mx = logits.maxCoeff();
    const Vec e = (logits.array() - mx).exp();
    const double sum = e.sum();
    d_logits = e / sum;
    d_logits(target) -= 1.0;
    return std::log(sum) + mx - logits(target);
}

} // namespace

ExampleLoss Model::loss(const Example& ex, ModelParams* grad) const {
    const GridSpec& grid = ex.image.grid;
    const int I = grid.total_tokens();
    const int K = grid.subpatches_per_token();
    const bool grounding = cfg_.head == HeadKind::grounding;
    const GroundingParams* gparams = grounding ? &*params_.grounding : nullptr;

    const SequencePlan plan = this->plan(ex);
    const VitOutput vit = mock_vit(params_.backbone, ex.image, cfg_.backbone.vit_noise);
    const Mat inputs = assemble_inputs(params_.backbone, gparams, vit, plan, K);
    ForwardTape tape;
    const Mat hidden = transformer_.forward(params_.backbone, inputs, grad ? &tape : nullptr);

    ExampleLoss out;
    const int n_tokens = plan.supervised_count();
    const double inv_n = 1.0 / n_tokens;
    Mat d_hidden;
    if (grad)
        d_hidden = Mat::Zero(hidden.rows(), hidden.cols());

    // Language-model positions.
    Vec d_logits;
    for (const auto& [pos, target] : plan.lm_targets) {
        const Vec logits = params_.backbone.lm_head * hidden.col(pos) + params_.backbone.lm_bias;
        out.llm_losses.push_back(token_cross_entropy(logits, target, d_logits));
        if (grad) {
            d_logits *= inv_n;
            grad->backbone.lm_head.noalias() += d_logits * hidden.col(pos).transpose();
            grad->backbone.lm_bias += d_logits;
            d_hidden.col(pos).noalias() += params_.backbone.lm_head.transpose() * d_logits;
        }
    }

    double patch_loss = 0.0, subpatch_loss = 0.0, location_loss = 0.0;
    Mat d_features = Mat::Zero(vit.features.rows(), vit.features.cols());
    Mat d_embeddings = Mat::Zero(vit.embeddings.rows(), vit.embeddings.cols());

    if (grounding && !plan.grounding.empty()) {
        const GroundingParams& gp_ = *gparams;
        GroundingParams* gg = grad ? &*grad->grounding : nullptr;
        const RotaryTable* rope = gp_.rotary ? &patch_rope_ : nullptr;
        const double patch_scale = 1.0 / std::sqrt(static_cast<double>(gp_.head_dim()));
        const double sub_scale = 1.0 / std::sqrt(static_cast<double>(gp_.subpatch_dim()));

        // Image-token keys, rotated once per example.
        LayerNormCache key_norm;
        const Mat image_hidden = hidden.leftCols(I);
        const Mat normed_keys = layer_norm(image_hidden, gp_.patch_norm, &key_norm);
        Mat keys = gp_.patch_key * normed_keys;
        Mat rotated_keys = keys;
        if (rope)
            for (int i = 0; i < I; ++i)
                rope->apply(rotated_keys.col(i), i);
        Mat d_rotated_keys;
        if (grad)
            d_rotated_keys = Mat::Zero(rotated_keys.rows(), rotated_keys.cols());

        for (const GroundingTarget& gt : plan.grounding) {
            const SupervisionStep& step = gt.step;
            Mat h = hidden.col(gt.position);
            switch (step.kind) {
            case StepKind::patch: {
                LayerNormCache qn_cache;
                const Mat qn = layer_norm(h, gp_.patch_norm, &qn_cache);
                Vec q = gp_.patch_query * qn.col(0);
                const int qpos = step.prev_selected.value_or(0);
                if (rope)
                    rope->apply(q, qpos);
                Vec scores(I + (gp_.has_done() ? 1 : 0));
                scores.head(I) = (rotated_keys.transpose() * q) * patch_scale;
                if (gp_.has_done())
                    scores(I) = gp_.done_key.dot(q) * patch_scale;
                const StepLoss sl = grounding_step_loss(scores, step, gp_.has_done());
                patch_loss += sl.loss;
                if (grad) {
                    const Vec ds = sl.grad * (inv_n * patch_scale);
                    Vec dq = rotated_keys * ds.head(I);
                    d_rotated_keys.noalias() += q * ds.head(I).transpose();
                    if (gp_.has_done()) {
                        dq += gp_.done_key * ds(I);
                        gg->done_key += q * ds(I);
                    }
                    if (rope)
                        rope->apply(dq, qpos, true);
                    gg->patch_query.noalias() += dq * qn.transpose();
                    const Mat dqn = gp_.patch_query.transpose() * dq;
                    d_hidden.col(gt.position) += layer_norm_backward(dqn, qn_cache, gp_.patch_norm, gg->patch_norm);
                }
                break;
            }
            case StepKind::subpatch: {
                LayerNormCache qn_cache, kn_cache;
                const Mat qn = layer_norm(h, gp_.subpatch_query_norm, &qn_cache);
                const Vec q = gp_.subpatch_query * qn.col(0);
                const Eigen::Index c0 = static_cast<Eigen::Index>(step.token) * K;
                const Mat feats = vit.features.middleCols(c0, K);
                const Mat kn = layer_norm(feats, gp_.subpatch_key_norm, &kn_cache);
                const Mat k = gp_.subpatch_key * kn;
                const Vec scores = (k.transpose() * q) * sub_scale;
                const StepLoss sl = grounding_step_loss(scores, step, false);
                subpatch_loss += sl.loss;
                if (grad) {
                    const Vec ds = sl.grad * (inv_n * sub_scale);
                    const Vec dq = k * ds;
                    const Mat dk = q * ds.transpose();
                    gg->subpatch_key.noalias() += dk * kn.transpose();
                    const Mat dkn = gp_.subpatch_key.transpose() * dk;
                    d_features.middleCols(c0, K) +=
                        layer_norm_backward(dkn, kn_cache, gp_.subpatch_key_norm, gg->subpatch_key_norm);
                    gg->subpatch_query.noalias() += dq * qn.transpose();
                    const Mat dqn = gp_.subpatch_query.transpose() * dq;
                    d_hidden.col(gt.position) +=
                        layer_norm_backward(dqn, qn_cache, gp_.subpatch_query_norm, gg->subpatch_query_norm);
                }
                break;
            }
            case StepKind::location: {
                const Vec logits = gp_.location_weight * h.col(0) + gp_.location_bias;
                const StepLoss sl = grounding_step_loss(logits, step, false);
                location_loss += sl.loss;
                if (grad) {
                    const Vec dl = sl.grad * inv_n;
                    gg->location_weight.noalias() += dl * h.transpose();
                    gg->location_bias += dl;
                    d_hidden.col(gt.position).noalias() += gp_.location_weight.transpose() * dl;
                }
                break;
            }
            }
        }

        if (grad) {
            Mat d_keys = d_rotated_keys;
            if (rope)
                for (int i = 0; i < I; ++i)
                    rope->apply(d_keys.col(i), i, true);
            gg->patch_key.noalias() += d_keys * normed_keys.transpose();
            const Mat d_normed = gp_.patch_key.transpose() * d_keys;
            d_hidden.leftCols(I) += layer_norm_backward(d_normed, key_norm, gp_.patch_norm, gg->patch_norm);
        }
    }

    out.breakdown = combine_losses(out.llm_losses, patch_loss, subpatch_loss, location_loss, n_tokens);

    if (grad) {
        const Mat d_inputs = transformer_.backward(params_.backbone, tape, d_hidden, grad->backbone);
        assemble_inputs_backward(params_.backbone, gparams, vit, plan, K, d_inputs, grad->backbone,
                                 grounding ? &*grad->grounding : nullptr, d_features, d_embeddings);
        mock_vit_backward(params_.backbone, ex.image, vit, d_features, d_embeddings, grad->backbone);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Inference

namespace {

class ModelSession final : public PointingSession {
public:
    ModelSession(const Model& model, const SyntheticImage& image, int query_color)
        : model_(model), grid_(image.grid), cache_(model.transformer().make_cache()) {
        const auto& bb = model.params().backbone;
        vit_ = mock_vit(bb, image, model.config().backbone.vit_noise);
        const SequencePlan prompt = plan_prompt(grid_, query_color, model.vocab());
        const int I = grid_.total_tokens();
        Mat image_hidden(bb.token_embedding.rows(), I);
        const Mat inputs = assemble_inputs(bb, nullptr, vit_, prompt, grid_.subpatches_per_token());
        for (int pos = 0; pos < prompt.length(); ++pos) {
            hidden_ = model.transformer().step(bb, inputs.col(pos), cache_);
            if (pos < I)
                image_hidden.col(pos) = hidden_;
        }
        if (const auto& g = model.params().grounding) {
            ctx_.hidden = std::move(image_hidden);
            ctx_.embeddings = vit_.embeddings;
            ctx_.subpatch_features = vit_.features;
            ctx_.grid = grid_;
            keys_ = prefill_cache(ctx_, *g);
        }
    }

    int tokens() const override { return grid_.total_tokens(); }
    int subpatches() const override { return grid_.subpatches_per_token(); }
    int remaining_context() const override { return model_.config().backbone.context - cache_.length; }

    Vec text_logits() override {
        const auto& bb = model_.params().backbone;
        return bb.lm_head * hidden_ + bb.lm_bias;
    }
    Vec patch_scores(std::optional<int> prev) override {
        return gp::patch_scores(hidden_, keys_, grounding(), prev);
    }
    Vec subpatch_scores(int token) override { return gp::subpatch_scores(hidden_, keys_, token, grounding()); }
    Vec location_logits() override { return gp::location_logits(hidden_, grounding()); }

    void feed_text(int id) override { advance(model_.params().backbone.token_embedding.col(id)); }
    void feed_patch(std::optional<int> selected) override {
        const Vec base = model_.params().backbone.token_embedding.col(Vocab::kPatch);
        advance(selected ? patch_feedback_embedding(base, ctx_, *selected) : base);
    }
    void feed_subpatch(int token, int subpatch) override {
        const Vec base = model_.params().backbone.token_embedding.col(Vocab::kSubpatch);
        advance(subpatch_feedback_embedding(base, ctx_.token_features(token), subpatch, grounding()));
    }
    void feed_location(int) override { advance(model_.params().backbone.token_embedding.col(Vocab::kLocation)); }

private:
    const GroundingParams& grounding() const {
        if (!model_.params().grounding)
            throw ContractViolation("ModelSession: the text head has no grounding parameters");
        return *model_.params().grounding;
    }
    void advance(const Vec& x) { hidden_ = model_.transformer().step(model_.params().backbone, x, cache_); }

    const Model& model_;
    GridSpec grid_;
    VitOutput vit_;
    Transformer::KvCache cache_;
    Vec hidden_;
    ImageContext ctx_;
    GroundingKeyCache keys_;
};

} // namespace

std::unique_ptr<PointingSession> Model::session(const SyntheticImage& image, int query_color) const {
    return std::make_unique<ModelSession>(*this, image, query_color);
}

DecodeResult Model::decode(const SyntheticImage& image, int query_color, const DecodeConfig& config) const {
    if (cfg_.head != HeadKind::grounding)
        throw ContractViolation("Model::decode: the grounding decoder needs the grounding head");
    auto s = session(image, query_color);
    return gp::decode(*s, image.grid, config);
}

std::vector<PixelPoint> Model::predict(const SyntheticImage& image, int query_color, int max_points) const {
    if (cfg_.head == HeadKind::grounding)
        return decode(image, query_color, cfg_.decode_config(max_points)).points;
    auto s = session(image, query_color);
    return decode_text(*s, image.grid, max_points).points;
}

} // namespace gp
