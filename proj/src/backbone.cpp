#include "groundpoint/backbone.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "groundpoint/errors.hpp"

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

LayerNormParams zero_norm(Eigen::Index dim) { return {Vec::Zero(dim), Vec::Zero(dim)}; }

} // namespace

void ToyModelConfig::validate() const {
    if (hidden <= 0 || layers < 0 || heads <= 0 || vit_dim <= 0 || context <= 0 || n_colors <= 0 || mlp_ratio <= 0)
        throw InvalidArgument("ToyModelConfig: sizes must be positive");
    if (hidden % heads != 0)
        throw InvalidArgument("ToyModelConfig: hidden size must be divisible by the head count");
    if (head_size() % 2 != 0)
        throw InvalidArgument("ToyModelConfig: attention head size must be even for rotary positions");
}

void SyntheticImage::validate() const {
    if (static_cast<int>(colors.size()) != grid.n_frames() * cells_per_frame())
        throw InvalidArgument("SyntheticImage: color label count does not match the grid");
    for (int c : colors)
        if (c < 0 || c >= n_colors)
            throw InvalidArgument("SyntheticImage: color label out of range");
}

BackboneParams BackboneParams::init(const ToyModelConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const int D = cfg.hidden;
    const int F = cfg.mlp_ratio * D;
    const double d_scale = 1.0 / std::sqrt(static_cast<double>(D));
    const double depth_scale = 1.0 / std::sqrt(2.0 * std::max(cfg.layers, 1));

    BackboneParams p;
    p.token_embedding = gaussian(rng, D, cfg.vocab_size(), 1.0);
    p.color_embedding = gaussian(rng, cfg.vit_dim, cfg.n_colors, 1.0);
    p.pool_weight = gaussian(rng, D, cfg.vit_dim, 1.0 / std::sqrt(static_cast<double>(cfg.vit_dim)));
    p.pool_bias = Vec::Zero(D);
    for (int l = 0; l < cfg.layers; ++l) {
        BlockParams b;
        b.attn_norm = LayerNormParams::identity(D);
        b.wq = gaussian(rng, D, D, d_scale);
        b.wk = gaussian(rng, D, D, d_scale);
        b.wv = gaussian(rng, D, D, d_scale);
        b.wo = gaussian(rng, D, D, d_scale * depth_scale);
        b.mlp_norm = LayerNormParams::identity(D);
        b.w_up = gaussian(rng, F, D, d_scale);
        b.b_up = Vec::Zero(F);
        b.w_down = gaussian(rng, D, F, depth_scale / std::sqrt(static_cast<double>(F)));
        b.b_down = Vec::Zero(D);
        p.blocks.push_back(std::move(b));
    }
    p.final_norm = LayerNormParams::identity(D);
    p.lm_head = gaussian(rng, cfg.vocab_size(), D, d_scale);
    p.lm_bias = Vec::Zero(cfg.vocab_size());
    return p;
}

BackboneParams BackboneParams::zeros(const ToyModelConfig& cfg) {
    const int D = cfg.hidden;
    const int F = cfg.mlp_ratio * D;
    BackboneParams p;
    p.token_embedding = Mat::Zero(D, cfg.vocab_size());
    p.color_embedding = Mat::Zero(cfg.vit_dim, cfg.n_colors);
    p.pool_weight = Mat::Zero(D, cfg.vit_dim);
    p.pool_bias = Vec::Zero(D);
    for (int l = 0; l < cfg.layers; ++l) {
        BlockParams b;
        b.attn_norm = zero_norm(D);
        b.wq = b.wk = b.wv = b.wo = Mat::Zero(D, D);
        b.mlp_norm = zero_norm(D);
        b.w_up = Mat::Zero(F, D);
        b.b_up = Vec::Zero(F);
        b.w_down = Mat::Zero(D, F);
        b.b_down = Vec::Zero(D);
        p.blocks.push_back(std::move(b));
    }
    p.final_norm = zero_norm(D);
    p.lm_head = Mat::Zero(cfg.vocab_size(), D);
    p.lm_bias = Vec::Zero(cfg.vocab_size());
    return p;
}

// ---------------------------------------------------------------------------
// Mock ViT

Vec subpatch_position_code(int vit_dim, const SubpatchCell& cell) {
    Vec code(vit_dim);
    for (int d = 0; d < vit_dim; ++d) {
        const int axis = (d / 2) % 3;
        const int band = d / 6;
        const double coord = axis == 0 ? cell.col : axis == 1 ? cell.row : cell.frame;
        const double freq = std::pow(50.0, -6.0 * band / static_cast<double>(vit_dim));
        code(d) = (d % 2 == 0) ? std::sin(coord * freq) : std::cos(coord * freq);
    }
    return code;
}

VitOutput mock_vit(const BackboneParams& params, const SyntheticImage& image, double noise_sigma) {
    image.validate();
    if (image.n_colors > params.color_embedding.cols())
        throw InvalidArgument("mock_vit: image uses more colors than the model knows");
    const GridSpec& g = image.grid;
    const int I = g.total_tokens();
    const int K = g.subpatches_per_token();
    const int T = static_cast<int>(params.color_embedding.rows());

    VitOutput out;
    out.features.resize(T, static_cast<Eigen::Index>(I) * K);
    std::mt19937_64 rng(image.noise_seed);
    std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
    for (int i = 0; i < I; ++i) {
        for (int k = 0; k < K; ++k) {
            const SubpatchCell cell = subpatch_cell(g, i, k);
            auto col = out.features.col(static_cast<Eigen::Index>(i) * K + k);
            col = params.color_embedding.col(image.color_at(cell)) + subpatch_position_code(T, cell);
            if (noise_sigma > 0)
                for (int d = 0; d < T; ++d)
                    col(d) += noise(rng);
        }
    }
    out.pooled_mean.resize(T, I);
    for (int i = 0; i < I; ++i)
        out.pooled_mean.col(i) = out.features.middleCols(static_cast<Eigen::Index>(i) * K, K).rowwise().mean();
    out.embeddings = (params.pool_weight * out.pooled_mean).colwise() + params.pool_bias;
    return out;
}

void mock_vit_backward(const BackboneParams& params, const SyntheticImage& image, const VitOutput& out,
                       const Mat& d_features, const Mat& d_embeddings, BackboneParams& grad) {
    const GridSpec& g = image.grid;
    const int I = g.total_tokens();
    const int K = g.subpatches_per_token();
    grad.pool_weight.noalias() += d_embeddings * out.pooled_mean.transpose();
    grad.pool_bias += d_embeddings.rowwise().sum();
    const Mat d_mean = params.pool_weight.transpose() * d_embeddings;
    for (int i = 0; i < I; ++i)
        for (int k = 0; k < K; ++k) {
            const Eigen::Index c = static_cast<Eigen::Index>(i) * K + k;
            const int color = image.color_at(subpatch_cell(g, i, k));
            grad.color_embedding.col(color) += d_features.col(c) + d_mean.col(i) / static_cast<double>(K);
        }
}

// ---------------------------------------------------------------------------
// Transformer

Transformer::Transformer(const ToyModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    rope_ = RotaryTable(cfg.head_size(), cfg.context, cfg.rope_base);
}

Mat Transformer::forward(const BackboneParams& params, const Mat& inputs, ForwardTape* tape) const {
    const int D = cfg_.hidden;
    const Eigen::Index L = inputs.cols();
    if (inputs.rows() != D)
        throw InvalidArgument("Transformer::forward: input rows must equal the hidden size");
    if (L > cfg_.context)
        throw InvalidArgument("Transformer::forward: sequence length " + std::to_string(L) +
                              " exceeds the context length " + std::to_string(cfg_.context));
    const int H = cfg_.heads;
    const int dh = cfg_.head_size();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    if (tape)
        tape->blocks.assign(params.blocks.size(), {});
    Mat x = inputs;
    for (size_t l = 0; l < params.blocks.size(); ++l) {
        const BlockParams& bp = params.blocks[l];
        BlockTape local;
        BlockTape& t = tape ? tape->blocks[l] : local;

        t.a = layer_norm(x, bp.attn_norm, &t.attn_norm);
        t.q.noalias() = bp.wq * t.a;
        t.k.noalias() = bp.wk * t.a;
        t.v.noalias() = bp.wv * t.a;
        for (Eigen::Index j = 0; j < L; ++j)
            for (int h = 0; h < H; ++h) {
                rope_.apply(t.q.col(j).segment(h * dh, dh), static_cast<int>(j));
                rope_.apply(t.k.col(j).segment(h * dh, dh), static_cast<int>(j));
            }
        t.o.resize(D, L);
        t.p.assign(static_cast<size_t>(H), Mat());
        for (int h = 0; h < H; ++h) {
            Mat s = (t.q.middleRows(h * dh, dh).transpose() * t.k.middleRows(h * dh, dh)) * scale;
            for (Eigen::Index j = 0; j < L; ++j) {
                for (Eigen::Index c = j + 1; c < L; ++c)
                    s(j, c) = kNegInf;
                const double mx = s.row(j).head(j + 1).maxCoeff();
                s.row(j) = (s.row(j).array() - mx).exp();
                s.row(j) /= s.row(j).sum();
            }
            t.o.middleRows(h * dh, dh).noalias() = t.v.middleRows(h * dh, dh) * s.transpose();
            t.p[static_cast<size_t>(h)] = std::move(s);
        }
        x.noalias() += bp.wo * t.o;

        t.b = layer_norm(x, bp.mlp_norm, &t.mlp_norm);
        t.up = (bp.w_up * t.b).colwise() + bp.b_up;
        t.act = t.up.unaryExpr([](double u) { return gelu(u); });
        x.noalias() += bp.w_down * t.act;
        x.colwise() += bp.b_down;
    }
    LayerNormCache final_cache;
    Mat hidden = layer_norm(x, params.final_norm, tape ? &tape->final_norm : &final_cache);
    if (!hidden.allFinite())
        throw NumericError("Transformer::forward: non-finite hidden state");
    return hidden;
}

Mat Transformer::backward(const BackboneParams& params, const ForwardTape& tape, const Mat& d_hidden,
                          BackboneParams& grad) const {
    const int H = cfg_.heads;
    const int dh = cfg_.head_size();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Eigen::Index L = d_hidden.cols();

    Mat dx = layer_norm_backward(d_hidden, tape.final_norm, params.final_norm, grad.final_norm);
    for (size_t li = params.blocks.size(); li-- > 0;) {
        const BlockParams& bp = params.blocks[li];
        BlockParams& gb = grad.blocks[li];
        const BlockTape& t = tape.blocks[li];

        // MLP
        gb.w_down.noalias() += dx * t.act.transpose();
        gb.b_down += dx.rowwise().sum();
        Mat d_up = bp.w_down.transpose() * dx;
        d_up.array() *= t.up.unaryExpr([](double u) { return gelu_derivative(u); }).array();
        gb.w_up.noalias() += d_up * t.b.transpose();
        gb.b_up += d_up.rowwise().sum();
        const Mat d_b = bp.w_up.transpose() * d_up;
        dx += layer_norm_backward(d_b, t.mlp_norm, bp.mlp_norm, gb.mlp_norm);

        // Attention
        gb.wo.noalias() += dx * t.o.transpose();
        const Mat d_o = bp.wo.transpose() * dx;
        Mat dq(t.q.rows(), L), dk(t.k.rows(), L), dv(t.v.rows(), L);
        for (int h = 0; h < H; ++h) {
            const Mat& p = t.p[static_cast<size_t>(h)];
            const auto d_oh = d_o.middleRows(h * dh, dh);
            const Mat d_p = d_oh.transpose() * t.v.middleRows(h * dh, dh);
            dv.middleRows(h * dh, dh).noalias() = d_oh * p;
            Mat d_s = p.array() * (d_p.colwise() - (p.array() * d_p.array()).rowwise().sum().matrix()).array();
            d_s *= scale;
            dq.middleRows(h * dh, dh).noalias() = t.k.middleRows(h * dh, dh) * d_s.transpose();
            dk.middleRows(h * dh, dh).noalias() = t.q.middleRows(h * dh, dh) * d_s;
        }
        for (Eigen::Index j = 0; j < L; ++j)
            for (int h = 0; h < H; ++h) {
                rope_.apply(dq.col(j).segment(h * dh, dh), static_cast<int>(j), true);
                rope_.apply(dk.col(j).segment(h * dh, dh), static_cast<int>(j), true);
            }
        gb.wq.noalias() += dq * t.a.transpose();
        gb.wk.noalias() += dk * t.a.transpose();
        gb.wv.noalias() += dv * t.a.transpose();
        Mat d_a = bp.wq.transpose() * dq;
        d_a.noalias() += bp.wk.transpose() * dk;
        d_a.noalias() += bp.wv.transpose() * dv;
        dx += layer_norm_backward(d_a, t.attn_norm, bp.attn_norm, gb.attn_norm);
    }
    return dx;
}

Transformer::KvCache Transformer::make_cache() const {
    KvCache c;
    for (int l = 0; l < cfg_.layers; ++l) {
        c.keys.emplace_back(cfg_.hidden, cfg_.context);
        c.values.emplace_back(cfg_.hidden, cfg_.context);
    }
    return c;
}

Vec Transformer::step(const BackboneParams& params, const Vec& input, KvCache& cache) const {
    if (cache.length >= cfg_.context)
        throw InvalidArgument("Transformer::step: context length exceeded");
    if (input.size() != cfg_.hidden)
        throw InvalidArgument("Transformer::step: input size must equal the hidden size");
    const int H = cfg_.heads;
    const int dh = cfg_.head_size();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const int j = cache.length;

    Mat x = input;
    for (size_t l = 0; l < params.blocks.size(); ++l) {
        const BlockParams& bp = params.blocks[l];
        const Mat a = layer_norm(x, bp.attn_norm);
        Vec q = bp.wq * a.col(0);
        Vec k = bp.wk * a.col(0);
        for (int h = 0; h < H; ++h) {
            rope_.apply(q.segment(h * dh, dh), j);
            rope_.apply(k.segment(h * dh, dh), j);
        }
        cache.keys[l].col(j) = k;
        cache.values[l].col(j).noalias() = bp.wv * a.col(0);
        Vec o(cfg_.hidden);
        for (int h = 0; h < H; ++h) {
            const auto keys = cache.keys[l].block(h * dh, 0, dh, j + 1);
            Vec s = (keys.transpose() * q.segment(h * dh, dh)) * scale;
            s = (s.array() - s.maxCoeff()).exp();
            s /= s.sum();
            o.segment(h * dh, dh).noalias() = cache.values[l].block(h * dh, 0, dh, j + 1) * s;
        }
        x.col(0).noalias() += bp.wo * o;
        const Mat b = layer_norm(x, bp.mlp_norm);
        const Vec act = ((bp.w_up * b.col(0)) + bp.b_up).unaryExpr([](double u) { return gelu(u); });
        x.col(0).noalias() += bp.w_down * act;
        x.col(0) += bp.b_down;
    }
    ++cache.length;
    const Mat hidden = layer_norm(x, params.final_norm);
    if (!hidden.allFinite())
        throw NumericError("Transformer::step: non-finite hidden state");
    return hidden.col(0);
}

// ---------------------------------------------------------------------------
// Input assembly

std::vector<int> id_digits(int id) {
    if (id < 0)
        throw InvalidArgument("id_digits: object ids must be non-negative");
    const std::string s = std::to_string(id);
    std::vector<int> out;
    for (char ch : s)
        out.push_back(Vocab::digit(ch - '0'));
    return out;
}

SequencePlan plan_prompt(const GridSpec& grid, int query_color, const Vocab& vocab) {
    SequencePlan plan;
    for (int i = 0; i < grid.total_tokens(); ++i)
        plan.items.push_back({InputKind::image, -1, i, -1});
    for (int id : vocab.query_tokens(query_color))
        plan.items.push_back({InputKind::text, id, -1, -1});
    plan.items.push_back({InputKind::text, Vocab::kListOpen, -1, -1});
    plan.prompt_length = plan.length();
    return plan;
}

SequencePlan plan_grounding_sequence(const GridSpec& grid, int query_color, const std::vector<PointTriple>& ordered,
                                     const TargetOptions& options, const Vocab& vocab) {
    SequencePlan plan = plan_prompt(grid, query_color, vocab);
    const auto steps = build_targets(grid, std::span<const PointTriple>(ordered), options);
    const auto push = [&](InputItem item) { plan.items.push_back(item); };
    const auto last = [&]() { return plan.length() - 1; };

    size_t s = 0;
    for (size_t k = 0; k < ordered.size(); ++k) {
        const PointTriple& t = ordered[k];
        if (!t.object_id)
            throw InvalidArgument("plan_grounding_sequence: points need object ids");
        if (k > 0)
            push({InputKind::text, Vocab::kSep, -1, -1});
        plan.grounding.push_back({last(), steps[s++]});
        push({InputKind::patch, Vocab::kPatch, t.token, -1});
        plan.grounding.push_back({last(), steps[s++]});
        push({InputKind::subpatch, Vocab::kSubpatch, t.token, t.subpatch});
        plan.grounding.push_back({last(), steps[s++]});
        push({InputKind::location, Vocab::kLocation, -1, -1});
        for (int d : id_digits(*t.object_id))
            push({InputKind::text, d, -1, -1});
    }
    if (options.no_more_points) {
        if (!ordered.empty())
            push({InputKind::text, Vocab::kSep, -1, -1});
        plan.grounding.push_back({last(), steps[s++]});
        push({InputKind::patch, Vocab::kPatch, -1, -1});
    }
    for (int pos = plan.prompt_length - 1; pos < plan.length(); ++pos) {
        const int next = pos + 1 < plan.length() ? plan.items[static_cast<size_t>(pos + 1)].token_id : Vocab::kListClose;
        plan.lm_targets.emplace_back(pos, next);
    }
    return plan;
}

Mat assemble_inputs(const BackboneParams& backbone, const GroundingParams* grounding, const VitOutput& vit,
                    const SequencePlan& plan, int K) {
    const Eigen::Index D = backbone.token_embedding.rows();
    Mat x(D, plan.length());
    for (int pos = 0; pos < plan.length(); ++pos) {
        const InputItem& it = plan.items[static_cast<size_t>(pos)];
        auto col = x.col(pos);
        switch (it.kind) {
        case InputKind::image:
            col = vit.embeddings.col(it.image_token);
            break;
        case InputKind::text:
        case InputKind::location:
            col = backbone.token_embedding.col(it.token_id);
            break;
        case InputKind::patch:
            col = backbone.token_embedding.col(Vocab::kPatch);
            if (it.image_token >= 0)
                col += vit.embeddings.col(it.image_token);
            break;
        case InputKind::subpatch:
            if (!grounding)
                throw ContractViolation("assemble_inputs: subpatch input without grounding parameters");
            col = backbone.token_embedding.col(Vocab::kSubpatch);
            col.noalias() += grounding->subpatch_embed * vit.features.col(static_cast<Eigen::Index>(it.image_token) * K + it.subpatch);
            break;
        }
    }
    return x;
}

void assemble_inputs_backward(const BackboneParams& /*backbone*/, const GroundingParams* grounding, const VitOutput& vit,
                              const SequencePlan& plan, int K, const Mat& d_inputs, BackboneParams& grad_backbone,
                              GroundingParams* grad_grounding, Mat& d_features, Mat& d_embeddings) {
    for (int pos = 0; pos < plan.length(); ++pos) {
        const InputItem& it = plan.items[static_cast<size_t>(pos)];
        const auto d = d_inputs.col(pos);
        switch (it.kind) {
        case InputKind::image:
            d_embeddings.col(it.image_token) += d;
            break;
        case InputKind::text:
        case InputKind::location:
            grad_backbone.token_embedding.col(it.token_id) += d;
            break;
        case InputKind::patch:
            grad_backbone.token_embedding.col(Vocab::kPatch) += d;
            if (it.image_token >= 0)
                d_embeddings.col(it.image_token) += d;
            break;
        case InputKind::subpatch: {
            grad_backbone.token_embedding.col(Vocab::kSubpatch) += d;
            const Eigen::Index c = static_cast<Eigen::Index>(it.image_token) * K + it.subpatch;
            grad_grounding->subpatch_embed.noalias() += d * vit.features.col(c).transpose();
            d_features.col(c).noalias() += grounding->subpatch_embed.transpose() * d;
            break;
        }
        }
    }
}

} // namespace gp
