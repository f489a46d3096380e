#include "groundpoint/optim.hpp"

#include <cmath>
#include <numbers>

#include "groundpoint/errors.hpp"

namespace gp {

double scheduled_lr(const GroupSchedule& g, int step, int total_steps, double min_lr_ratio) {
    if (g.warmup > 0 && step < g.warmup)
        return g.lr * (step + 1) / g.warmup;
    const int span = std::max(1, total_steps - g.warmup);
    const double progress = std::clamp(static_cast<double>(step - g.warmup) / span, 0.0, 1.0);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return g.lr * (min_lr_ratio + (1.0 - min_lr_ratio) * cosine);
}

AdamW::AdamW(const ModelConfig& model, const OptimConfig& cfg)
    : cfg_(cfg), m_(zeros_like(model)), v_(zeros_like(model)) {}

StepStats AdamW::step(ModelParams& params, ModelParams& grad) {
    auto p = tensor_slots(params);
    auto g = tensor_slots(grad);
    auto m = tensor_slots(m_);
    auto v = tensor_slots(v_);
    if (p.size() != g.size() || p.size() != m.size())
        throw InvalidArgument("AdamW: parameter layout does not match the optimizer state");

    double sq[2] = {0.0, 0.0};
    for (const auto& s : g) {
        const double n = s.map().squaredNorm();
        if (!std::isfinite(n))
            throw NumericError("AdamW: non-finite gradient in " + s.name);
        sq[s.group == ParamGroup::pointing] += n;
    }
    StepStats stats;
    stats.backbone_grad_norm = std::sqrt(sq[0]);
    stats.pointing_grad_norm = std::sqrt(sq[1]);
    stats.backbone_lr = scheduled_lr(cfg_.backbone, t_, cfg_.total_steps, cfg_.min_lr_ratio);
    stats.pointing_lr = scheduled_lr(cfg_.pointing, t_, cfg_.total_steps, cfg_.min_lr_ratio);

    const auto clip_scale = [](double norm, double clip) {
        return clip > 0.0 && norm > clip ? clip / norm : 1.0;
    };
    const double scale[2] = {clip_scale(stats.backbone_grad_norm, cfg_.backbone.clip),
                             clip_scale(stats.pointing_grad_norm, cfg_.pointing.clip)};
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);

    for (size_t k = 0; k < p.size(); ++k) {
        const bool pointing = p[k].group == ParamGroup::pointing;
        const GroupSchedule& sched = pointing ? cfg_.pointing : cfg_.backbone;
        const double lr = pointing ? stats.pointing_lr : stats.backbone_lr;
        auto w = p[k].map();
        auto mk = m[k].map();
        auto vk = v[k].map();
        const Mat gk = g[k].map() * scale[pointing];
        mk = cfg_.beta1 * mk + (1.0 - cfg_.beta1) * gk;
        vk = cfg_.beta2 * vk + (1.0 - cfg_.beta2) * gk.cwiseProduct(gk);
        // Norm gains and biases are vectors; decay only applies to matrices.
        if (sched.weight_decay > 0.0 && p[k].cols > 1)
            w *= 1.0 - lr * sched.weight_decay;
        w.array() -= lr * (mk.array() / bc1) / ((vk.array() / bc2).sqrt() + cfg_.eps);
    }
    return stats;
}

} // namespace gp
