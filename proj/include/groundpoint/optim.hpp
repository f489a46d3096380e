#pragma once

#include <vector>

#include "groundpoint/model.hpp"

namespace gp {

struct GroupSchedule {
    double lr = 3e-4;
    int warmup = 0;
    double clip = 0.0; // gradient-norm clip, 0 disables
    double weight_decay = 0.0;
};

struct OptimConfig {
    GroupSchedule backbone{3e-4, 0, 1.0, 0.01};
    GroupSchedule pointing{1e-4, 200, 1.0, 0.0};
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int total_steps = 3000; // cosine decay horizon
    double min_lr_ratio = 0.1;
};

/// Warmup then cosine decay down to min_lr_ratio * lr.
double scheduled_lr(const GroupSchedule& g, int step, int total_steps, double min_lr_ratio);

struct StepStats {
    double backbone_grad_norm = 0.0;
    double pointing_grad_norm = 0.0;
    double backbone_lr = 0.0;
    double pointing_lr = 0.0;
};

/// AdamW with decoupled weight decay and one schedule and clip per parameter group.
class AdamW {
public:
    AdamW(const ModelConfig& model, const OptimConfig& cfg);

    StepStats step(ModelParams& params, ModelParams& grad);
    int steps_taken() const { return t_; }
    const OptimConfig& config() const { return cfg_; }

private:
    OptimConfig cfg_;
    ModelParams m_, v_;
    int t_ = 0;
};

} // namespace gp
