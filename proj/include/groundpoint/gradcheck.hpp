#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "groundpoint/model.hpp"
#include "groundpoint/task.hpp"

namespace gp {

struct TensorGradCheck {
    std::string name;
    double analytic_norm = 0.0;
    double numeric_norm = 0.0;
    double rel_error = 0.0; // |a - n| / max(|a|, |n|), 0 when both vanish
};

struct GradcheckReport {
    std::vector<TensorGradCheck> tensors;
    double max_rel_error = 0.0;
    long long scalars = 0;
};

/// Central differences on every scalar of every tensor of the total loss.
GradcheckReport gradcheck(const Model& model, const Example& ex, double h = 1e-4);

/// Tiny model and task used by the gradient-check runs.
ModelConfig gradcheck_model_config(HeadKind head = HeadKind::grounding);
TaskConfig gradcheck_task();

} // namespace gp
