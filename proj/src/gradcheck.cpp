#include "groundpoint/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace gp {

GradcheckReport gradcheck(const Model& model_in, const Example& ex, double h) {
    Model model = model_in;
    ModelParams grad = zeros_like(model.config());
    model.loss(ex, &grad);

    GradcheckReport report;
    auto params = tensor_slots(model.params());
    auto analytic = tensor_slots(grad);
    for (size_t k = 0; k < params.size(); ++k) {
        const TensorSlot& p = params[k];
        Mat numeric(p.rows, p.cols);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double saved = p.data[i];
            p.data[i] = saved + h;
            const double up = model.loss(ex).breakdown.total;
            p.data[i] = saved - h;
            const double down = model.loss(ex).breakdown.total;
            p.data[i] = saved;
            numeric.data()[i] = (up - down) / (2.0 * h);
        }
        TensorGradCheck t;
        t.name = p.name;
        const Mat a = analytic[k].map();
        t.analytic_norm = a.norm();
        t.numeric_norm = numeric.norm();
        const double denom = std::max(t.analytic_norm, t.numeric_norm);
        t.rel_error = denom < 1e-10 ? 0.0 : (a - numeric).norm() / denom;
        report.max_rel_error = std::max(report.max_rel_error, t.rel_error);
        report.scalars += p.size();
        report.tensors.push_back(t);
    }
    return report;
}

ModelConfig gradcheck_model_config(HeadKind head) {
    ModelConfig c;
    c.backbone.hidden = 8;
    c.backbone.layers = 2;
    c.backbone.heads = 2;
    c.backbone.vit_dim = 6;
    c.backbone.context = 96;
    c.backbone.n_colors = 3;
    c.backbone.mlp_ratio = 2;
    c.head_dim = 4;
    c.subpatch_dim = 4;
    c.head = head;
    return c;
}

TaskConfig gradcheck_task() {
    TaskConfig t;
    t.width = 56;
    t.height = 28;
    t.frames = 1;
    t.n_colors = 3;
    t.min_targets = 1;
    t.max_targets = 3;
    return t;
}

} // namespace gp
