#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "groundpoint/eval.hpp"
#include "groundpoint/model.hpp"
#include "groundpoint/optim.hpp"
#include "groundpoint/task.hpp"

namespace gp {

struct TrainConfig {
    TaskConfig task;
    ModelConfig model;
    OptimConfig optim;
    int steps = 3000;
    int batch = 16;
    int train_size = 0;  // 0: a fresh example stream; otherwise a fixed set cycled in epochs
    int epochs = 0;      // with train_size: overrides steps with ceil(epochs * train_size / batch)
    int eval_every = 250;
    int eval_size = 256;
    int max_points = 64; // decoding cap at evaluation
    std::uint64_t seed = 1;
    std::string run_dir; // empty: no files written

    /// Toy defaults used by the acceptance runs (small enough for one CPU core).
    static TrainConfig defaults();
    /// Multi-frame variant used by the ablation runs.
    static TrainConfig multi_frame_defaults();
    int total_steps() const;
    void validate() const;
};

struct TrainResult {
    std::shared_ptr<Model> best;  // highest held-out F1 (earliest on ties)
    std::shared_ptr<Model> last;
    MetricsReport best_metrics;
    MetricsReport last_metrics;
    int best_step = 0;
    int steps_run = 0;
    bool diverged = false;
    std::string diagnostic;
    double seconds = 0.0;
};

using TrainObserver = std::function<void(const std::string& json_line)>;

/// Held-out examples: a stream seeded independently of the training data.
std::vector<Example> held_out_set(const TrainConfig& cfg);

MetricsReport evaluate(const Model& model, const std::vector<Example>& examples, int max_points);

/// Mean loss and gradient over a batch; per-example gradients are summed in batch order.
struct BatchResult {
    double loss = 0.0;
    LossBreakdown mean; // component-wise batch means
};
BatchResult batch_gradient(const Model& model, const std::vector<const Example*>& batch, ModelParams& grad,
                           std::vector<ModelParams>& scratch);

TrainResult train(const TrainConfig& cfg, const TrainObserver& observer = {});

struct SweepRow {
    int size = 0;
    HeadKind head = HeadKind::grounding;
    double f1 = 0.0;
    std::uint64_t seed = 0;
};

struct SweepConfig {
    TrainConfig base;
    std::vector<int> sizes{128, 512, 2048, 8192};
    std::vector<HeadKind> heads{HeadKind::grounding, HeadKind::text};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int epochs = 6;
};

std::vector<SweepRow> sweep(const SweepConfig& cfg, const TrainObserver& observer = {});
std::string sweep_csv(const std::vector<SweepRow>& rows);
double median_f1(const std::vector<SweepRow>& rows, int size, HeadKind head);

/// Root for run directories: $GROUNDPOINT_RUNS, else "runs".
std::string runs_root();

} // namespace gp
