#include "groundpoint/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "groundpoint/checkpoint.hpp"
#include "groundpoint/config.hpp"
#include "groundpoint/errors.hpp"
#include "groundpoint/kernels.hpp"

namespace gp {

using nlohmann::json;

TrainConfig TrainConfig::defaults() {
    TrainConfig c;
    c.task = TaskConfig{};
    c.model.backbone.hidden = 64;
    c.model.backbone.layers = 2;
    c.model.backbone.heads = 4;
    c.model.backbone.vit_dim = 32;
    c.model.backbone.context = 128;
    c.model.backbone.n_colors = c.task.n_colors;
    c.model.head_dim = 64;
    c.model.subpatch_dim = 64;
    return c;
}

TrainConfig TrainConfig::multi_frame_defaults() {
    TrainConfig c = defaults();
    c.task.frames = 3;
    c.task.max_targets = 10;
    return c;
}

int TrainConfig::total_steps() const {
    if (train_size > 0 && epochs > 0)
        return static_cast<int>((static_cast<long long>(epochs) * train_size + batch - 1) / batch);
    return steps;
}

void TrainConfig::validate() const {
    task.validate();
    model.backbone.validate();
    if (model.backbone.n_colors < task.n_colors)
        throw InvalidArgument("TrainConfig: the model knows fewer colors than the task uses");
    if (batch <= 0 || steps < 0 || train_size < 0 || epochs < 0 || eval_size < 0 || max_points < 0)
        throw InvalidArgument("TrainConfig: counts must be non-negative (batch positive)");
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::mt19937_64 rng(seq);
    return rng();
}

void zero(ModelParams& p) {
    for (auto& s : tensor_slots(p))
        s.map().setZero();
}

json breakdown_json(const LossBreakdown& b) {
    return {{"patch_loss", b.patch_loss},
            {"subpatch_loss", b.subpatch_loss},
            {"location_loss", b.location_loss},
            {"llm_token_loss_sum", b.llm_token_loss_sum},
            {"n_tokens", b.n_tokens},
            {"total", b.total}};
}

class RunLog {
public:
    RunLog(const std::string& dir, const TrainObserver& observer) : observer_(observer) {
        if (!dir.empty()) {
            std::filesystem::create_directories(dir);
            out_.open(std::filesystem::path(dir) / "metrics.jsonl");
            if (!out_)
                throw IoError("cannot write metrics log in " + dir);
        }
    }
    void write(const json& j) {
        const std::string line = j.dump();
        if (out_.is_open()) {
            out_ << line << '\n';
            out_.flush();
        }
        if (observer_)
            observer_(line);
    }

private:
    std::ofstream out_;
    const TrainObserver& observer_;
};

} // namespace

std::vector<Example> held_out_set(const TrainConfig& cfg) {
    return make_dataset(cfg.task, derive_seed(cfg.seed, 2), cfg.eval_size);
}

MetricsReport evaluate(const Model& model, const std::vector<Example>& examples, int max_points) {
    const int n = static_cast<int>(examples.size());
    std::vector<std::vector<PixelPoint>> preds(examples.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < n; ++k) {
        try {
            const Example& ex = examples[static_cast<size_t>(k)];
            preds[static_cast<size_t>(k)] = model.predict(ex.image, ex.query_color, max_points);
        } catch (...) {
#pragma omp critical
            if (!error)
                error = std::current_exception();
        }
    }
    if (error)
        std::rethrow_exception(error);
    MetricsAccumulator acc;
    for (int k = 0; k < n; ++k) {
        const Example& ex = examples[static_cast<size_t>(k)];
        acc.add(preds[static_cast<size_t>(k)], ex.annotation.points, MatchConfig::for_grid(ex.image.grid));
    }
    return acc.report();
}

BatchResult batch_gradient(const Model& model, const std::vector<const Example*>& batch, ModelParams& grad,
                           std::vector<ModelParams>& scratch) {
    const int B = static_cast<int>(batch.size());
    if (B == 0)
        throw InvalidArgument("batch_gradient: empty batch");
    while (static_cast<int>(scratch.size()) < B)
        scratch.push_back(zeros_like(model.config()));
    std::vector<LossBreakdown> losses(static_cast<size_t>(B));
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < B; ++b) {
        try {
            zero(scratch[static_cast<size_t>(b)]);
            losses[static_cast<size_t>(b)] = model.loss(*batch[static_cast<size_t>(b)], &scratch[static_cast<size_t>(b)]).breakdown;
        } catch (...) {
#pragma omp critical
            if (!error)
                error = std::current_exception();
        }
    }
    if (error)
        std::rethrow_exception(error);

    auto out = tensor_slots(grad);
    std::vector<std::vector<TensorSlot>> parts;
    for (int b = 0; b < B; ++b)
        parts.push_back(tensor_slots(scratch[static_cast<size_t>(b)]));
    std::vector<std::span<const double>> inputs(static_cast<size_t>(B));
    for (size_t k = 0; k < out.size(); ++k) {
        for (int b = 0; b < B; ++b)
            inputs[static_cast<size_t>(b)] = {parts[static_cast<size_t>(b)][k].data,
                                              static_cast<size_t>(parts[static_cast<size_t>(b)][k].size())};
        kernels::ordered_sum(inputs, {out[k].data, static_cast<size_t>(out[k].size())}, kernels::Exec::parallel);
        out[k].map() /= B;
    }

    BatchResult r;
    for (const auto& l : losses) {
        r.loss += l.total;
        r.mean.patch_loss += l.patch_loss;
        r.mean.subpatch_loss += l.subpatch_loss;
        r.mean.location_loss += l.location_loss;
        r.mean.llm_token_loss_sum += l.llm_token_loss_sum;
        r.mean.n_tokens += l.n_tokens;
    }
    r.loss /= B;
    r.mean.total = r.loss;
    r.mean.patch_loss /= B;
    r.mean.subpatch_loss /= B;
    r.mean.location_loss /= B;
    r.mean.llm_token_loss_sum /= B;
    r.mean.n_tokens /= B;
    return r;
}

TrainResult train(const TrainConfig& cfg_in, const TrainObserver& observer) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int total = cfg.total_steps();
    cfg.optim.total_steps = std::max(total, 1);

    RunLog log(cfg.run_dir, observer);
    if (!cfg.run_dir.empty()) {
        std::ofstream(std::filesystem::path(cfg.run_dir) / "config.txt") << to_key_values(cfg);
        const json manifest = {
            {"total_steps", total},
            {"batch", cfg.batch},
            {"note", "toy-scale schedule and batch size chosen for a single CPU core"},
        };
        std::ofstream(std::filesystem::path(cfg.run_dir) / "manifest.json") << manifest.dump(2) << '\n';
    }

    Model model(cfg.model, cfg.seed);
    AdamW opt(cfg.model, cfg.optim);
    const std::vector<Example> held_out = held_out_set(cfg);

    std::mt19937_64 data_rng(derive_seed(cfg.seed, 1));
    std::vector<Example> dataset;
    std::vector<size_t> order;
    size_t cursor = 0;
    if (cfg.train_size > 0) {
        dataset = make_dataset(cfg.task, derive_seed(cfg.seed, 1), cfg.train_size);
        order.resize(dataset.size());
        for (size_t k = 0; k < order.size(); ++k)
            order[k] = k;
        std::shuffle(order.begin(), order.end(), data_rng);
    }
    std::vector<Example> stream_batch;

    TrainResult result;
    double best_f1 = -1.0;
    const auto run_eval = [&](int step) {
        const MetricsReport m = evaluate(model, held_out, cfg.max_points);
        json j = json::parse(m.to_json());
        j["kind"] = "eval";
        j["step"] = step;
        log.write(j);
        result.last_metrics = m;
        if (m.f1 > best_f1) {
            best_f1 = m.f1;
            result.best = std::make_shared<Model>(model);
            result.best_metrics = m;
            result.best_step = step;
            if (!cfg.run_dir.empty())
                save_checkpoint((std::filesystem::path(cfg.run_dir) / "best.ckpt").string(), model,
                                json{{"step", step}, {"f1", m.f1}}.dump());
        }
    };

    ModelParams grad = zeros_like(cfg.model);
    std::vector<ModelParams> scratch;
    std::vector<const Example*> batch;
    for (int step = 0; step < total; ++step) {
        batch.clear();
        if (cfg.train_size > 0) {
            for (int b = 0; b < cfg.batch; ++b) {
                if (cursor == order.size()) {
                    std::shuffle(order.begin(), order.end(), data_rng);
                    cursor = 0;
                }
                batch.push_back(&dataset[order[cursor++]]);
            }
        } else {
            stream_batch.clear();
            for (int b = 0; b < cfg.batch; ++b)
                stream_batch.push_back(gen_example(data_rng, cfg.task));
            for (const auto& ex : stream_batch)
                batch.push_back(&ex);
        }

        bool ok = true;
        BatchResult br;
        StepStats stats;
        try {
            br = batch_gradient(model, batch, grad, scratch);
            ok = std::isfinite(br.loss);
            if (ok)
                stats = opt.step(model.params(), grad);
        } catch (const NumericError& e) {
            ok = false;
            result.diagnostic = e.what();
        }
        if (!ok) {
            if (result.diagnostic.empty())
                result.diagnostic = "non-finite loss";
            result.diverged = true;
            log.write({{"kind", "diverged"}, {"step", step}, {"loss", std::isfinite(br.loss) ? json(br.loss) : json("nan")},
                       {"reason", result.diagnostic}});
            break;
        }
        json j = breakdown_json(br.mean);
        j["kind"] = "step";
        j["step"] = step;
        j["loss"] = br.loss;
        j["lr_backbone"] = stats.backbone_lr;
        j["lr_pointing"] = stats.pointing_lr;
        j["grad_norm_backbone"] = stats.backbone_grad_norm;
        j["grad_norm_pointing"] = stats.pointing_grad_norm;
        log.write(j);
        result.steps_run = step + 1;
        if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && step + 1 < total)
            run_eval(step + 1);
    }
    if (!result.diverged)
        run_eval(result.steps_run);
    result.last = std::make_shared<Model>(model);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::vector<SweepRow> sweep(const SweepConfig& cfg, const TrainObserver& observer) {
    if (!std::is_sorted(cfg.sizes.begin(), cfg.sizes.end()) ||
        std::adjacent_find(cfg.sizes.begin(), cfg.sizes.end()) != cfg.sizes.end())
        throw InvalidArgument("sweep: sizes must be strictly increasing");
    std::vector<SweepRow> rows;
    for (int size : cfg.sizes)
        for (HeadKind head : cfg.heads)
            for (std::uint64_t seed : cfg.seeds) {
                TrainConfig t = cfg.base;
                t.model.head = head;
                t.train_size = size;
                t.epochs = cfg.epochs;
                t.seed = seed;
                t.eval_every = 0;
                if (!cfg.base.run_dir.empty())
                    t.run_dir = (std::filesystem::path(cfg.base.run_dir) /
                                 (std::to_string(size) + "_" + to_string(head) + "_" + std::to_string(seed)))
                                    .string();
                const TrainResult r = train(t);
                if (r.diverged)
                    throw NumericError("sweep: run diverged: " + r.diagnostic);
                rows.push_back({size, head, r.last_metrics.f1, seed});
                if (observer)
                    observer(json{{"kind", "sweep"}, {"size", size}, {"head", to_string(head)},
                                  {"seed", seed}, {"f1", r.last_metrics.f1}, {"seconds", r.seconds}}
                                 .dump());
            }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "size,head,f1,seed\n";
    out.precision(6);
    for (const auto& r : rows)
        out << r.size << ',' << to_string(r.head) << ',' << std::fixed << r.f1 << ',' << r.seed << '\n';
    return out.str();
}

double median_f1(const std::vector<SweepRow>& rows, int size, HeadKind head) {
    std::vector<double> v;
    for (const auto& r : rows)
        if (r.size == size && r.head == head)
            v.push_back(r.f1);
    if (v.empty())
        throw InvalidArgument("median_f1: no rows for this cell");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string runs_root() {
    const char* env = std::getenv("GROUNDPOINT_RUNS");
    return env && *env ? env : "runs";
}

} // namespace gp
