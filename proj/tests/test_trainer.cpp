#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "groundpoint/errors.hpp"
#include "groundpoint/gradcheck.hpp"
#include "groundpoint/trainer.hpp"

using namespace gp;
using nlohmann::json;

namespace {

TrainConfig tiny(HeadKind head = HeadKind::grounding) {
    TrainConfig c = TrainConfig::defaults();
    c.task = gradcheck_task();
    c.model = gradcheck_model_config(head);
    c.model.backbone.n_colors = c.task.n_colors;
    c.batch = 4;
    c.steps = 10;
    c.eval_every = 5;
    c.eval_size = 8;
    c.max_points = 8;
    return c;
}

std::vector<json> run_lines(const TrainConfig& cfg, TrainResult* out = nullptr) {
    std::vector<json> lines;
    const TrainResult r = train(cfg, [&](const std::string& l) { lines.push_back(json::parse(l)); });
    if (out)
        *out = r;
    return lines;
}

std::map<std::string, std::set<std::string>> keys_by_kind(const std::vector<json>& lines) {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& j : lines)
        for (const auto& [k, v] : j.items())
            out[j.at("kind").get<std::string>()].insert(k);
    return out;
}

} // namespace

TEST(Trainer, FirstTenStepsAreBitIdenticalAcrossRuns) {
    const auto a = run_lines(tiny()), b = run_lines(tiny());
    int steps = 0;
    ASSERT_EQ(a.size(), b.size());
    for (size_t k = 0; k < a.size(); ++k) {
        if (a[k]["kind"] != "step")
            continue;
        ++steps;
        EXPECT_EQ(a[k]["loss"].get<double>(), b[k]["loss"].get<double>());
    }
    EXPECT_EQ(steps, 10);
}

TEST(Trainer, SeedChangesData) {
    TrainConfig c = tiny();
    c.steps = 1;
    const auto a = run_lines(c);
    c.seed = 2;
    const auto b = run_lines(c);
    EXPECT_NE(a[0]["loss"].get<double>(), b[0]["loss"].get<double>());
}

TEST(Trainer, SerialAndParallelGradientsAgreeBitwise) {
    const TrainConfig c = tiny();
    const Model m(c.model, 5);
    const auto data = make_dataset(c.task, 9, 6);
    std::vector<const Example*> batch;
    for (const auto& ex : data)
        batch.push_back(&ex);
    ModelParams g1 = zeros_like(c.model), g2 = zeros_like(c.model);
    std::vector<ModelParams> s1, s2;
#ifdef _OPENMP
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    const BatchResult r1 = batch_gradient(m, batch, g1, s1);
#ifdef _OPENMP
    omp_set_num_threads(4);
#endif
    const BatchResult r2 = batch_gradient(m, batch, g2, s2);
#ifdef _OPENMP
    omp_set_num_threads(saved);
#endif
    EXPECT_EQ(r1.loss, r2.loss);
    auto a = tensor_slots(g1), b = tensor_slots(g2);
    for (size_t k = 0; k < a.size(); ++k)
        EXPECT_EQ(a[k].map(), b[k].map()) << a[k].name;
}

TEST(Trainer, BatchGradientIsMeanOfExampleGradients) {
    const TrainConfig c = tiny();
    const Model m(c.model, 6);
    const auto data = make_dataset(c.task, 10, 3);
    std::vector<const Example*> batch{&data[0], &data[1], &data[2]};
    ModelParams g = zeros_like(c.model);
    std::vector<ModelParams> scratch;
    const BatchResult r = batch_gradient(m, batch, g, scratch);
    ModelParams sum = zeros_like(c.model);
    double loss = 0;
    for (const auto& ex : data) {
        ModelParams one = zeros_like(c.model);
        loss += m.loss(ex, &one).breakdown.total;
        add_scaled(sum, one, 1.0 / 3.0);
    }
    EXPECT_NEAR(r.loss, loss / 3.0, 1e-12);
    auto a = tensor_slots(g), b = tensor_slots(sum);
    for (size_t k = 0; k < a.size(); ++k)
        EXPECT_LT((a[k].map() - b[k].map()).norm(), 1e-12 * (1.0 + b[k].map().norm())) << a[k].name;
    std::vector<const Example*> none;
    EXPECT_THROW(batch_gradient(m, none, g, scratch), InvalidArgument);
}

TEST(Trainer, DivergenceAbortsWithDiagnostic) {
    TrainConfig c = tiny();
    c.optim.backbone.lr = 1e200;
    c.optim.backbone.clip = 0.0;
    TrainResult r;
    const auto lines = run_lines(c, &r);
    EXPECT_TRUE(r.diverged);
    EXPECT_FALSE(r.diagnostic.empty());
    EXPECT_EQ(lines.back()["kind"], "diverged");
}

TEST(Trainer, RunDirectoryContents) {
    TrainConfig c = tiny();
    c.run_dir = (std::filesystem::temp_directory_path() / "gp_trainer_run").string();
    std::filesystem::remove_all(c.run_dir);
    const TrainResult r = train(c);
    for (const char* f : {"config.txt", "manifest.json", "metrics.jsonl", "best.ckpt"})
        EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(c.run_dir) / f)) << f;
    std::ifstream in(std::filesystem::path(c.run_dir) / "metrics.jsonl");
    int lines = 0;
    for (std::string l; std::getline(in, l);) {
        ++lines;
        EXPECT_NO_THROW(json::parse(l));
    }
    EXPECT_EQ(lines, 10 + 2);
    EXPECT_EQ(r.steps_run, 10);
    ASSERT_TRUE(r.best);
    std::filesystem::remove_all(c.run_dir);
}

TEST(Trainer, BothHeadsLogTheSameSchema) {
    TrainConfig g = tiny(), t = tiny(HeadKind::text);
    g.steps = t.steps = 3;
    EXPECT_EQ(keys_by_kind(run_lines(g)), keys_by_kind(run_lines(t)));
}

TEST(Trainer, EpochsOverrideSteps) {
    TrainConfig c = tiny();
    c.train_size = 10;
    c.epochs = 6;
    EXPECT_EQ(c.total_steps(), 15);
    c.batch = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Sweep, RowCountAndCsv) {
    SweepConfig s;
    s.base = tiny();
    s.base.eval_size = 4;
    s.sizes = {4, 8};
    s.seeds = {1, 2};
    s.epochs = 1;
    const auto rows = sweep(s);
    EXPECT_EQ(rows.size(), 2u * 2u * 2u);
    const std::string csv = sweep_csv(rows);
    EXPECT_EQ(csv.rfind("size,head,f1,seed\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
    s.sizes = {8, 4};
    EXPECT_THROW(sweep(s), InvalidArgument);
}

TEST(Sweep, Median) {
    const std::vector<SweepRow> rows{{8, HeadKind::text, 0.2, 1}, {8, HeadKind::text, 0.9, 2},
                                     {8, HeadKind::text, 0.5, 3}, {8, HeadKind::grounding, 1.0, 1}};
    EXPECT_DOUBLE_EQ(median_f1(rows, 8, HeadKind::text), 0.5);
    EXPECT_DOUBLE_EQ(median_f1(rows, 8, HeadKind::grounding), 1.0);
}

TEST(Harness, RunsRootFromEnvironment) {
    ::setenv("GROUNDPOINT_RUNS", "/tmp/gp_runs_env", 1);
    EXPECT_EQ(runs_root(), "/tmp/gp_runs_env");
    ::unsetenv("GROUNDPOINT_RUNS");
    EXPECT_EQ(runs_root(), "runs");
}
