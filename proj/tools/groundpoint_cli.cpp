// groundpoint command-line entry point.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "groundpoint/checkpoint.hpp"
#include "groundpoint/config.hpp"
#include "groundpoint/errors.hpp"
#include "groundpoint/eval.hpp"
#include "groundpoint/gradcheck.hpp"
#include "groundpoint/kernels.hpp"
#include "groundpoint/task.hpp"
#include "groundpoint/trainer.hpp"

using nlohmann::json;

namespace {

struct ConfigArgs {
    std::string file;
    std::vector<std::string> sets;
    std::string head;
    bool multi_frame = false;
};

void add_config_options(CLI::App* app, ConfigArgs& a) {
    app->add_option("--config", a.file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", a.sets, "override one key (key=value), repeatable");
    app->add_option("--head", a.head, "grounding or text");
    app->add_flag("--multi-frame", a.multi_frame, "start from the multi-frame defaults");
}

gp::TrainConfig resolve_config(const ConfigArgs& a) {
    gp::TrainConfig cfg = a.multi_frame ? gp::TrainConfig::multi_frame_defaults() : gp::TrainConfig::defaults();
    if (!a.file.empty())
        cfg = gp::apply_config(cfg, gp::read_key_value_file(a.file));
    std::string overrides;
    for (const auto& s : a.sets)
        overrides += s + "\n";
    if (!a.head.empty())
        overrides += "head = " + a.head + "\n";
    return gp::apply_config(cfg, gp::parse_key_values(overrides));
}

json point_json(const gp::PixelPoint& p) {
    json j = {{"x", p.x}, {"y", p.y}, {"frame", p.frame}};
    if (p.object_id)
        j["id"] = *p.object_id;
    return j;
}

std::vector<gp::PixelPoint> points_from(const json& j) {
    std::vector<gp::PixelPoint> out;
    for (const json& jp : j.at("points")) {
        gp::PixelPoint p;
        p.x = jp.at("x");
        p.y = jp.at("y");
        p.frame = jp.value("frame", 0);
        if (jp.contains("id"))
            p.object_id = jp["id"].get<int>();
        out.push_back(p);
    }
    return out;
}

std::vector<json> read_json_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw gp::IoError("cannot read " + path);
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos)
            out.push_back(json::parse(line));
    return out;
}

std::string default_run_dir(const std::string& name) {
    const auto stamp = std::chrono::system_clock::now().time_since_epoch() / std::chrono::seconds(1);
    return (std::filesystem::path(gp::runs_root()) / (name + "-" + std::to_string(stamp))).string();
}

int cmd_codec(int width, int height, int frames) {
    const auto t0 = std::chrono::steady_clock::now();
    const gp::GridSpec grid = gp::build_grid(width, height, frames);
    const auto r = gp::kernels::codec_scan(grid, gp::kernels::Exec::parallel);
    const double bound = grid.location_cell_diagonal() / 2.0;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = r.max_euclidean_error <= bound * (1.0 + 1e-12) && r.frame_mismatches == 0;
    std::cout << json{{"width", width},
                      {"height", height},
                      {"frames", frames},
                      {"pixels", r.pixels},
                      {"max_error_px", r.max_euclidean_error},
                      {"max_axis_error_px", r.max_inf_error},
                      {"bound_px", bound},
                      {"frame_mismatches", r.frame_mismatches},
                      {"passed", ok},
                      {"seconds", secs}}
                     .dump()
              << '\n';
    return ok ? 0 : 1;
}

int cmd_train(const ConfigArgs& a, std::string run_dir, bool quiet) {
    gp::TrainConfig cfg = resolve_config(a);
    cfg.run_dir = run_dir.empty() ? default_run_dir("train") : run_dir;
    const auto r = gp::train(cfg, [&](const std::string& line) {
        if (!quiet || line.find("\"kind\":\"step\"") == std::string::npos)
            std::cout << line << '\n';
    });
    json summary = {{"kind", "summary"},  {"run_dir", cfg.run_dir},   {"steps", r.steps_run},
                    {"best_step", r.best_step}, {"best_f1", r.best_metrics.f1}, {"diverged", r.diverged},
                    {"seconds", r.seconds}};
    if (r.diverged)
        summary["diagnostic"] = r.diagnostic;
    std::cout << summary.dump() << '\n';
    return r.diverged ? 2 : 0;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(std::stoi(item));
    return out;
}

int cmd_sweep(const ConfigArgs& a, const std::string& sizes, const std::string& seeds, int epochs,
              const std::string& out_path, std::string run_dir) {
    gp::SweepConfig s;
    s.base = resolve_config(a);
    s.base.run_dir = run_dir.empty() ? default_run_dir("sweep") : run_dir;
    if (!sizes.empty())
        s.sizes = parse_int_list(sizes);
    if (!seeds.empty()) {
        s.seeds.clear();
        for (int v : parse_int_list(seeds))
            s.seeds.push_back(static_cast<std::uint64_t>(v));
    }
    if (!a.head.empty())
        s.heads = {gp::head_kind_from_string(a.head)};
    s.epochs = epochs;
    const auto rows = gp::sweep(s, [](const std::string& line) { std::cout << line << '\n'; });
    const std::string csv = gp::sweep_csv(rows);
    const std::string path =
        out_path.empty() ? (std::filesystem::path(s.base.run_dir) / "sweep.csv").string() : out_path;
    std::filesystem::create_directories(std::filesystem::path(path).parent_path().empty()
                                            ? std::filesystem::path(".")
                                            : std::filesystem::path(path).parent_path());
    std::ofstream(path) << csv;
    std::cout << csv;
    for (int size : s.sizes)
        for (gp::HeadKind h : s.heads)
            std::cout << json{{"kind", "median"}, {"size", size}, {"head", gp::to_string(h)},
                              {"f1", gp::median_f1(rows, size, h)}}
                             .dump()
                      << '\n';
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, double radius, const std::string& render) {
    const auto preds = read_json_lines(pred_path);
    const auto gts = read_json_lines(gt_path);
    if (preds.size() != gts.size())
        throw gp::InvalidArgument("eval: prediction and ground-truth files have different line counts");
    if (!render.empty())
        std::filesystem::create_directories(render);
    gp::MetricsAccumulator acc;
    for (size_t k = 0; k < preds.size(); ++k) {
        double r = radius;
        std::optional<gp::Example> ex;
        if (gts[k].contains("image"))
            ex = gp::example_from_json(gts[k].dump());
        if (!(r > 0)) {
            if (!ex)
                throw gp::InvalidArgument("eval: --radius is required when the ground truth has no image grid");
            r = gp::MatchConfig::for_grid(ex->image.grid).radius_px;
        }
        const auto p = points_from(preds[k]);
        const auto g = points_from(gts[k]);
        acc.add(p, g, {r});
        if (!render.empty() && ex)
            gp::render_overlay(ex->image, p, g,
                               (std::filesystem::path(render) / ("overlay_" + std::to_string(k) + ".ppm")).string());
    }
    std::cout << acc.report().to_json() << '\n';
    return 0;
}

int cmd_decode(const std::string& ckpt, const std::string& input, const std::string& out_path, int max_points) {
    const gp::Model model = gp::load_checkpoint(ckpt);
    std::ifstream in(input);
    if (!in)
        throw gp::IoError("cannot read " + input);
    std::stringstream ss;
    ss << in.rdbuf();
    const gp::Example ex = gp::example_from_json(ss.str());
    json out;
    json pts = json::array();
    if (model.config().head == gp::HeadKind::grounding) {
        const auto r = model.decode(ex.image, ex.query_color, model.config().decode_config(max_points));
        for (const auto& p : r.points)
            pts.push_back(point_json(p));
        out = {{"points", pts}, {"n_grounding_tokens", r.n_grounding_tokens}, {"text", r.text}};
    } else {
        for (const auto& p : model.predict(ex.image, ex.query_color, max_points))
            pts.push_back(point_json(p));
        out = {{"points", pts}, {"n_grounding_tokens", 0}};
    }
    if (out_path.empty() || out_path == "-") {
        std::cout << out.dump() << '\n';
    } else {
        std::ofstream f(out_path);
        if (!f)
            throw gp::IoError("cannot write " + out_path);
        f << out.dump() << '\n';
    }
    return 0;
}

int cmd_gen(const ConfigArgs& a, int n, std::uint64_t seed, const std::string& out_path) {
    const gp::TrainConfig cfg = resolve_config(a);
    gp::write_examples(out_path, gp::make_dataset(cfg.task, seed, n));
    return 0;
}

int cmd_gradcheck(int instances, const std::string& head, double tol) {
    const auto t0 = std::chrono::steady_clock::now();
    const gp::HeadKind kind = gp::head_kind_from_string(head);
    double worst = 0.0;
    for (int s = 0; s < instances; ++s) {
        const gp::Model model(gp::gradcheck_model_config(kind), 100 + s);
        std::mt19937_64 rng(200 + s);
        const gp::Example ex = gp::gen_example(rng, gp::gradcheck_task());
        const auto rep = gp::gradcheck(model, ex);
        for (const auto& t : rep.tensors)
            std::cout << json{{"instance", s}, {"tensor", t.name}, {"rel_error", t.rel_error},
                              {"analytic_norm", t.analytic_norm}, {"numeric_norm", t.numeric_norm}}
                             .dump()
                      << '\n';
        worst = std::max(worst, rep.max_rel_error);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << json{{"kind", "summary"}, {"max_rel_error", worst}, {"tolerance", tol},
                      {"passed", worst < tol}, {"seconds", secs}}
                     .dump()
              << '\n';
    return worst < tol ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"groundpoint: grounding-token pointing at toy scale"};
    app.require_subcommand(1);

    auto* codec = app.add_subcommand("codec", "pixel <-> triple codec tools");
    codec->require_subcommand(1);
    auto* check = codec->add_subcommand("check", "exhaustive round-trip scan");
    int width = 56, height = 56, frames = 1;
    check->add_option("--width", width)->required();
    check->add_option("--height", height)->required();
    check->add_option("--frames", frames);

    ConfigArgs train_args, sweep_args, gen_args;
    std::string run_dir;
    bool quiet = false;
    auto* train = app.add_subcommand("train", "train one model");
    add_config_options(train, train_args);
    train->add_option("--run-dir", run_dir, "run directory (default under $GROUNDPOINT_RUNS)");
    train->add_flag("--quiet", quiet, "only print evaluation records");

    std::string sizes, seeds, csv_out;
    int epochs = 6;
    auto* sweep = app.add_subcommand("sweep", "sample-efficiency sweep over dataset sizes and heads");
    add_config_options(sweep, sweep_args);
    sweep->add_option("--sizes", sizes, "comma-separated dataset sizes");
    sweep->add_option("--seeds", seeds, "comma-separated seeds");
    sweep->add_option("--epochs", epochs);
    sweep->add_option("--out", csv_out, "CSV path");
    sweep->add_option("--run-dir", run_dir);

    std::string pred, gt, render;
    double radius = 0.0;
    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    eval->add_option("--pred", pred, "JSON lines with {points: [...]}")->required();
    eval->add_option("--gt", gt, "annotation JSON lines")->required();
    eval->add_option("--radius", radius, "match radius in px (default: location-cell diagonal)");
    eval->add_option("--render", render, "write PPM overlays here");

    std::string ckpt, input, out;
    int max_points = 256;
    auto* decode = app.add_subcommand("decode", "decode points for one example");
    decode->add_option("--checkpoint", ckpt)->required();
    decode->add_option("--input", input, "annotation JSON (image and query)")->required();
    decode->add_option("--out", out);
    decode->add_option("--max-points", max_points);

    int n = 100;
    std::uint64_t seed = 1;
    auto* gen = app.add_subcommand("gen", "write synthetic annotations as JSON lines");
    add_config_options(gen, gen_args);
    gen->add_option("--n", n);
    gen->add_option("--seed", seed);
    gen->add_option("--out", out)->required();

    int instances = 5;
    std::string gc_head = "grounding";
    double tol = 1e-4;
    auto* grad = app.add_subcommand("gradcheck", "analytic vs central-difference gradients");
    grad->add_option("--instances", instances);
    grad->add_option("--head", gc_head);
    grad->add_option("--tolerance", tol);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*check)
            return cmd_codec(width, height, frames);
        if (*train)
            return cmd_train(train_args, run_dir, quiet);
        if (*sweep)
            return cmd_sweep(sweep_args, sizes, seeds, epochs, csv_out, run_dir);
        if (*eval)
            return cmd_eval(pred, gt, radius, render);
        if (*decode)
            return cmd_decode(ckpt, input, out, max_points);
        if (*gen)
            return cmd_gen(gen_args, n, seed, out);
        if (*grad)
            return cmd_gradcheck(instances, gc_head, tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
