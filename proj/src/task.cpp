#include "groundpoint/task.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "groundpoint/errors.hpp"

namespace gp {

using nlohmann::json;

GridSpec TaskConfig::grid() const { return build_grid(width, height, frames); }

int TaskConfig::cells() const {
    const GridSpec g = grid();
    return g.n_frames() * g.subpatches_per_row() * g.subpatches_per_col();
}

void TaskConfig::validate() const {
    if (width <= 0 || height <= 0 || frames <= 0)
        throw InvalidArgument("TaskConfig: image dimensions must be positive");
    if (width % 14 != 0 || height % 14 != 0)
        throw InvalidArgument("TaskConfig: width and height must be multiples of 14 so every cell is visible");
    if (n_colors < 1)
        throw InvalidArgument("TaskConfig: need at least one color");
    if (min_targets < 0 || max_targets < min_targets)
        throw InvalidArgument("TaskConfig: invalid target range");
    if (max_targets > cells())
        throw InvalidArgument("TaskConfig: more targets than cells (" + std::to_string(max_targets) + " > " +
                              std::to_string(cells()) + ")");
}

Example gen_example(std::mt19937_64& rng, const TaskConfig& cfg) {
    cfg.validate();
    const GridSpec grid = cfg.grid();
    const int n_cells = cfg.cells();

    Example ex;
    ex.query_color = std::uniform_int_distribution<int>(0, cfg.n_colors - 1)(rng);
    int n = cfg.n_colors == 1 ? n_cells : std::uniform_int_distribution<int>(cfg.min_targets, cfg.max_targets)(rng);

    std::vector<int> cells(static_cast<size_t>(n_cells));
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), rng);
    std::vector<int> colors(static_cast<size_t>(n_cells));
    std::uniform_int_distribution<int> other(0, std::max(0, cfg.n_colors - 2));
    for (int k = 0; k < n_cells; ++k) {
        int c = ex.query_color;
        if (k >= n) {
            c = other(rng);
            if (c >= ex.query_color)
                ++c;
        }
        colors[static_cast<size_t>(cells[static_cast<size_t>(k)])] = c;
    }
    ex.image.grid = grid;
    ex.image.n_colors = cfg.n_colors;
    ex.image.colors = std::move(colors);
    ex.image.noise_seed = rng();
    ex.annotation.grid = grid;

    std::vector<int> targets(cells.begin(), cells.begin() + n);
    const int per_frame = grid.subpatches_per_row() * grid.subpatches_per_col();
    const int patch = grid.patch_px();
    for (int cell : targets) {
        PixelPoint p;
        p.frame = cell / per_frame;
        p.x = (cell % per_frame) % grid.subpatches_per_row() * patch + patch / 2.0;
        p.y = (cell % per_frame) / grid.subpatches_per_row() * patch + patch / 2.0;
        ex.annotation.points.push_back(p);
    }
    // Ids follow raster (token, subpatch) order; the list itself stays shuffled.
    const auto sorted = sort_points(grid, ex.annotation.points);
    for (auto& p : ex.annotation.points) {
        const PointTriple t = encode_point(grid, p);
        const auto it = std::find_if(sorted.begin(), sorted.end(), [&](const PointTriple& s) { return s.same_pair(t); });
        p.object_id = static_cast<int>(it - sorted.begin()) + 1;
    }
    return ex;
}

std::vector<Example> make_dataset(const TaskConfig& cfg, std::uint64_t seed, int n) {
    std::mt19937_64 rng(seed);
    std::vector<Example> out;
    out.reserve(static_cast<size_t>(std::max(n, 0)));
    for (int k = 0; k < n; ++k)
        out.push_back(gen_example(rng, cfg));
    return out;
}

std::string example_to_json(const Example& ex) {
    const GridSpec& g = ex.image.grid;
    json points = json::array();
    for (const auto& p : ex.annotation.points) {
        json jp = {{"x", p.x}, {"y", p.y}, {"frame", p.frame}};
        if (p.object_id)
            jp["id"] = *p.object_id;
        points.push_back(jp);
    }
    json j = {
        {"image",
         {{"width", g.image_width()},
          {"height", g.image_height()},
          {"frames", g.n_frames()},
          {"n_colors", ex.image.n_colors},
          {"noise_seed", ex.image.noise_seed},
          {"colors", ex.image.colors}}},
        {"query", ex.query_color},
        {"points", points},
    };
    return j.dump();
}

Example example_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid annotation JSON: ") + e.what(), e.byte);
    }
    try {
        Example ex;
        const json& im = j.at("image");
        const GridSpec grid = build_grid(im.at("width"), im.at("height"), im.value("frames", 1));
        ex.image.grid = grid;
        ex.image.n_colors = im.at("n_colors");
        ex.image.noise_seed = im.value("noise_seed", std::uint64_t{0});
        ex.image.colors = im.at("colors").get<std::vector<int>>();
        ex.image.validate();
        ex.query_color = j.at("query");
        ex.annotation.grid = grid;
        for (const json& jp : j.at("points")) {
            PixelPoint p;
            p.x = jp.at("x");
            p.y = jp.at("y");
            p.frame = jp.value("frame", 0);
            if (jp.contains("id"))
                p.object_id = jp["id"].get<int>();
            ex.annotation.points.push_back(p);
        }
        return ex;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("annotation: ") + e.what());
    }
}

void write_examples(const std::string& path, const std::vector<Example>& examples) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    for (const auto& ex : examples)
        out << example_to_json(ex) << '\n';
    if (!out)
        throw IoError("write failed: " + path);
}

std::vector<Example> read_examples(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + path);
    std::vector<Example> out;
    std::string line;
    while (std::getline(in, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos)
            out.push_back(example_from_json(line));
    return out;
}

} // namespace gp
