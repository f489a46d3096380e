#include "groundpoint/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "groundpoint/errors.hpp"

namespace gp {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw InvalidArgument("config: " + key + " expects an integer, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw InvalidArgument("config: " + key + " expects an unsigned integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const double out = std::stod(v, &used);
        if (used == v.size())
            return out;
    } catch (const std::exception&) {
    }
    throw InvalidArgument("config: " + key + " expects a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "off")
        return false;
    throw InvalidArgument("config: " + key + " expects true/false, got '" + v + "'");
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

struct Field {
    std::string key;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define GP_INT(name, member)                                                                                   \
    Field{name, [](TrainConfig& c, const std::string& v) { c.member = to_int(name, v); },                      \
          [](const TrainConfig& c) { return std::to_string(c.member); }}
#define GP_DBL(name, member)                                                                                   \
    Field{name, [](TrainConfig& c, const std::string& v) { c.member = to_double(name, v); },                   \
          [](const TrainConfig& c) { return fmt(c.member); }}
#define GP_BOOL(name, member)                                                                                  \
    Field{name, [](TrainConfig& c, const std::string& v) { c.member = to_bool(name, v); },                     \
          [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        GP_INT("width", task.width),
        GP_INT("height", task.height),
        GP_INT("frames", task.frames),
        GP_INT("n_colors", task.n_colors),
        GP_INT("min_targets", task.min_targets),
        GP_INT("max_targets", task.max_targets),
        GP_INT("hidden", model.backbone.hidden),
        GP_INT("layers", model.backbone.layers),
        GP_INT("heads", model.backbone.heads),
        GP_INT("vit_dim", model.backbone.vit_dim),
        GP_INT("context", model.backbone.context),
        GP_INT("mlp_ratio", model.backbone.mlp_ratio),
        GP_DBL("vit_noise", model.backbone.vit_noise),
        GP_DBL("rope_base", model.backbone.rope_base),
        GP_INT("head_dim", model.head_dim),
        GP_INT("subpatch_dim", model.subpatch_dim),
        GP_BOOL("rotary", model.rotary),
        GP_BOOL("no_more_points", model.no_more_points),
        GP_BOOL("point_sorting", model.point_sorting),
        Field{"head", [](TrainConfig& c, const std::string& v) { c.model.head = head_kind_from_string(v); },
              [](const TrainConfig& c) { return std::string(to_string(c.model.head)); }},
        GP_DBL("lr", optim.backbone.lr),
        GP_INT("warmup", optim.backbone.warmup),
        GP_DBL("clip", optim.backbone.clip),
        GP_DBL("weight_decay", optim.backbone.weight_decay),
        GP_DBL("pointing_lr", optim.pointing.lr),
        GP_INT("pointing_warmup", optim.pointing.warmup),
        GP_DBL("pointing_clip", optim.pointing.clip),
        GP_DBL("min_lr_ratio", optim.min_lr_ratio),
        GP_INT("steps", steps),
        GP_INT("batch", batch),
        GP_INT("train_size", train_size),
        GP_INT("epochs", epochs),
        GP_INT("eval_every", eval_every),
        GP_INT("eval_size", eval_size),
        GP_INT("max_points", max_points),
        Field{"seed", [](TrainConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
              [](const TrainConfig& c) { return std::to_string(c.seed); }},
        Field{"run_dir", [](TrainConfig& c, const std::string& v) { c.run_dir = v; },
              [](const TrainConfig& c) { return c.run_dir; }},
    };
    return f;
}

#undef GP_INT
#undef GP_DBL
#undef GP_BOOL

} // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    size_t offset = 0;
    while (std::getline(in, line)) {
        const size_t line_start = offset;
        offset += line.size() + 1;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ParseError("config: expected 'key = value'", line_start);
        const std::string key = trim(body.substr(0, eq));
        if (key.empty())
            throw ParseError("config: empty key", line_start);
        if (out.count(key))
            throw ParseError("config: duplicate key '" + key + "'", line_start);
        out[key] = trim(body.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> read_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

TrainConfig apply_config(const TrainConfig& base, const std::map<std::string, std::string>& kv) {
    TrainConfig cfg = base;
    for (const auto& [key, value] : kv) {
        bool found = false;
        for (const Field& f : fields())
            if (f.key == key) {
                f.set(cfg, value);
                found = true;
                break;
            }
        if (!found)
            throw InvalidArgument("config: unknown key '" + key + "'");
    }
    cfg.model.backbone.n_colors = cfg.task.n_colors;
    return cfg;
}

std::string to_key_values(const TrainConfig& cfg) {
    std::string out;
    for (const Field& f : fields())
        out += f.key + " = " + f.get(cfg) + "\n";
    return out;
}

} // namespace gp
