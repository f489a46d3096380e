#include "groundpoint/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "groundpoint/errors.hpp"

namespace gp {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'G', 'P', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json config_json(const ModelConfig& c) {
    const ToyModelConfig& b = c.backbone;
    return {
        {"hidden", b.hidden},       {"layers", b.layers},
        {"heads", b.heads},         {"vit_dim", b.vit_dim},
        {"context", b.context},     {"n_colors", b.n_colors},
        {"mlp_ratio", b.mlp_ratio}, {"vit_noise", b.vit_noise},
        {"rope_base", b.rope_base}, {"head_dim", c.head_dim},
        {"subpatch_dim", c.subpatch_dim}, {"rotary", c.rotary},
        {"no_more_points", c.no_more_points}, {"point_sorting", c.point_sorting},
        {"head", to_string(c.head)},
    };
}

ModelConfig config_from(const json& j) {
    ModelConfig c;
    ToyModelConfig& b = c.backbone;
    b.hidden = j.at("hidden");
    b.layers = j.at("layers");
    b.heads = j.at("heads");
    b.vit_dim = j.at("vit_dim");
    b.context = j.at("context");
    b.n_colors = j.at("n_colors");
    b.mlp_ratio = j.at("mlp_ratio");
    b.vit_noise = j.at("vit_noise");
    b.rope_base = j.at("rope_base");
    c.head_dim = j.at("head_dim");
    c.subpatch_dim = j.at("subpatch_dim");
    c.rotary = j.at("rotary");
    c.no_more_points = j.at("no_more_points");
    c.point_sorting = j.at("point_sorting");
    c.head = head_kind_from_string(j.at("head").get<std::string>());
    return c;
}

struct Loaded {
    CheckpointInfo info;
    std::vector<char> data;
};

Loaded read_file(const std::string& path, bool with_data) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read checkpoint " + path);
    char magic[8];
    std::uint64_t len = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&len), 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw ParseError("not a groundpoint checkpoint: " + path, 0);
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in)
        throw ParseError("truncated checkpoint manifest", 16);
    Loaded out;
    try {
        const json m = json::parse(text);
        out.info.config = config_from(m.at("config"));
        out.info.extra = m.value("extra", json::object()).dump();
        for (const json& t : m.at("tensors"))
            out.info.tensors.push_back({t.at("name"), t.at("shape").get<std::vector<std::int64_t>>(), t.at("dtype"),
                                        t.at("offset")});
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad checkpoint manifest: ") + e.what(), 16);
    }
    if (with_data)
        out.data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return out;
}

} // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
    try {
        return config_from(json::parse(text));
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("model config: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const Model& model, const std::string& extra_json) {
    auto slots = tensor_slots(const_cast<ModelParams&>(model.params()));
    json tensors = json::array();
    std::uint64_t offset = 0;
    for (const auto& s : slots) {
        tensors.push_back({{"name", s.name}, {"shape", {s.rows, s.cols}}, {"dtype", "f32"}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(s.size()) * sizeof(float);
    }
    json manifest = {{"config", config_json(model.config())}, {"tensors", tensors}};
    try {
        manifest["extra"] = json::parse(extra_json);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("save_checkpoint: extra is not JSON: ") + e.what());
    }
    const std::string text = manifest.dump();
    const std::uint64_t len = text.size();

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write checkpoint " + path);
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(len));
    std::vector<float> buf;
    for (const auto& s : slots) {
        buf.resize(static_cast<size_t>(s.size()));
        for (Eigen::Index k = 0; k < s.size(); ++k)
            buf[static_cast<size_t>(k)] = static_cast<float>(s.data[k]);
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out)
        throw IoError("write failed: " + path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) { return read_file(path, false).info; }

Model load_checkpoint(const std::string& path) {
    Loaded f = read_file(path, true);
    ModelParams params = zeros_like(f.info.config);
    auto slots = tensor_slots(params);
    if (slots.size() != f.info.tensors.size())
        throw ParseError("checkpoint tensor count does not match its config", 16);
    for (size_t k = 0; k < slots.size(); ++k) {
        const ManifestEntry& e = f.info.tensors[k];
        const TensorSlot& s = slots[k];
        if (e.name != s.name || e.shape.size() != 2 || e.shape[0] != s.rows || e.shape[1] != s.cols ||
            e.dtype != "f32")
            throw ParseError("checkpoint tensor " + e.name + " does not match the expected layout", 16);
        const std::uint64_t bytes = static_cast<std::uint64_t>(s.size()) * sizeof(float);
        if (e.offset + bytes > f.data.size())
            throw ParseError("checkpoint data truncated at " + e.name, 16);
        std::vector<float> buf(static_cast<size_t>(s.size()));
        std::memcpy(buf.data(), f.data.data() + e.offset, bytes);
        for (Eigen::Index i = 0; i < s.size(); ++i)
            s.data[i] = buf[static_cast<size_t>(i)];
    }
    return Model(f.info.config, std::move(params));
}

} // namespace gp
