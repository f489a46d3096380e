#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "groundpoint/checkpoint.hpp"
#include "groundpoint/errors.hpp"
#include "groundpoint/gradcheck.hpp"
#include "groundpoint/trainer.hpp"

using namespace gp;

namespace {

std::string tmp(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

bool has_tensor(const CheckpointInfo& info, const std::string& name) {
    for (const auto& t : info.tensors)
        if (t.name == name)
            return true;
    return false;
}

} // namespace

TEST(Checkpoint, RoundTripWithinFloatPrecision) {
    const ModelConfig mc = gradcheck_model_config();
    Model m(mc, 3);
    const std::string path = tmp("gp_ckpt_a.ckpt");
    save_checkpoint(path, m, "{\"note\":1}");
    Model back = load_checkpoint(path);
    EXPECT_EQ(model_config_to_json(back.config()), model_config_to_json(mc));
    auto a = tensor_slots(m.params());
    auto b = tensor_slots(back.params());
    ASSERT_EQ(a.size(), b.size());
    for (size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].name, b[k].name);
        for (Eigen::Index i = 0; i < a[k].size(); ++i)
            EXPECT_EQ(double(float(a[k].data[i])), b[k].data[i]);
    }
    const CheckpointInfo info = read_checkpoint_info(path);
    EXPECT_EQ(info.tensors.size(), a.size());
    EXPECT_NE(info.extra.find("note"), std::string::npos);
    std::filesystem::remove(path);
}

TEST(Checkpoint, ZeroStepsSavesInitialization) {
    TrainConfig cfg = TrainConfig::defaults();
    cfg.model = gradcheck_model_config();
    cfg.task = gradcheck_task();
    cfg.model.backbone.n_colors = cfg.task.n_colors;
    cfg.steps = 0;
    cfg.eval_size = 4;
    cfg.run_dir = tmp("gp_ckpt_run0");
    std::filesystem::remove_all(cfg.run_dir);
    const TrainResult r = train(cfg);
    EXPECT_EQ(r.steps_run, 0);
    Model init(cfg.model, cfg.seed);
    Model saved = load_checkpoint(cfg.run_dir + "/best.ckpt");
    auto a = tensor_slots(init.params());
    auto b = tensor_slots(saved.params());
    for (size_t k = 0; k < a.size(); ++k)
        for (Eigen::Index i = 0; i < a[k].size(); ++i)
            ASSERT_EQ(double(float(a[k].data[i])), b[k].data[i]) << a[k].name;
    std::filesystem::remove_all(cfg.run_dir);
}

TEST(Checkpoint, AblationRemovesDoneKeyFromManifest) {
    ModelConfig on = gradcheck_model_config(), off = on;
    off.no_more_points = false;
    const std::string pa = tmp("gp_ckpt_on.ckpt"), pb = tmp("gp_ckpt_off.ckpt");
    save_checkpoint(pa, Model(on, 1));
    save_checkpoint(pb, Model(off, 1));
    const auto a = read_checkpoint_info(pa), b = read_checkpoint_info(pb);
    EXPECT_TRUE(has_tensor(a, "pointing.done_key"));
    EXPECT_FALSE(has_tensor(b, "pointing.done_key"));
    EXPECT_EQ(a.tensors.size(), b.tensors.size() + 1);
    ModelConfig text = on;
    text.head = HeadKind::text;
    save_checkpoint(pb, Model(text, 1));
    for (const auto& t : read_checkpoint_info(pb).tensors)
        EXPECT_EQ(t.name.rfind("pointing.", 0), std::string::npos);
    std::filesystem::remove(pa);
    std::filesystem::remove(pb);
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const std::string path = tmp("gp_ckpt_bad.ckpt");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT";
    }
    EXPECT_THROW(load_checkpoint(path), ParseError);
    EXPECT_THROW(load_checkpoint(tmp("gp_missing.ckpt")), IoError);
    std::filesystem::remove(path);
}
