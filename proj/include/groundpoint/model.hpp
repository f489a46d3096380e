#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "groundpoint/backbone.hpp"
#include "groundpoint/decoder.hpp"
#include "groundpoint/heads.hpp"
#include "groundpoint/targets.hpp"

namespace gp {

enum class HeadKind { grounding, text };

const char* to_string(HeadKind head);
HeadKind head_kind_from_string(const std::string& s);

struct ModelConfig {
    ToyModelConfig backbone;
    int head_dim = 512;     // M
    int subpatch_dim = 512; // M_s
    bool rotary = true;
    bool no_more_points = true;
    bool point_sorting = true;
    HeadKind head = HeadKind::grounding;

    HeadConfig head_config() const;
    TargetOptions target_options() const { return {point_sorting, no_more_points}; }
    DecodeConfig decode_config(int max_points = 256) const;
};

struct ModelParams {
    BackboneParams backbone;
    std::optional<GroundingParams> grounding;
};

enum class ParamGroup { backbone, pointing };

/// Named view of one parameter tensor (column-major storage).
struct TensorSlot {
    std::string name;
    double* data = nullptr;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    ParamGroup group = ParamGroup::backbone;

    Eigen::Index size() const { return rows * cols; }
    Eigen::Map<Mat> map() const { return Eigen::Map<Mat>(data, rows, cols); }
};

/// Every non-empty tensor in a fixed order.
std::vector<TensorSlot> tensor_slots(ModelParams& params);
ModelParams zeros_like(const ModelConfig& cfg);
void add_scaled(ModelParams& acc, ModelParams& g, double scale);

struct Example {
    SyntheticImage image;
    int query_color = 0;
    PointAnnotation annotation;
};

struct ExampleLoss {
    LossBreakdown breakdown;
    std::vector<double> llm_losses;
};

class Model {
public:
    Model(const ModelConfig& cfg, std::uint64_t seed);
    Model(const ModelConfig& cfg, ModelParams params);

    const ModelConfig& config() const { return cfg_; }
    ModelParams& params() { return params_; }
    const ModelParams& params() const { return params_; }
    const Vocab& vocab() const { return vocab_; }
    const Transformer& transformer() const { return transformer_; }

    /// Teacher-forced sequence for the configured head.
    SequencePlan plan(const Example& ex) const;

    /// Loss of one example; when `grad` is given, d total / d params is accumulated into it.
    ExampleLoss loss(const Example& ex, ModelParams* grad = nullptr) const;

    /// Generation session for the grounding head (prompt already consumed).
    std::unique_ptr<PointingSession> session(const SyntheticImage& image, int query_color) const;

    /// Greedy constrained decoding with the grounding head.
    DecodeResult decode(const SyntheticImage& image, int query_color, const DecodeConfig& config) const;

    /// Predicted points for either head.
    std::vector<PixelPoint> predict(const SyntheticImage& image, int query_color, int max_points = 256) const;

private:
    ModelConfig cfg_;
    ModelParams params_;
    Vocab vocab_;
    Transformer transformer_;
    RotaryTable patch_rope_;
};

} // namespace gp
