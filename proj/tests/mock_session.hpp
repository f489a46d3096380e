#pragma once

#include <random>

#include "groundpoint/decoder.hpp"
#include "groundpoint/vocab.hpp"

namespace gp::testing {

/// Session whose scores come from a seeded generator; optionally biased toward a class.
class RandomSession : public PointingSession {
public:
    RandomSession(const GridSpec& grid, std::uint64_t seed, int context = 100000)
        : grid_(grid), rng_(seed), remaining_(context) {}

    int tokens() const override { return grid_.total_tokens(); }
    int subpatches() const override { return grid_.subpatches_per_token(); }
    int remaining_context() const override { return remaining_; }
    Vec text_logits() override { return noise(Vocab(4).size()); }
    Vec patch_scores(std::optional<int>) override {
        Vec s = noise(tokens() + 1);
        if (done_bias != 0.0)
            s(tokens()) += done_bias;
        return s;
    }
    Vec subpatch_scores(int) override { return noise(subpatches()); }
    Vec location_logits() override { return noise(9); }
    void feed_text(int) override { --remaining_; }
    void feed_patch(std::optional<int>) override { --remaining_; }
    void feed_subpatch(int, int) override { --remaining_; }
    void feed_location(int) override { --remaining_; }

    double done_bias = 0.0;

private:
    Vec noise(Eigen::Index n) {
        std::normal_distribution<double> d(0.0, 1.0);
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i)
            v(i) = d(rng_);
        return v;
    }

    GridSpec grid_;
    std::mt19937_64 rng_;
    int remaining_;
};

} // namespace gp::testing
