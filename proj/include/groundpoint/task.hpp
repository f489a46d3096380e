#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "groundpoint/model.hpp"

namespace gp {

/// Synthetic "point to all cells of color c" task.
struct TaskConfig {
    int width = 56;
    int height = 56;
    int frames = 1;
    int n_colors = 4;
    int min_targets = 0;
    int max_targets = 6;

    GridSpec grid() const;
    int cells() const;
    void validate() const;
};

/// Query color, then a uniform target count, then the image; ground truth is the
/// centers of the query-colored subpatch cells, shuffled, with ids equal to raster rank.
Example gen_example(std::mt19937_64& rng, const TaskConfig& cfg);

/// `n` examples from one seeded stream.
std::vector<Example> make_dataset(const TaskConfig& cfg, std::uint64_t seed, int n);

// Annotation JSON lines: {image: {...}, query, points: [{x, y, frame, id}]}.
std::string example_to_json(const Example& ex);
Example example_from_json(const std::string& line);
void write_examples(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> read_examples(const std::string& path);

} // namespace gp
