#pragma once

#include <span>
#include <vector>

#include "groundpoint/geometry.hpp"
#include "groundpoint/nn.hpp"

// Data-parallel inner loops. Each kernel has an OpenMP version and a serial
// reference; both produce bit-identical results (no cross-thread reductions
// of floating-point sums).
namespace gp::kernels {

enum class Exec { serial, parallel };

struct CodecScanResult {
    double max_euclidean_error = 0.0;
    double max_inf_error = 0.0;
    long long pixels = 0;
    long long frame_mismatches = 0;

    bool operator==(const CodecScanResult&) const = default;
};

/// s_i = Rot(keys[:, i], i) . query_rotated * scale. `table` null means no rotation.
Vec rotated_scores(const Mat& keys, const Vec& query_rotated, const RotaryTable* table, double scale, Exec exec);

/// Encode/decode every integer pixel of every frame and report the worst error.
CodecScanResult codec_scan(const GridSpec& grid, Exec exec);

/// out[j] = sum over inputs in order of inputs[k][j].
void ordered_sum(std::span<const std::span<const double>> inputs, std::span<double> out, Exec exec);

namespace serial {
Vec rotated_scores(const Mat& keys, const Vec& query_rotated, const RotaryTable* table, double scale);
CodecScanResult codec_scan(const GridSpec& grid);
void ordered_sum(std::span<const std::span<const double>> inputs, std::span<double> out);
} // namespace serial

namespace omp {
Vec rotated_scores(const Mat& keys, const Vec& query_rotated, const RotaryTable* table, double scale);
CodecScanResult codec_scan(const GridSpec& grid);
void ordered_sum(std::span<const std::span<const double>> inputs, std::span<double> out);
} // namespace omp

} // namespace gp::kernels
