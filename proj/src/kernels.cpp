#include "groundpoint/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "groundpoint/errors.hpp"

namespace gp::kernels {

namespace {

double score_one(const Mat& keys, Eigen::Index i, const Vec& q, const RotaryTable* table, double scale) {
    if (!table)
        return keys.col(i).dot(q) * scale;
    Vec k = keys.col(i);
    table->apply(k, static_cast<int>(i));
    return k.dot(q) * scale;
}

struct PixelError {
    double euclidean;
    double inf;
    bool frame_ok;
};

PixelError pixel_error(const GridSpec& grid, int frame, int x, int y) {
    PixelPoint p{static_cast<double>(x), static_cast<double>(y), frame, std::nullopt};
    const PixelPoint back = decode_triple(grid, encode_point(grid, p));
    const double dx = std::abs(back.x - p.x);
    const double dy = std::abs(back.y - p.y);
    return {std::hypot(dx, dy), std::max(dx, dy), back.frame == frame};
}

void check_sum_shapes(std::span<const std::span<const double>> inputs, std::span<double> out) {
    for (const auto& in : inputs)
        if (in.size() != out.size())
            throw InvalidArgument("ordered_sum: buffer size mismatch");
}

} // namespace

namespace serial {

Vec rotated_scores(const Mat& keys, const Vec& query_rotated, const RotaryTable* table, double scale) {
    Vec s(keys.cols());
    for (Eigen::Index i = 0; i < keys.cols(); ++i)
        s(i) = score_one(keys, i, query_rotated, table, scale);
    return s;
}

CodecScanResult codec_scan(const GridSpec& grid) {
    CodecScanResult r;
    for (int f = 0; f < grid.n_frames(); ++f)
        for (int y = 0; y < grid.image_height(); ++y)
            for (int x = 0; x < grid.image_width(); ++x) {
                const PixelError e = pixel_error(grid, f, x, y);
                r.max_euclidean_error = std::max(r.max_euclidean_error, e.euclidean);
                r.max_inf_error = std::max(r.max_inf_error, e.inf);
                r.frame_mismatches += e.frame_ok ? 0 : 1;
                ++r.pixels;
            }
    return r;
}

void ordered_sum(std::span<const std::span<const double>> inputs, std::span<double> out) {
    check_sum_shapes(inputs, out);
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& in : inputs)
        for (size_t j = 0; j < out.size(); ++j)
            out[j] += in[j];
}

} // namespace serial

namespace omp {

Vec rotated_scores(const Mat& keys, const Vec& query_rotated, const RotaryTable* table, double scale) {
    Vec s(keys.cols());
    const Eigen::Index n = keys.cols();
#pragma omp parallel for schedule(static) if (n > 256)
    for (Eigen::Index i = 0; i < n; ++i)
        s(i) = score_one(keys, i, query_rotated, table, scale);
    return s;
}

CodecScanResult codec_scan(const GridSpec& grid) {
    const int rows = grid.n_frames() * grid.image_height();
    double max_e = 0.0, max_i = 0.0;
    long long pixels = 0, mismatches = 0;
#pragma omp parallel for schedule(static) reduction(max : max_e, max_i) reduction(+ : pixels, mismatches)
    for (int row = 0; row < rows; ++row) {
        const int f = row / grid.image_height();
        const int y = row % grid.image_height();
        for (int x = 0; x < grid.image_width(); ++x) {
            const PixelError e = pixel_error(grid, f, x, y);
            max_e = std::max(max_e, e.euclidean);
            max_i = std::max(max_i, e.inf);
            mismatches += e.frame_ok ? 0 : 1;
            ++pixels;
        }
    }
    return {max_e, max_i, pixels, mismatches};
}

void ordered_sum(std::span<const std::span<const double>> inputs, std::span<double> out) {
    check_sum_shapes(inputs, out);
    const long long n = static_cast<long long>(out.size());
#pragma omp parallel for schedule(static) if (n > 4096)
    for (long long j = 0; j < n; ++j) {
        double acc = 0.0;
        for (const auto& in : inputs)
            acc += in[static_cast<size_t>(j)];
        out[static_cast<size_t>(j)] = acc;
    }
}

} // namespace omp

Vec rotated_scores(const Mat& keys, const Vec& query_rotated, const RotaryTable* table, double scale, Exec exec) {
    return exec == Exec::parallel ? omp::rotated_scores(keys, query_rotated, table, scale)
                                  : serial::rotated_scores(keys, query_rotated, table, scale);
}

CodecScanResult codec_scan(const GridSpec& grid, Exec exec) {
    return exec == Exec::parallel ? omp::codec_scan(grid) : serial::codec_scan(grid);
}

void ordered_sum(std::span<const std::span<const double>> inputs, std::span<double> out, Exec exec) {
    if (exec == Exec::parallel)
        omp::ordered_sum(inputs, out);
    else
        serial::ordered_sum(inputs, out);
}

} // namespace gp::kernels
