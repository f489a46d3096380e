#include "groundpoint/nn.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "groundpoint/errors.hpp"

namespace gp {

Mat layer_norm(const Mat& x, const LayerNormParams& p, LayerNormCache* cache) {
    if (p.gain.size() != x.rows() || p.bias.size() != x.rows())
        throw InvalidArgument("layer_norm: parameter size does not match input rows");
    const Eigen::Index n = x.rows();
    Mat xhat(n, x.cols());
    Vec inv_std(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double mean = x.col(c).mean();
        const double var = (x.col(c).array() - mean).square().sum() / static_cast<double>(n);
        inv_std(c) = 1.0 / std::sqrt(var + kLayerNormEps);
        xhat.col(c) = (x.col(c).array() - mean) * inv_std(c);
    }
    Mat y = (xhat.array().colwise() * p.gain.array()).colwise() + p.bias.array();
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Vec layer_norm(const Vec& x, const LayerNormParams& p) {
    Mat m = x;
    return layer_norm(m, p).col(0);
}

Mat layer_norm_backward(const Mat& dy, const LayerNormCache& cache, const LayerNormParams& p,
                        LayerNormParams& grad) {
    const Eigen::Index n = dy.rows();
    grad.gain += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
    grad.bias += dy.rowwise().sum();
    Mat dx(n, dy.cols());
    for (Eigen::Index c = 0; c < dy.cols(); ++c) {
        const Vec dxhat = dy.col(c).cwiseProduct(p.gain);
        const double mean_d = dxhat.mean();
        const double mean_dx = dxhat.dot(cache.xhat.col(c)) / static_cast<double>(n);
        dx.col(c) = cache.inv_std(c) * (dxhat.array() - mean_d - cache.xhat.col(c).array() * mean_dx);
    }
    return dx;
}

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
} // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_derivative(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void rotary_rotate_inplace(Eigen::Ref<Vec> v, double position, double base, bool inverse) {
    const Eigen::Index dim = v.size();
    if (dim % 2 != 0)
        throw InvalidArgument("rotary_rotate: dimension must be even");
    if (position == 0.0)
        return;
    const double sign = inverse ? -1.0 : 1.0;
    for (Eigen::Index j = 0; j < dim / 2; ++j) {
        const double freq = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(dim));
        const double angle = sign * position * freq;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double a = v(2 * j);
        const double b = v(2 * j + 1);
        v(2 * j) = a * c - b * s;
        v(2 * j + 1) = a * s + b * c;
    }
}

Vec rotary_rotate(const Vec& v, double position, double base) {
    Vec out = v;
    rotary_rotate_inplace(out, position, base);
    return out;
}

RotaryTable::RotaryTable(Eigen::Index dim, int max_position, double base)
    : dim_(dim), cos_(dim / 2, max_position), sin_(dim / 2, max_position) {
    if (dim % 2 != 0)
        throw InvalidArgument("RotaryTable: dimension must be even");
    for (int pos = 0; pos < max_position; ++pos) {
        for (Eigen::Index j = 0; j < dim / 2; ++j) {
            const double freq = std::pow(base, -2.0 * static_cast<double>(j) / static_cast<double>(dim));
            const double angle = pos * freq;
            cos_(j, pos) = std::cos(angle);
            sin_(j, pos) = std::sin(angle);
        }
    }
}

void RotaryTable::apply(Eigen::Ref<Vec> v, int position, bool inverse) const {
    if (v.size() != dim_)
        throw InvalidArgument("RotaryTable: vector size mismatch");
    if (position < 0 || position >= max_position())
        throw InvalidArgument("RotaryTable: position out of table range");
    if (position == 0)
        return;
    for (Eigen::Index j = 0; j < dim_ / 2; ++j) {
        const double c = cos_(j, position);
        const double s = inverse ? -sin_(j, position) : sin_(j, position);
        const double a = v(2 * j);
        const double b = v(2 * j + 1);
        v(2 * j) = a * c - b * s;
        v(2 * j + 1) = a * s + b * c;
    }
}

double masked_logsumexp(const Vec& logits, const std::vector<bool>& mask) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        if (mask[static_cast<size_t>(i)])
            mx = std::max(mx, logits(i));
    if (!std::isfinite(mx))
        return mx;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        if (mask[static_cast<size_t>(i)])
            sum += std::exp(logits(i) - mx);
    return mx + std::log(sum);
}

} // namespace gp
