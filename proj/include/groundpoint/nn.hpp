#pragma once

#include <vector>

#include <Eigen/Dense>

namespace gp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kDefaultRopeBase = 10000.0;

struct LayerNormParams {
    Vec gain;
    Vec bias;

    static LayerNormParams identity(Eigen::Index dim) { return {Vec::Ones(dim), Vec::Zero(dim)}; }
};

/// Per-column normalization state kept for the backward pass.
struct LayerNormCache {
    Mat xhat;
    Vec inv_std;
};

/// Column-wise layer normalization with learned gain and bias.
Mat layer_norm(const Mat& x, const LayerNormParams& p, LayerNormCache* cache = nullptr);
Vec layer_norm(const Vec& x, const LayerNormParams& p);

/// Accumulates gain/bias gradients into `grad` and returns the input gradient.
Mat layer_norm_backward(const Mat& dy, const LayerNormCache& cache, const LayerNormParams& p,
                        LayerNormParams& grad);

double gelu(double x);
double gelu_derivative(double x);

/// Pairwise rotation of dimensions (2j, 2j+1) by position * base^(-2j/dim).
/// `inverse` applies the transpose (rotation by -position).
void rotary_rotate_inplace(Eigen::Ref<Vec> v, double position, double base = kDefaultRopeBase,
                           bool inverse = false);
Vec rotary_rotate(const Vec& v, double position, double base = kDefaultRopeBase);

/// Precomputed cos/sin table; apply() matches rotary_rotate_inplace bit for bit.
class RotaryTable {
public:
    RotaryTable() = default;
    RotaryTable(Eigen::Index dim, int max_position, double base = kDefaultRopeBase);

    void apply(Eigen::Ref<Vec> v, int position, bool inverse = false) const;
    Eigen::Index dim() const { return dim_; }
    int max_position() const { return static_cast<int>(cos_.cols()); }

private:
    Eigen::Index dim_ = 0;
    Mat cos_; // (dim/2) x positions
    Mat sin_;
};

/// log(sum(exp(x))) over entries where mask is true.
double masked_logsumexp(const Vec& logits, const std::vector<bool>& mask);

} // namespace gp
