#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "buckrl/rng.hpp"

namespace buckrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Fully connected rectifier network with an identity output layer.
/// Weights are stored as out x in matrices; the shipped controller shape
/// is 6-64-64-n_actions.
class MlpQNet {
public:
    MlpQNet() = default;
    explicit MlpQNet(std::vector<int> layer_dims);

    /// Layer-wise uniform init in +-sqrt(6/(fan_in+fan_out)).
    void init_uniform(Rng& rng);

    int input_dim() const { return dims_.empty() ? 0 : dims_.front(); }
    int output_dim() const { return dims_.empty() ? 0 : dims_.back(); }
    const std::vector<int>& layer_dims() const { return dims_; }
    int n_weight_layers() const { return static_cast<int>(w_.size()); }

    Vec forward(const Vec& x) const;
    /// Batched forward; rows are samples.
    Mat forward_batch(const Mat& x) const;

    /// Greedy action with deterministic lowest-index tie breaking.
    int argmax_action(const Vec& x) const;

    bool all_finite() const;
    bool same_shape(const MlpQNet& other) const;

    std::vector<Mat>& weights() { return w_; }
    std::vector<Vec>& biases() { return b_; }
    const std::vector<Mat>& weights() const { return w_; }
    const std::vector<Vec>& biases() const { return b_; }

private:
    std::vector<int> dims_;
    std::vector<Mat> w_;
    std::vector<Vec> b_;
};

/// Gradients with the same shapes as the network parameters.
struct MlpGradients {
    std::vector<Mat> dw;
    std::vector<Vec> db;
    static MlpGradients zeros_like(const MlpQNet& net);
};

/// Scratch space for fused forward/backward passes, reused across steps.
struct MlpWorkspace {
    std::vector<Mat> pre;   // pre-activations per layer, rows = samples
    std::vector<Mat> post;  // rectified activations
};

/// Forward pass keeping activations for a subsequent backward pass.
/// Returns the output matrix (rows = samples).
const Mat& forward_cached(const MlpQNet& net, const Mat& x, MlpWorkspace& ws);

/// Backward pass for d(output) given in `dout` (rows = samples); fills
/// `grads`. `x` and `ws` must come from the matching forward_cached call.
void backward(const MlpQNet& net, const Mat& x, const MlpWorkspace& ws,
              const Mat& dout, MlpGradients& grads);

/// Adam with bias correction; beta = (0.9, 0.999), eps = 1e-8. Plain SGD
/// is selected by the hyperparameters, not here.
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(const MlpQNet& net, double lr);
    void step(MlpQNet& net, const MlpGradients& grads);
    std::int64_t steps_taken() const { return t_; }

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::int64_t t_ = 0;
    MlpGradients m_, v_;
};

/// One plain gradient-descent step: theta -= lr * grad.
void sgd_step(MlpQNet& net, const MlpGradients& grads, double lr);

}  // namespace buckrl
