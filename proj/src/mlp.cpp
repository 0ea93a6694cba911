#include "buckrl/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace buckrl {

MlpQNet::MlpQNet(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
    if (dims_.size() < 2)
        throw std::invalid_argument("MlpQNet: need at least input and output dims");
    for (int d : dims_)
        if (d < 1) throw std::invalid_argument("MlpQNet: layer dims must be >= 1");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        w_.emplace_back(Mat::Zero(dims_[l + 1], dims_[l]));
        b_.emplace_back(Vec::Zero(dims_[l + 1]));
    }
}

void MlpQNet::init_uniform(Rng& rng) {
    for (std::size_t l = 0; l < w_.size(); ++l) {
        const double bound = std::sqrt(6.0 / (dims_[l] + dims_[l + 1]));
        for (Eigen::Index i = 0; i < w_[l].rows(); ++i)
            for (Eigen::Index j = 0; j < w_[l].cols(); ++j)
                w_[l](i, j) = rng.uniform(-bound, bound);
        b_[l].setZero();
    }
}

Vec MlpQNet::forward(const Vec& x) const {
    Vec a = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        Vec z = w_[l] * a + b_[l];
        if (l + 1 < w_.size()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a;
}

Mat MlpQNet::forward_batch(const Mat& x) const {
    Mat a = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        Mat z = a * w_[l].transpose();
        z.rowwise() += b_[l].transpose();
        if (l + 1 < w_.size()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a;
}

int MlpQNet::argmax_action(const Vec& x) const {
    const Vec q = forward(x);
    int best = 0;
    for (int i = 1; i < q.size(); ++i)
        if (q[i] > q[best]) best = i;  // strict: ties keep the lowest index
    return best;
}

bool MlpQNet::all_finite() const {
    for (const auto& m : w_)
        if (!m.allFinite()) return false;
    for (const auto& v : b_)
        if (!v.allFinite()) return false;
    return true;
}

bool MlpQNet::same_shape(const MlpQNet& other) const {
    return dims_ == other.dims_;
}

MlpGradients MlpGradients::zeros_like(const MlpQNet& net) {
    MlpGradients g;
    for (const auto& m : net.weights()) g.dw.emplace_back(Mat::Zero(m.rows(), m.cols()));
    for (const auto& v : net.biases()) g.db.emplace_back(Vec::Zero(v.size()));
    return g;
}

const Mat& forward_cached(const MlpQNet& net, const Mat& x, MlpWorkspace& ws) {
    const auto n_layers = static_cast<std::size_t>(net.n_weight_layers());
    ws.pre.resize(n_layers);
    ws.post.resize(n_layers);
    const Mat* a = &x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        ws.pre[l].noalias() = (*a) * net.weights()[l].transpose();
        ws.pre[l].rowwise() += net.biases()[l].transpose();
        if (l + 1 < n_layers) {
            ws.post[l] = ws.pre[l].cwiseMax(0.0);
            a = &ws.post[l];
        } else {
            ws.post[l] = ws.pre[l];
        }
    }
    return ws.post.back();
}

void backward(const MlpQNet& net, const Mat& x, const MlpWorkspace& ws,
              const Mat& dout, MlpGradients& grads) {
    const auto n_layers = static_cast<std::size_t>(net.n_weight_layers());
    if (grads.dw.size() != n_layers) grads = MlpGradients::zeros_like(net);

    Mat delta = dout;
    for (std::size_t l = n_layers; l-- > 0;) {
        const Mat& input = l == 0 ? x : ws.post[l - 1];
        grads.dw[l].noalias() = delta.transpose() * input;
        grads.db[l] = delta.colwise().sum();
        if (l > 0) {
            Mat dprev = delta * net.weights()[l];
            // rectifier gate: pass gradient only where pre-activation > 0
            delta = (ws.pre[l - 1].array() > 0.0).cast<double>() * dprev.array();
        }
    }
}

AdamOptimizer::AdamOptimizer(const MlpQNet& net, double lr)
    : lr_(lr), m_(MlpGradients::zeros_like(net)), v_(MlpGradients::zeros_like(net)) {}

void AdamOptimizer::step(MlpQNet& net, const MlpGradients& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t l = 0; l < m_.dw.size(); ++l) {
        m_.dw[l] = beta1_ * m_.dw[l] + (1.0 - beta1_) * grads.dw[l];
        v_.dw[l] = beta2_ * v_.dw[l].array() +
                   (1.0 - beta2_) * grads.dw[l].array().square();
        net.weights()[l].array() -=
            lr_ * (m_.dw[l].array() / bc1) /
            ((v_.dw[l].array() / bc2).sqrt() + eps_);

        m_.db[l] = beta1_ * m_.db[l] + (1.0 - beta1_) * grads.db[l];
        v_.db[l] = beta2_ * v_.db[l].array() +
                   (1.0 - beta2_) * grads.db[l].array().square();
        net.biases()[l].array() -=
            lr_ * (m_.db[l].array() / bc1) /
            ((v_.db[l].array() / bc2).sqrt() + eps_);
    }
}

void sgd_step(MlpQNet& net, const MlpGradients& grads, double lr) {
    for (std::size_t l = 0; l < grads.dw.size(); ++l) {
        net.weights()[l] -= lr * grads.dw[l];
        net.biases()[l] -= lr * grads.db[l];
    }
}

}  // namespace buckrl
