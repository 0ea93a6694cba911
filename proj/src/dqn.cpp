#include "buckrl/dqn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace buckrl {

using ordered_json = nlohmann::ordered_json;

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0)
        throw std::invalid_argument("ReplayMemory: capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayMemory::push(const Transition& t) {
    if (data_.size() < capacity_) {
        data_.push_back(t);
    } else {
        data_[head_] = t;  // overwrite the oldest
        head_ = (head_ + 1) % capacity_;
    }
}

const Transition& ReplayMemory::at(std::size_t logical) const {
    if (logical >= data_.size())
        throw std::out_of_range("ReplayMemory::at: index past size");
    if (data_.size() < capacity_) return data_[logical];
    return data_[(head_ + logical) % capacity_];
}

const Transition& ReplayMemory::sample_one(Rng& rng) const {
    if (data_.empty()) throw EmptyMemory("sampling from empty replay memory");
    return data_[rng.index(data_.size())];
}

void ReplayMemory::sample(std::size_t n, Rng& rng,
                          std::vector<const Transition*>& out) const {
    if (data_.empty()) throw EmptyMemory("sampling from empty replay memory");
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = &data_[rng.index(data_.size())];
}

void DqnHyper::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("dqn.alpha: must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw ConfigError("dqn.gamma: must be in [0, 1]");
    if (batch_size < 1) throw ConfigError("dqn.batch_size: must be >= 1");
    if (!(epsilon > 0.0 && epsilon <= 1.0))
        throw ConfigError("dqn.epsilon: must be in (0, 1]");
    if (target_sync_period < 1)
        throw ConfigError("dqn.target_sync_period: must be >= 1");
    if (replay_capacity < 1)
        throw ConfigError("dqn.replay_capacity: must be >= 1");
    if (optimizer != "adam" && optimizer != "sgd")
        throw ConfigError("dqn.optimizer: must be \"adam\" or \"sgd\"");
}

Vec td_target(std::span<const Transition* const> batch,
              const MlpQNet& target_net, double gamma) {
    if (batch.empty()) throw std::invalid_argument("td_target: empty batch");
    Vec y(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const Transition& tr = *batch[j];
        if (tr.terminal) {
            y[j] = tr.reward;
        } else {
            const Vec q = target_net.forward(tr.s_next);
            y[j] = tr.reward + gamma * q.maxCoeff();
        }
    }
    return y;
}

int select_action(const MlpQNet& net, const Vec& features, double epsilon,
                  Rng& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        throw std::invalid_argument("select_action: epsilon outside [0,1]");
    if (epsilon > 0.0 && rng.uniform() < epsilon)
        return static_cast<int>(rng.index(static_cast<std::size_t>(net.output_dim())));
    return net.argmax_action(features);
}

void sync_target(const MlpQNet& net, MlpQNet& target_net) {
    target_net = net;
}

Agent::Agent(MlpQNet net, DqnHyper hyper)
    : net_(std::move(net)),
      target_(net_),
      hyper_(std::move(hyper)),
      memory_(hyper_.replay_capacity),
      adam_(net_, hyper_.alpha) {
    hyper_.validate();
}

int Agent::act(const Vec6& features, double epsilon, Rng& rng) const {
    return select_action(net_, features, epsilon, rng);
}

int Agent::act_greedy(const Vec6& features) const {
    return net_.argmax_action(features);
}

double Agent::train_step(Rng& rng) {
    const auto b = static_cast<std::size_t>(hyper_.batch_size);
    if (memory_.size() < b)
        throw InsufficientReplay(fmt::format(
            "replay holds {} transitions, minibatch needs {}", memory_.size(), b));
    memory_.sample(b, rng, batch_);
    return train_on_batch(batch_);
}

double Agent::train_on_batch(std::span<const Transition* const> batch) {
    const auto b = static_cast<Eigen::Index>(batch.size());
    if (b == 0) throw std::invalid_argument("train_on_batch: empty batch");
    const int in = net_.input_dim();
    const int n_act = net_.output_dim();

    x_.resize(b, in);
    x_next_.resize(b, in);
    for (Eigen::Index j = 0; j < b; ++j) {
        x_.row(j) = batch[j]->s.transpose();
        x_next_.row(j) = batch[j]->s_next.transpose();
    }

    // Targets under the frozen network.
    const Mat& q_next = forward_cached(target_, x_next_, ws_target_);
    Vec y(b);
    for (Eigen::Index j = 0; j < b; ++j) {
        const Transition& tr = *batch[j];
        y[j] = tr.terminal ? tr.reward
                           : tr.reward + hyper_.gamma * q_next.row(j).maxCoeff();
    }

    const Mat& q = forward_cached(net_, x_, ws_);
    dout_.resize(b, n_act);
    dout_.setZero();
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (Eigen::Index j = 0; j < b; ++j) {
        const int a = batch[j]->action;
        const double err = q(j, a) - y[j];
        loss += err * err;
        dout_(j, a) = 2.0 * err * inv_b;  // d(mean squared TD error)/dq
    }
    loss *= inv_b;
    if (!std::isfinite(loss))
        throw NumericalDivergence("non-finite training loss");

    backward(net_, x_, ws_, dout_, grads_);
    if (hyper_.optimizer == "sgd") {
        sgd_step(net_, grads_, hyper_.alpha);
    } else {
        adam_.step(net_, grads_);
    }
    if (!net_.all_finite())
        throw NumericalDivergence("non-finite network parameters after update");

    ++train_steps_;
    if (hyper_.target_sync_period > 0 &&
        train_steps_ % static_cast<std::uint64_t>(hyper_.target_sync_period) == 0)
        sync_target_now();
    return loss;
}

void Agent::sync_target_now() { sync_target(net_, target_); }

// ---------------------------------------------------------------------------
// checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

ordered_json matrix_rows(const Mat& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

ordered_json vector_values(const Vec& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ck) {
    ordered_json doc;
    doc["format_version"] = ck.format_version;
    doc["layer_dims"] = ck.net.layer_dims();
    ordered_json weights = ordered_json::array();
    for (const auto& m : ck.net.weights()) weights.push_back(matrix_rows(m));
    doc["weights"] = std::move(weights);
    ordered_json biases = ordered_json::array();
    for (const auto& v : ck.net.biases()) biases.push_back(vector_values(v));
    doc["biases"] = std::move(biases);
    ordered_json hyper;
    hyper["alpha"] = ck.hyper.alpha;
    hyper["gamma"] = ck.hyper.gamma;
    hyper["batch_size"] = ck.hyper.batch_size;
    hyper["epsilon"] = ck.hyper.epsilon;
    hyper["target_sync_period"] = ck.hyper.target_sync_period;
    hyper["replay_capacity"] = ck.hyper.replay_capacity;
    hyper["optimizer"] = ck.hyper.optimizer;
    hyper["seed"] = ck.hyper.seed;
    doc["hyper"] = std::move(hyper);
    doc["seed"] = ck.seed;
    doc["training_steps"] = ck.training_steps;
    doc["config_hash"] = ck.config_hash;
    return doc.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    const auto doc = ordered_json::parse(text);
    Checkpoint ck;
    ck.format_version = doc.at("format_version").get<int>();
    if (ck.format_version != 1)
        throw ConfigError(fmt::format("checkpoint: unsupported format_version {}",
                                      ck.format_version));
    const auto dims = doc.at("layer_dims").get<std::vector<int>>();
    ck.net = MlpQNet(dims);
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    if (weights.size() != ck.net.weights().size() ||
        biases.size() != ck.net.biases().size())
        throw ConfigError("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Mat& m = ck.net.weights()[l];
        const auto& rows = weights[l];
        if (static_cast<Eigen::Index>(rows.size()) != m.rows())
            throw ConfigError(fmt::format("checkpoint: weights[{}] row mismatch", l));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const auto& row = rows[static_cast<std::size_t>(i)];
            if (static_cast<Eigen::Index>(row.size()) != m.cols())
                throw ConfigError(fmt::format("checkpoint: weights[{}] col mismatch", l));
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
        }
        Vec& v = ck.net.biases()[l];
        const auto& arr = biases[l];
        if (static_cast<Eigen::Index>(arr.size()) != v.size())
            throw ConfigError(fmt::format("checkpoint: biases[{}] size mismatch", l));
        for (Eigen::Index i = 0; i < v.size(); ++i)
            v[i] = arr[static_cast<std::size_t>(i)].get<double>();
    }
    const auto& hyper = doc.at("hyper");
    ck.hyper.alpha = hyper.at("alpha").get<double>();
    ck.hyper.gamma = hyper.at("gamma").get<double>();
    ck.hyper.batch_size = hyper.at("batch_size").get<int>();
    ck.hyper.epsilon = hyper.at("epsilon").get<double>();
    ck.hyper.target_sync_period = hyper.at("target_sync_period").get<int>();
    ck.hyper.replay_capacity = hyper.at("replay_capacity").get<std::size_t>();
    ck.hyper.optimizer = hyper.at("optimizer").get<std::string>();
    ck.hyper.seed = hyper.at("seed").get<std::uint64_t>();
    ck.seed = doc.at("seed").get<std::uint64_t>();
    ck.training_steps = doc.at("training_steps").get<std::uint64_t>();
    ck.config_hash = doc.value("config_hash", std::string{});
    ck.hyper.validate();
    if (!ck.net.all_finite())
        throw ConfigError("checkpoint: non-finite parameters");
    return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << checkpoint_to_json(ck);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return checkpoint_from_json(text);
}

}  // namespace buckrl
