#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "buckrl/errors.hpp"
#include "buckrl/mlp.hpp"
#include "buckrl/rng.hpp"

namespace buckrl {

using Vec6 = Eigen::Matrix<double, 6, 1>;

struct Transition {
    Vec6 s;
    int action = 0;
    double reward = 0.0;
    Vec6 s_next;
    bool terminal = false;
};

/// Fixed-capacity ring buffer with FIFO eviction and uniform sampling
/// with replacement.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity);

    void push(const Transition& t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t logical) const;  // 0 = oldest
    const Transition& sample_one(Rng& rng) const;     // throws EmptyMemory
    void sample(std::size_t n, Rng& rng, std::vector<const Transition*>& out) const;

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // next write position once full
    std::vector<Transition> data_;
};

struct DqnHyper {
    double alpha = 1e-3;        // learning rate
    double gamma = 0.9;         // discount
    int batch_size = 256;
    double epsilon = 0.1;       // exploration rate
    int target_sync_period = 200;  // training steps between target syncs
    std::uint64_t seed = 1;
    std::size_t replay_capacity = 100000;
    std::string optimizer = "adam";  // "adam" | "sgd"

    void validate() const;  // throws ConfigError, prefixed "dqn."
};

/// Frozen-target TD targets: y_j = r_j for terminal transitions, else
/// r_j + gamma * max_a Q(s', a) under the target network.
Vec td_target(std::span<const Transition* const> batch, const MlpQNet& target_net,
              double gamma);

/// Epsilon-greedy: argmax with probability 1-epsilon (lowest index on
/// ties), otherwise uniform over all actions.
int select_action(const MlpQNet& net, const Vec& features, double epsilon,
                  Rng& rng);

/// Copies the online parameters into the target network, bit for bit.
void sync_target(const MlpQNet& net, MlpQNet& target_net);

/// Owns the online/target networks, replay memory, optimizer, and the
/// training step counter. One instance per training run.
class Agent {
public:
    Agent(MlpQNet net, DqnHyper hyper);

    int act(const Vec6& features, double epsilon, Rng& rng) const;
    int act_greedy(const Vec6& features) const;

    void remember(const Transition& t) { memory_.push(t); }

    /// Samples one minibatch and applies one gradient step on the online
    /// network; the target network is untouched except at sync points.
    /// Returns the pre-step loss. Throws InsufficientReplay when the
    /// memory holds fewer than batch_size transitions.
    double train_step(Rng& rng);

    /// The update itself, on a caller-supplied batch.
    double train_on_batch(std::span<const Transition* const> batch);

    void sync_target_now();

    const MlpQNet& net() const { return net_; }
    MlpQNet& net() { return net_; }
    const MlpQNet& target() const { return target_; }
    const ReplayMemory& memory() const { return memory_; }
    ReplayMemory& memory() { return memory_; }
    const DqnHyper& hyper() const { return hyper_; }
    std::uint64_t train_steps() const { return train_steps_; }

private:
    MlpQNet net_;
    MlpQNet target_;
    DqnHyper hyper_;
    ReplayMemory memory_;
    AdamOptimizer adam_;
    std::uint64_t train_steps_ = 0;

    // reused batch buffers
    std::vector<const Transition*> batch_;
    Mat x_, x_next_, dout_;
    MlpWorkspace ws_, ws_target_;
    MlpGradients grads_;
};

/// Versioned JSON checkpoint with a fixed key order so identical runs
/// serialize to identical bytes.
struct Checkpoint {
    int format_version = 1;
    MlpQNet net;
    DqnHyper hyper;
    std::uint64_t seed = 0;
    std::uint64_t training_steps = 0;
    std::string config_hash;
};

std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace buckrl
