#pragma once

#include <functional>
#include <vector>

#include "buckrl/artifacts.hpp"
#include "buckrl/config.hpp"
#include "buckrl/dqn.hpp"

namespace buckrl {

struct TrainResult {
    Checkpoint best;  // checkpoint with the highest greedy-eval return
    double best_eval_return = 0.0;
    int best_episode = 0;
    std::vector<CurvePoint> curve;
    std::uint64_t total_train_steps = 0;
};

using ProgressFn = std::function<void(const CurvePoint&)>;

/// Trains on the ideal plant: episodes start at the base-load equilibrium
/// and contain one randomized load step. Every eval_period episodes the
/// greedy policy is scored on the fixed ideal scenario suite and the best
/// checkpoint is retained. Fully deterministic in (config, seed).
TrainResult train_policy(const RunConfig& cfg, const ProgressFn& progress = {});

}  // namespace buckrl
