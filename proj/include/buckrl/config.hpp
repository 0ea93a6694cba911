#pragma once

#include <cstdint>
#include <string>

#include "buckrl/control.hpp"
#include "buckrl/dqn.hpp"
#include "buckrl/plant.hpp"
#include "buckrl/scenario.hpp"
#include "buckrl/transfer.hpp"

namespace buckrl {

struct TrainingConfig {
    int episodes = 400;
    int eval_period = 10;  // greedy evaluation cadence, in episodes
    double step_power_min_w = 200.0;
    double step_power_max_w = 1000.0;
    double step_time_min_s = 0.1;
    double step_time_max_s = 0.2;
    double base_power_w = 200.0;

    void validate() const;  // throws ConfigError, prefixed "training."
};

/// Everything one run needs, loadable from a single key-value file with
/// one section per subsystem. Unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "runs";

    PlantParams plant;
    std::string surrogate_preset = "default";  // "default" | "ideal"
    SurrogateParams surrogate;
    DqnHyper dqn;
    ActionTable actions = ActionTable::defaults();
    RewardConfig reward;
    EpisodeConfig episode;  // load/reset_state are filled per run
    TrainingConfig training;
    SweepGrid sweep;  // empty duty_points -> derived from the action table
    EvalSettings eval;

    void validate() const;

    /// Sweep grid with duty_points defaulted to the action-reachable set.
    SweepGrid effective_sweep() const;
};

RunConfig default_config();

/// Parses the TOML-style config text over the defaults. `origin` names the
/// source in error messages.
RunConfig parse_config(const std::string& text, const std::string& origin);
RunConfig load_config(const std::string& path);

/// Canonical serialization; identical configs produce identical bytes.
std::string config_to_toml(const RunConfig& cfg);

/// Hash of the canonical serialization, embedded in every artifact.
std::string config_hash(const RunConfig& cfg);

}  // namespace buckrl
