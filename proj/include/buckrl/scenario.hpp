#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "buckrl/control.hpp"
#include "buckrl/metrics.hpp"
#include "buckrl/transfer.hpp"

namespace buckrl {

/// One load-step experiment: which plant, whether the duty map is applied,
/// and the load schedule.
struct Scenario {
    std::string name;
    enum class PlantKind { ideal, surrogate } plant = PlantKind::ideal;
    bool drm_on = false;
    CplProfile load;
    double duration_s = 0.3;
    std::uint64_t seed = 0;
};

struct EvalSettings {
    double duration_s = 0.3;
    double t_step_up = 0.14;    // base -> step power
    double t_step_down = 0.2;   // step power -> base
    std::vector<double> step_powers{500.0, 800.0, 1000.0};
    double base_power_w = 200.0;
    double settle_band_v = 1.0;     // +-1 V, 1% of the 100 V reference
    double ss_window_frac = 0.2;    // trailing fraction of each segment
    int n_sub = 10;

    void validate() const;  // throws ConfigError, prefixed "eval."
};

struct ScenarioResult {
    Scenario scenario;
    std::vector<StepRecord> trace;
    std::vector<SegmentMetrics> segments;
    bool collapsed = false;
    double collapse_t = 0.0;
};

/// Runs the closed loop for one scenario and computes per-segment metrics.
/// A voltage collapse is recorded as a failed scenario with the partial
/// trace kept. `drm` must be provided exactly when the scenario asks for it.
ScenarioResult run_scenario(const MlpQNet& net, const PlantParams& plant,
                            const SurrogateParams& surrogate,
                            const ActionTable& table, const RewardConfig& rcfg,
                            const EvalSettings& es, const Scenario& sc,
                            const DrmCoefficients* drm);

/// The fixed three-step suite (base -> P -> base for each step power) on
/// one plant/mapping combination.
std::vector<Scenario> make_scenario_suite(const EvalSettings& es,
                                          Scenario::PlantKind plant,
                                          bool drm_on, std::uint64_t seed);

}  // namespace buckrl
