#include "buckrl/scenario.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace buckrl {

void EvalSettings::validate() const {
    if (!(duration_s > 0.0)) throw ConfigError("eval.duration_s: must be > 0");
    if (!(t_step_up > 0.0 && t_step_up < t_step_down && t_step_down < duration_s))
        throw ConfigError(
            "eval.t_step_up: need 0 < t_step_up < t_step_down < duration_s");
    if (step_powers.empty())
        throw ConfigError("eval.step_powers: must be nonempty");
    if (!(base_power_w >= 0.0))
        throw ConfigError("eval.base_power_w: must be >= 0");
    if (!(settle_band_v > 0.0)) throw ConfigError("eval.settle_band_v: must be > 0");
    if (!(ss_window_frac > 0.0 && ss_window_frac <= 1.0))
        throw ConfigError("eval.ss_window_frac: must be in (0, 1]");
    if (n_sub < 1) throw ConfigError("eval.n_sub: must be >= 1");
}

std::vector<Scenario> make_scenario_suite(const EvalSettings& es,
                                          Scenario::PlantKind plant,
                                          bool drm_on, std::uint64_t seed) {
    es.validate();
    std::vector<Scenario> suite;
    std::uint64_t idx = 0;
    for (double p : es.step_powers) {
        Scenario sc;
        sc.name = fmt::format("step{:g}", p);
        sc.plant = plant;
        sc.drm_on = drm_on;
        sc.load.schedule = {{0.0, es.base_power_w},
                            {es.t_step_up, p},
                            {es.t_step_down, es.base_power_w}};
        sc.duration_s = es.duration_s;
        sc.seed = seed + idx++;
        suite.push_back(std::move(sc));
    }
    return suite;
}

ScenarioResult run_scenario(const MlpQNet& net, const PlantParams& plant,
                            const SurrogateParams& surrogate,
                            const ActionTable& table, const RewardConfig& rcfg,
                            const EvalSettings& es, const Scenario& sc,
                            const DrmCoefficients* drm) {
    es.validate();
    if (sc.drm_on && drm == nullptr)
        throw std::invalid_argument(
            fmt::format("scenario {}: duty map requested but none supplied", sc.name));
    if (!sc.drm_on && drm != nullptr)
        throw std::invalid_argument(
            fmt::format("scenario {}: duty map supplied but not requested", sc.name));

    const double dt = plant.dt_ctrl();
    EpisodeConfig ep;
    ep.horizon = static_cast<int>(std::lround(sc.duration_s / dt));
    ep.load = sc.load;
    // Runs start regulated at the reference on the base load; the nominal
    // duty is the ideal conversion ratio.
    ep.reset_state =
        find_equilibrium(plant.v_ref / plant.v_in, es.base_power_w, plant);

    std::unique_ptr<PlantEnv> env;
    if (sc.plant == Scenario::PlantKind::ideal) {
        env = std::make_unique<IdealEnv>(plant, es.n_sub);
    } else {
        env = std::make_unique<SurrogateEnv>(surrogate, sc.seed, es.n_sub);
    }

    std::optional<DrmRuntime> runtime;
    if (drm) runtime.emplace(*drm);

    ScenarioResult out;
    out.scenario = sc;
    EpisodeResult run = run_policy_episode(net, *env, ep, rcfg, table,
                                           runtime ? &*runtime : nullptr, true);
    out.trace = std::move(run.trace);
    out.collapsed = run.aborted;
    out.collapse_t = run.abort_t;
    out.segments = compute_metrics(out.trace, sc.load, plant.v_ref,
                                   sc.duration_s, es.settle_band_v,
                                   es.ss_window_frac);
    return out;
}

}  // namespace buckrl
