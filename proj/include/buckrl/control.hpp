#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "buckrl/dqn.hpp"
#include "buckrl/plant.hpp"

namespace buckrl {

/// The six-signal controller state: bus voltage, its one-period-delayed
/// value, its backward-difference slope, and the same three for the
/// tracking error.
struct Observation {
    double v_o = 0.0;
    double v_o_prev = 0.0;
    double dv_dt = 0.0;
    double err = 0.0;
    double err_prev = 0.0;
    double derr_dt = 0.0;
};

/// Builds the observation from the last two voltage samples. At an episode
/// start pass v_prev == v_now, which zeroes both derivatives.
Observation observe(double v_now, double v_prev, double v_ref, double dt_ctrl);

/// Fixed input scaling applied before the Q-network. Raw signals span five
/// decades (volts vs volts-per-second); these bring every channel to
/// order one.
inline constexpr double kFeatureScale[6] = {1e-2, 1e-2, 1e-5, 1e-1, 1e-1, 1e-5};

Vec6 to_features(const Observation& o);

/// One discrete action: a steady duty level plus a trim magnitude. The
/// applied trim direction comes from the sign of the tracking error.
struct ActionEntry {
    double duty_base;  // held duty when the error is inside the deadband
    double duty_trim;  // correction magnitude applied against the error sign
};

struct ActionTable {
    std::vector<ActionEntry> entries;
    double deadband_v = 0.05;

    int size() const { return static_cast<int>(entries.size()); }
    void validate() const;  // throws ConfigError, prefixed "actions."

    /// Sorted unique set {base, base +- trim}: every duty the policy can
    /// command. The transfer sweep samples exactly these.
    std::vector<double> reachable_duties() const;

    /// Five duty levels bracketing the nominal 0.5, four trim magnitudes
    /// from fine regulation to full-swing slew.
    static ActionTable defaults();
};

struct DecodedDuty {
    double duty;
    bool saturated;
};

/// error inside deadband -> hold base; undervoltage -> base + trim;
/// overvoltage -> base - trim. Result clamped to [0, 1].
DecodedDuty decode_action(int idx, const ActionTable& table, double err_v);

/// Banded reward: a large bonus inside the tight band, a small bonus inside
/// the loose band, and an error-proportional penalty everywhere.
struct RewardConfig {
    double tight_bonus = 10.0;   // paid when |e| < tight_band_v
    double loose_bonus = 1.0;    // paid when tight_band_v <= |e| <= loose_band_v
    double error_weight = 10.0;  // penalty per volt of |e|, always applied
    double tight_band_v = 0.1;
    double loose_band_v = 1.0;

    void validate() const;  // throws ConfigError, prefixed "reward."
};

double reward(double err_v, const RewardConfig& cfg);

// ---------------------------------------------------------------------------
// closed loop
// ---------------------------------------------------------------------------

/// What the controller runs against: the ideal training model or the
/// hardware surrogate. Measurement and truth coincide on the ideal plant.
class PlantEnv {
public:
    virtual ~PlantEnv() = default;
    virtual void reset(const PlantState& s, const CplProfile& profile) = 0;
    virtual void apply(double duty, const CplProfile& profile) = 0;
    virtual double v_measured() const = 0;
    virtual const PlantState& true_state() const = 0;
    virtual double output_current(const CplProfile& profile) const = 0;
    virtual double scheduled_power(const CplProfile& profile) const = 0;
    virtual double dt_ctrl() const = 0;
    virtual double v_ref() const = 0;
};

class IdealEnv final : public PlantEnv {
public:
    explicit IdealEnv(PlantParams params, int n_sub = 10)
        : params_(params), n_sub_(n_sub) {}
    void reset(const PlantState& s, const CplProfile& profile) override;
    void apply(double duty, const CplProfile& profile) override;
    double v_measured() const override { return state_.v_o; }
    const PlantState& true_state() const override { return state_; }
    double output_current(const CplProfile& profile) const override;
    double scheduled_power(const CplProfile& profile) const override;
    double dt_ctrl() const override { return params_.dt_ctrl(); }
    double v_ref() const override { return params_.v_ref; }
    const PlantParams& params() const { return params_; }

private:
    PlantParams params_;
    PlantState state_;
    int n_sub_;
};

class SurrogateEnv final : public PlantEnv {
public:
    SurrogateEnv(SurrogateParams sp, std::uint64_t noise_seed, int n_sub = 10)
        : plant_(std::move(sp), noise_seed), n_sub_(n_sub) {}
    void reset(const PlantState& s, const CplProfile& profile) override;
    void apply(double duty, const CplProfile& profile) override;
    double v_measured() const override { return plant_.last_measurement(); }
    const PlantState& true_state() const override { return plant_.state().s; }
    double output_current(const CplProfile& profile) const override;
    double scheduled_power(const CplProfile& profile) const override;
    double dt_ctrl() const override { return plant_.params().base.dt_ctrl(); }
    double v_ref() const override { return plant_.params().base.v_ref; }
    const Surrogate& plant() const { return plant_; }

private:
    Surrogate plant_;
    int n_sub_;
};

struct EpisodeConfig {
    int horizon = 3000;        // control steps
    PlantState reset_state;
    CplProfile load;
    double v_abort_lo = 50.0;  // protection trip band
    double v_abort_hi = 150.0;
    double terminal_penalty = -500.0;

    void validate(double v_ref) const;  // throws ConfigError, prefixed "episode."
};

enum class RunMode { train, eval };

struct StepRecord {
    double t = 0.0;
    double v_o = 0.0;      // true bus voltage
    double i_l = 0.0;
    double i_o = 0.0;
    double p_cpl = 0.0;
    int action = 0;
    double duty_cmd = 0.0;      // duty requested by the policy
    double duty_applied = 0.0;  // duty actually actuated (after any mapping)
    double reward = 0.0;
};

struct EpisodeResult {
    std::vector<StepRecord> trace;
    double total_reward = 0.0;
    int steps = 0;
    bool aborted = false;        // protection trip or voltage collapse
    double abort_t = 0.0;
    // training-mode bookkeeping
    double train_loss_sum = 0.0;
    int train_steps_done = 0;
};

class DrmRuntime;  // transfer.hpp

/// Runs one closed-loop episode: observe -> select -> decode -> step ->
/// reward. In train mode every control step pushes a transition and, once
/// the replay holds a full minibatch, applies one training step. Eval mode
/// is greedy and touches neither network nor memory. An abort-band
/// violation (or voltage collapse) terminates the episode with the
/// configured penalty as that transition's reward.
EpisodeResult run_episode(Agent& agent, PlantEnv& env, const EpisodeConfig& ep,
                          const RewardConfig& rcfg, const ActionTable& table,
                          RunMode mode, Rng& rng, DrmRuntime* drm = nullptr,
                          bool record_trace = true);

/// Same loop for a frozen policy (no agent bookkeeping at all).
EpisodeResult run_policy_episode(const MlpQNet& net, PlantEnv& env,
                                 const EpisodeConfig& ep,
                                 const RewardConfig& rcfg,
                                 const ActionTable& table,
                                 DrmRuntime* drm = nullptr,
                                 bool record_trace = true);

}  // namespace buckrl
