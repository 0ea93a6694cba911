#include "buckrl/control.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "buckrl/transfer.hpp"

namespace buckrl {

Observation observe(double v_now, double v_prev, double v_ref, double dt_ctrl) {
    if (!(dt_ctrl > 0.0))
        throw std::invalid_argument("observe: dt_ctrl must be positive");
    Observation o;
    o.v_o = v_now;
    o.v_o_prev = v_prev;
    o.dv_dt = (v_now - v_prev) / dt_ctrl;
    o.err = v_now - v_ref;
    o.err_prev = v_prev - v_ref;
    o.derr_dt = (o.err - o.err_prev) / dt_ctrl;
    return o;
}

Vec6 to_features(const Observation& o) {
    Vec6 f;
    f << o.v_o * kFeatureScale[0], o.v_o_prev * kFeatureScale[1],
        o.dv_dt * kFeatureScale[2], o.err * kFeatureScale[3],
        o.err_prev * kFeatureScale[4], o.derr_dt * kFeatureScale[5];
    return f;
}

void ActionTable::validate() const {
    if (entries.empty()) throw ConfigError("actions.entries: must be nonempty");
    if (!(deadband_v >= 0.0))
        throw ConfigError("actions.deadband_v: must be >= 0");
    std::set<std::pair<double, double>> seen;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (!(e.duty_trim >= 0.0))
            throw ConfigError(
                fmt::format("actions.entries[{}]: trim must be >= 0", i));
        if (!(e.duty_base - e.duty_trim >= 0.0) ||
            !(e.duty_base + e.duty_trim <= 1.0))
            throw ConfigError(fmt::format(
                "actions.entries[{}]: base {} +- trim {} leaves [0, 1]", i,
                e.duty_base, e.duty_trim));
        if (!seen.insert({e.duty_base, e.duty_trim}).second)
            throw ConfigError(
                fmt::format("actions.entries[{}]: duplicate entry", i));
    }
}

std::vector<double> ActionTable::reachable_duties() const {
    std::set<double> duties;
    for (const auto& e : entries) {
        duties.insert(e.duty_base);
        duties.insert(e.duty_base - e.duty_trim);
        duties.insert(e.duty_base + e.duty_trim);
    }
    return {duties.begin(), duties.end()};
}

ActionTable ActionTable::defaults() {
    ActionTable t;
    const double bases[] = {0.40, 0.45, 0.50, 0.55, 0.60};
    const double trims[] = {0.005, 0.02, 0.10, 0.40};
    for (double base : bases)
        for (double trim : trims) t.entries.push_back({base, trim});
    t.deadband_v = 0.05;
    return t;
}

DecodedDuty decode_action(int idx, const ActionTable& table, double err_v) {
    if (idx < 0 || idx >= table.size())
        throw std::out_of_range(
            fmt::format("decode_action: index {} outside table of {}", idx,
                        table.size()));
    const auto& e = table.entries[static_cast<std::size_t>(idx)];
    double c = 0.0;
    if (std::abs(err_v) > table.deadband_v) c = err_v < 0.0 ? 1.0 : -1.0;
    const double raw = e.duty_base + c * e.duty_trim;
    const double duty = std::clamp(raw, 0.0, 1.0);
    return {duty, duty != raw};
}

void RewardConfig::validate() const {
    if (!(tight_band_v > 0.0 && tight_band_v < loose_band_v))
        throw ConfigError("reward.tight_band_v: need 0 < tight < loose band");
    if (!(tight_bonus > loose_bonus && loose_bonus > 0.0))
        throw ConfigError("reward.tight_bonus: need tight > loose > 0");
    if (!(error_weight > 0.0)) throw ConfigError("reward.error_weight: must be > 0");
}

double reward(double err_v, const RewardConfig& cfg) {
    const double mag = std::abs(err_v);
    const double penalty = cfg.error_weight * mag;
    if (mag < cfg.tight_band_v) return cfg.tight_bonus - penalty;
    if (mag <= cfg.loose_band_v) return cfg.loose_bonus - penalty;
    return -penalty;
}

// ---------------------------------------------------------------------------
// environments
// ---------------------------------------------------------------------------

void IdealEnv::reset(const PlantState& s, const CplProfile&) { state_ = s; }

void IdealEnv::apply(double duty, const CplProfile& profile) {
    state_ = step(state_, duty, profile, params_, params_.dt_ctrl(), n_sub_);
}

double IdealEnv::output_current(const CplProfile& profile) const {
    const double p = profile.power_at(state_.t);
    return state_.v_o / params_.R +
           (p > 0.0 ? cpl_current(p, state_.v_o, params_.v_min_cpl) : 0.0);
}

double IdealEnv::scheduled_power(const CplProfile& profile) const {
    return profile.power_at(state_.t);
}

void SurrogateEnv::reset(const PlantState& s, const CplProfile& profile) {
    plant_.reset(s, profile);
}

void SurrogateEnv::apply(double duty, const CplProfile& profile) {
    plant_.step(duty, profile, n_sub_);
}

double SurrogateEnv::output_current(const CplProfile& profile) const {
    const auto& sp = plant_.params();
    const auto& st = plant_.state();
    double i_load = st.i_load;
    if (sp.load_lag_tau_s <= 0.0) {
        const double p = profile.power_at(st.s.t, sp.load_slew_w_per_s);
        i_load = p > 0.0 ? cpl_current(p, st.s.v_o, sp.base.v_min_cpl) : 0.0;
    }
    return st.s.v_o / sp.base.R + i_load;
}

double SurrogateEnv::scheduled_power(const CplProfile& profile) const {
    return profile.power_at(plant_.state().s.t, plant_.params().load_slew_w_per_s);
}

// ---------------------------------------------------------------------------
// episode loop
// ---------------------------------------------------------------------------

void EpisodeConfig::validate(double v_ref) const {
    if (horizon < 1) throw ConfigError("episode.horizon: must be >= 1");
    if (!(v_abort_lo < v_ref && v_ref < v_abort_hi))
        throw ConfigError("episode.v_abort_lo: need v_abort_lo < v_ref < v_abort_hi");
    load.validate();
}

namespace {

struct LoopCallbacks {
    Agent* agent = nullptr;   // training bookkeeping when set
    const MlpQNet* net = nullptr;
    Rng* rng = nullptr;
    RunMode mode = RunMode::eval;
};

EpisodeResult run_loop(const LoopCallbacks& cb, PlantEnv& env,
                       const EpisodeConfig& ep, const RewardConfig& rcfg,
                       const ActionTable& table, DrmRuntime* drm,
                       bool record_trace) {
    ep.validate(env.v_ref());
    table.validate();
    rcfg.validate();

    const double dt = env.dt_ctrl();
    const double v_ref = env.v_ref();
    const MlpQNet& net = cb.agent ? cb.agent->net() : *cb.net;
    const bool training = cb.mode == RunMode::train && cb.agent != nullptr;
    const double epsilon = training ? cb.agent->hyper().epsilon : 0.0;

    EpisodeResult out;
    if (record_trace) out.trace.reserve(static_cast<std::size_t>(ep.horizon));

    env.reset(ep.reset_state, ep.load);
    double v_prev = env.v_measured();  // episode start: delayed sample == current
    if (drm) drm->reset(env.output_current(ep.load), dt);

    for (int k = 0; k < ep.horizon; ++k) {
        const double v_now = env.v_measured();
        const Observation obs = observe(v_now, v_prev, v_ref, dt);
        const Vec6 feat = to_features(obs);
        const int action = training ? cb.agent->act(feat, epsilon, *cb.rng)
                                    : net.argmax_action(feat);
        const auto decoded = decode_action(action, table, obs.err);
        const double duty_cmd = decoded.duty;
        const double duty_applied =
            drm ? drm->map(duty_cmd, env.output_current(ep.load)) : duty_cmd;

        // scheduled power over the upcoming period, for the trace
        const double p_in_period = env.scheduled_power(ep.load);

        bool collapsed = false;
        try {
            env.apply(duty_applied, ep.load);
        } catch (const VoltageCollapse&) {
            collapsed = true;  // state did not advance
        }

        const PlantState& s_now = env.true_state();
        const bool tripped =
            collapsed || s_now.v_o <= ep.v_abort_lo || s_now.v_o >= ep.v_abort_hi;
        const bool last = tripped || k + 1 == ep.horizon;

        const double r =
            tripped ? ep.terminal_penalty : reward(s_now.v_o - v_ref, rcfg);
        out.total_reward += r;

        if (record_trace) {
            StepRecord rec;
            // rows are stamped at the period end; on a collapse the state
            // never advanced, so stamp where the period would have ended
            rec.t = collapsed ? s_now.t + dt : s_now.t;
            rec.v_o = s_now.v_o;
            rec.i_l = s_now.i_l;
            rec.i_o = collapsed ? 0.0 : env.output_current(ep.load);
            rec.p_cpl = p_in_period;
            rec.action = action;
            rec.duty_cmd = duty_cmd;
            rec.duty_applied = duty_applied;
            rec.reward = r;
            out.trace.push_back(rec);
        }

        if (training) {
            Transition tr;
            tr.s = feat;
            tr.action = action;
            tr.reward = r;
            const double v_meas_now = collapsed ? v_now : env.v_measured();
            tr.s_next = to_features(observe(v_meas_now, v_now, v_ref, dt));
            tr.terminal = last;
            cb.agent->remember(tr);
            if (cb.agent->memory().size() >=
                static_cast<std::size_t>(cb.agent->hyper().batch_size)) {
                out.train_loss_sum += cb.agent->train_step(*cb.rng);
                out.train_steps_done += 1;
            }
        }

        ++out.steps;
        if (tripped) {
            out.aborted = true;
            out.abort_t = s_now.t;
            break;
        }
        v_prev = v_now;  // pre-step measurement becomes the delayed sample
    }
    return out;
}

}  // namespace

EpisodeResult run_episode(Agent& agent, PlantEnv& env, const EpisodeConfig& ep,
                          const RewardConfig& rcfg, const ActionTable& table,
                          RunMode mode, Rng& rng, DrmRuntime* drm,
                          bool record_trace) {
    LoopCallbacks cb;
    cb.agent = &agent;
    cb.rng = &rng;
    cb.mode = mode;
    return run_loop(cb, env, ep, rcfg, table, drm, record_trace);
}

EpisodeResult run_policy_episode(const MlpQNet& net, PlantEnv& env,
                                 const EpisodeConfig& ep,
                                 const RewardConfig& rcfg,
                                 const ActionTable& table, DrmRuntime* drm,
                                 bool record_trace) {
    LoopCallbacks cb;
    cb.net = &net;
    return run_loop(cb, env, ep, rcfg, table, drm, record_trace);
}

}  // namespace buckrl
