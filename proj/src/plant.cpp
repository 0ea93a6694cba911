#include "buckrl/plant.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace buckrl {

namespace {

// Switch instants are resolved with a fixed 1 ns slop so that control
// instants reconstructed by repeated dt additions still land on the
// intended side of a boundary.
constexpr double kTimeSlop = 1e-9;

template <std::size_t N, class Rhs>
std::array<double, N> rk4_substep(const std::array<double, N>& x0, double t0,
                                  double h, Rhs&& f) {
    const auto k1 = f(x0, t0);
    std::array<double, N> xs;
    for (std::size_t i = 0; i < N; ++i) xs[i] = x0[i] + 0.5 * h * k1[i];
    const auto k2 = f(xs, t0 + 0.5 * h);
    for (std::size_t i = 0; i < N; ++i) xs[i] = x0[i] + 0.5 * h * k2[i];
    const auto k3 = f(xs, t0 + 0.5 * h);
    for (std::size_t i = 0; i < N; ++i) xs[i] = x0[i] + h * k3[i];
    const auto k4 = f(xs, t0 + h);
    std::array<double, N> x1;
    for (std::size_t i = 0; i < N; ++i)
        x1[i] = x0[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return x1;
}

template <std::size_t N>
void require_finite(const std::array<double, N>& x, double t) {
    for (std::size_t i = 0; i < N; ++i) {
        if (!std::isfinite(x[i]))
            throw NumericalDivergence(
                fmt::format("non-finite plant state at t={:.6e}s", t));
    }
}

void check_duty_range(double duty, const char* who) {
    if (!(duty >= 0.0 && duty <= 1.0))
        throw std::invalid_argument(
            fmt::format("{}: duty {} outside [0,1]", who, duty));
}

}  // namespace

void PlantParams::validate() const {
    if (!(v_in > 0.0)) throw ConfigError("plant.v_in: must be > 0");
    if (!(L > 0.0)) throw ConfigError("plant.l: must be > 0");
    if (!(C > 0.0)) throw ConfigError("plant.c: must be > 0");
    if (!(R > 0.0)) throw ConfigError("plant.r: must be > 0 (inf allowed)");
    if (!(f_sw > 0.0)) throw ConfigError("plant.f_sw: must be > 0");
    if (!(v_ref > 0.0 && v_ref < v_in))
        throw ConfigError("plant.v_ref: must satisfy 0 < v_ref < v_in");
    if (!(v_min_cpl >= 0.0) || !(v_min_cpl < v_ref))
        throw ConfigError("plant.v_min_cpl: must satisfy 0 <= v_min_cpl < v_ref");
}

void CplProfile::validate() const {
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const auto& e = schedule[i];
        if (!(e.t_switch > prev))
            throw ConfigError(fmt::format(
                "load.schedule[{}]: switch times must be strictly increasing", i));
        if (!(e.power_w >= 0.0) || !std::isfinite(e.power_w))
            throw ConfigError(
                fmt::format("load.schedule[{}]: power must be finite and >= 0", i));
        prev = e.t_switch;
    }
}

double CplProfile::power_at(double t) const {
    if (schedule.empty()) return 0.0;
    const double t_eff = t + kTimeSlop;
    if (t_eff < schedule.front().t_switch) return schedule.front().power_w;
    auto it = std::upper_bound(
        schedule.begin(), schedule.end(), t_eff,
        [](double v, const Entry& e) { return v < e.t_switch; });
    return std::prev(it)->power_w;
}

double CplProfile::power_at(double t, double slew_w_per_s) const {
    if (slew_w_per_s <= 0.0) return power_at(t);
    if (schedule.empty()) return 0.0;
    const double t_eff = t + kTimeSlop;
    if (t_eff < schedule.front().t_switch) return schedule.front().power_w;
    auto it = std::upper_bound(
        schedule.begin(), schedule.end(), t_eff,
        [](double v, const Entry& e) { return v < e.t_switch; });
    const auto k = static_cast<std::size_t>(std::distance(schedule.begin(), it)) - 1;
    if (k == 0) return schedule.front().power_w;
    const double prev = schedule[k - 1].power_w;
    const double target = schedule[k].power_w;
    // the slop picks the segment; the ramp runs on the raw clock
    const double ramped =
        std::max(0.0, slew_w_per_s * (t - schedule[k].t_switch));
    const double delta = target - prev;
    return prev + std::copysign(std::min(ramped, std::abs(delta)), delta);
}

double cpl_current(double p_cpl_w, double v_o, double v_min_cpl) {
    if (p_cpl_w <= 0.0) return 0.0;
    if (v_o <= v_min_cpl)
        throw VoltageCollapse(fmt::format(
            "output voltage {:.3f}V at or below the {:.3f}V CPL floor", v_o,
            v_min_cpl));
    return p_cpl_w / v_o;
}

Derivatives ideal_derivatives(const PlantState& s, double duty, double p_cpl_w,
                              const PlantParams& p) {
    const double i_cpl = cpl_current(p_cpl_w, s.v_o, p.v_min_cpl);
    return {
        (p.v_in * duty - s.v_o) / p.L,
        s.i_l / p.C - s.v_o / (p.R * p.C) - i_cpl / p.C,
    };
}

PlantState step(const PlantState& s, double duty, const CplProfile& profile,
                const PlantParams& p, double dt_ctrl, int n_sub) {
    if (!(dt_ctrl > 0.0))
        throw std::invalid_argument("step: dt_ctrl must be positive");
    if (n_sub < 1) throw std::invalid_argument("step: n_sub must be >= 1");
    check_duty_range(duty, "step");

    // Load power is held for the whole period, like the duty.
    const double p_load = profile.power_at(s.t);
    const double h = dt_ctrl / n_sub;

    const auto rhs = [&](const std::array<double, 2>& y, double) {
        const PlantState ys{y[0], y[1], 0.0};
        const Derivatives d = ideal_derivatives(ys, duty, p_load, p);
        return std::array<double, 2>{d.di_l_dt, d.dv_o_dt};
    };

    std::array<double, 2> x{s.i_l, s.v_o};
    for (int k = 0; k < n_sub; ++k) {
        x = rk4_substep<2>(x, s.t + k * h, h, rhs);
        require_finite(x, s.t + (k + 1) * h);
    }
    return {x[0], x[1], s.t + dt_ctrl};
}

PlantState find_equilibrium(double duty, double p_cpl_w, const PlantParams& p) {
    check_duty_range(duty, "find_equilibrium");
    const double v_star = p.v_in * duty;
    if (p_cpl_w > 0.0 && v_star <= p.v_min_cpl)
        throw NoEquilibrium(fmt::format(
            "duty {:.4f} cannot sustain {:.1f}W (bus would sit at {:.2f}V)",
            duty, p_cpl_w, v_star));
    const double i_star = v_star / p.R + cpl_current(p_cpl_w, v_star, p.v_min_cpl);
    return {i_star, v_star, 0.0};
}

// ---------------------------------------------------------------------------
// surrogate
// ---------------------------------------------------------------------------

double SurrogateParams::effective_duty(double duty_cmd) const {
    return std::clamp(duty_gain * duty_cmd + duty_offset, 0.0, 1.0);
}

void SurrogateParams::validate() const {
    base.validate();
    if (!(r_inductor >= 0.0)) throw ConfigError("surrogate.r_inductor: must be >= 0");
    if (!(r_switch_on >= 0.0)) throw ConfigError("surrogate.r_switch_on: must be >= 0");
    if (!(v_diode >= 0.0)) throw ConfigError("surrogate.v_diode: must be >= 0");
    if (!(duty_gain > 0.0)) throw ConfigError("surrogate.duty_gain: must be > 0");
    if (!std::isfinite(duty_offset)) throw ConfigError("surrogate.duty_offset: must be finite");
    if (!(sensor_noise_sd_v >= 0.0))
        throw ConfigError("surrogate.sensor_noise_sd_v: must be >= 0");
    if (!std::isfinite(sensor_offset_v))
        throw ConfigError("surrogate.sensor_offset_v: must be finite");
    if (!(load_slew_w_per_s >= 0.0))
        throw ConfigError("surrogate.load_slew_w_per_s: must be >= 0");
    if (!(load_lag_tau_s >= 0.0))
        throw ConfigError("surrogate.load_lag_tau_s: must be >= 0");
}

SurrogateParams SurrogateParams::ideal(const PlantParams& base) {
    SurrogateParams sp;
    sp.base = base;
    return sp;
}

SurrogateParams SurrogateParams::default_preset(const PlantParams& base) {
    SurrogateParams sp;
    sp.base = base;
    sp.r_inductor = 0.4;
    sp.r_switch_on = 0.2;
    sp.v_diode = 0.8;
    sp.duty_gain = 0.97;
    sp.duty_offset = -0.005;
    sp.sensor_offset_v = 0.0;
    sp.sensor_noise_sd_v = 0.05;
    sp.load_slew_w_per_s = 2e6;
    sp.load_lag_tau_s = 2.5e-3;
    return sp;
}

namespace {

double surrogate_di_l(double i_l, double v_o, double d_eff,
                      const SurrogateParams& sp) {
    const double r_series = sp.r_inductor + d_eff * sp.r_switch_on;
    const double v_diode_term = (1.0 - d_eff) * sp.v_diode;
    return (sp.base.v_in * d_eff - i_l * r_series - v_diode_term - v_o) /
           sp.base.L;
}

}  // namespace

SurrogateState surrogate_step(const SurrogateState& st, double duty_cmd,
                              const CplProfile& profile,
                              const SurrogateParams& sp, double dt_ctrl,
                              int n_sub) {
    if (!(dt_ctrl > 0.0))
        throw std::invalid_argument("surrogate_step: dt_ctrl must be positive");
    if (n_sub < 1) throw std::invalid_argument("surrogate_step: n_sub must be >= 1");
    check_duty_range(duty_cmd, "surrogate_step");

    const PlantParams& p = sp.base;
    const double d_eff = sp.effective_duty(duty_cmd);
    const double h = dt_ctrl / n_sub;

    if (sp.load_lag_tau_s > 0.0) {
        // Electronic-load current tracks the P/v demand with a first-order
        // lag; the power target itself may still be ramping.
        const auto rhs = [&](const std::array<double, 3>& y, double tt) {
            const double p_target = profile.power_at(tt, sp.load_slew_w_per_s);
            const double i_demand = cpl_current(p_target, y[1], p.v_min_cpl);
            return std::array<double, 3>{
                surrogate_di_l(y[0], y[1], d_eff, sp),
                y[0] / p.C - y[1] / (p.R * p.C) - y[2] / p.C,
                (i_demand - y[2]) / sp.load_lag_tau_s,
            };
        };
        std::array<double, 3> x{st.s.i_l, st.s.v_o, st.i_load};
        for (int k = 0; k < n_sub; ++k) {
            x = rk4_substep<3>(x, st.s.t + k * h, h, rhs);
            require_finite(x, st.s.t + (k + 1) * h);
        }
        return {{x[0], x[1], st.s.t + dt_ctrl}, x[2]};
    }

    // Algebraic P/v load, power held for the period: with zero mismatch this
    // path reproduces the ideal `step` arithmetic exactly.
    const double p_load = profile.power_at(st.s.t, sp.load_slew_w_per_s);
    const auto rhs = [&](const std::array<double, 2>& y, double) {
        const double i_cpl = cpl_current(p_load, y[1], p.v_min_cpl);
        return std::array<double, 2>{
            surrogate_di_l(y[0], y[1], d_eff, sp),
            y[0] / p.C - y[1] / (p.R * p.C) - i_cpl / p.C,
        };
    };
    std::array<double, 2> x{st.s.i_l, st.s.v_o};
    for (int k = 0; k < n_sub; ++k) {
        x = rk4_substep<2>(x, st.s.t + k * h, h, rhs);
        require_finite(x, st.s.t + (k + 1) * h);
    }
    const double v_new = x[1];
    return {{x[0], v_new, st.s.t + dt_ctrl},
            p_load > 0.0 ? cpl_current(p_load, v_new, p.v_min_cpl) : 0.0};
}

double measure_v_out(double v_o, const SurrogateParams& sp, Rng& rng) {
    double v = v_o + sp.sensor_offset_v;
    if (sp.sensor_noise_sd_v > 0.0) v += sp.sensor_noise_sd_v * rng.normal();
    return v;
}

SurrogateState find_surrogate_equilibrium(double duty_cmd, double p_cpl_w,
                                          const SurrogateParams& sp) {
    check_duty_range(duty_cmd, "find_surrogate_equilibrium");
    const PlantParams& p = sp.base;
    const double d_eff = sp.effective_duty(duty_cmd);
    const double r_series = sp.r_inductor + d_eff * sp.r_switch_on;
    const double v_eff = p.v_in * d_eff - (1.0 - d_eff) * sp.v_diode;

    // v^2*(1 + R_s/R) - V_eff*v + P*R_s = 0, larger root.
    const double a = 1.0 + r_series / p.R;
    const double disc = v_eff * v_eff - 4.0 * a * p_cpl_w * r_series;
    if (disc < 0.0)
        throw NoEquilibrium(fmt::format(
            "duty {:.4f} cannot deliver {:.1f}W through the lossy stage",
            duty_cmd, p_cpl_w));
    const double v_star = (v_eff + std::sqrt(disc)) / (2.0 * a);
    if (p_cpl_w > 0.0 && v_star <= p.v_min_cpl)
        throw NoEquilibrium(fmt::format(
            "equilibrium bus voltage {:.2f}V is below the CPL floor", v_star));
    const double i_load = p_cpl_w > 0.0 ? p_cpl_w / v_star : 0.0;
    const double i_star = v_star / p.R + i_load;
    return {{i_star, v_star, 0.0}, i_load};
}

Derivatives surrogate_derivatives(const SurrogateState& st, double duty_cmd,
                                  double p_cpl_w, const SurrogateParams& sp) {
    const PlantParams& p = sp.base;
    const double d_eff = sp.effective_duty(duty_cmd);
    const double i_load = sp.load_lag_tau_s > 0.0
                              ? st.i_load
                              : cpl_current(p_cpl_w, st.s.v_o, p.v_min_cpl);
    return {
        surrogate_di_l(st.s.i_l, st.s.v_o, d_eff, sp),
        st.s.i_l / p.C - st.s.v_o / (p.R * p.C) - i_load / p.C,
    };
}

void Surrogate::reset(const PlantState& s, const CplProfile& profile) {
    state_.s = s;
    const double p_load = profile.power_at(s.t, params_.load_slew_w_per_s);
    state_.i_load = p_load > 0.0
                        ? cpl_current(p_load, s.v_o, params_.base.v_min_cpl)
                        : 0.0;
    last_measured_v_ = measure_now();
}

double Surrogate::step(double duty_cmd, const CplProfile& profile, int n_sub) {
    state_ = surrogate_step(state_, duty_cmd, profile, params_,
                            params_.base.dt_ctrl(), n_sub);
    last_measured_v_ = measure_now();
    return last_measured_v_;
}

double Surrogate::measure_now() {
    return measure_v_out(state_.s.v_o, params_, rng_);
}

}  // namespace buckrl
