#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "buckrl/errors.hpp"
#include "buckrl/rng.hpp"

namespace buckrl {

/// Averaged buck converter constants. R is an optional resistive shunt
/// across the output; infinity (the default) means the converter feeds the
/// constant-power load alone.
struct PlantParams {
    double v_in = 200.0;  // input source [V]
    double L = 2e-3;      // inductance [H]
    double C = 150e-6;    // capacitance [F]
    double R = std::numeric_limits<double>::infinity();  // shunt [ohm]
    double f_sw = 10e3;   // switching / control frequency [Hz]
    double v_ref = 100.0; // regulation target [V]

    /// Undervoltage floor below which the P/v load law is declared
    /// collapsed (mirrors a hardware undervoltage trip).
    double v_min_cpl = 10.0;

    double dt_ctrl() const { return 1.0 / f_sw; }
    void validate() const;  // throws ConfigError, message prefixed "plant."
};

struct PlantState {
    double i_l = 0.0;  // inductor current [A]
    double v_o = 0.0;  // output voltage [V]
    double t = 0.0;    // [s]
};

/// Piecewise-constant load power schedule. The new power applies at the
/// switching instant itself.
struct CplProfile {
    struct Entry {
        double t_switch;  // [s]
        double power_w;
    };
    std::vector<Entry> schedule;

    static CplProfile constant(double power_w) { return {{{0.0, power_w}}}; }

    /// Scheduled power at time t (0 W for an empty schedule; the first
    /// entry's power before its switch time).
    double power_at(double t) const;

    /// Same schedule seen through a load with finite power slew [W/s];
    /// steps become linear ramps. slew <= 0 means instantaneous.
    double power_at(double t, double slew_w_per_s) const;

    void validate() const;
};

/// Instantaneous constant-power-load current P/v. Throws VoltageCollapse
/// when power is being drawn at or below the undervoltage floor.
double cpl_current(double p_cpl_w, double v_o, double v_min_cpl = 10.0);

struct Derivatives {
    double di_l_dt;  // [A/s]
    double dv_o_dt;  // [V/s]
};

/// Averaged model of the lossless buck converter with CPL:
///   di_l/dt = (v_in*d - v_o) / L
///   dv_o/dt = i_l/C - v_o/(R*C) - P/(C*v_o)
Derivatives ideal_derivatives(const PlantState& s, double duty, double p_cpl_w,
                              const PlantParams& p);

/// Advances the ideal model by one control period with the duty held
/// constant (zero-order hold). Classical RK4, n_sub internal substeps.
/// Load power is sampled from the profile once at the period start.
PlantState step(const PlantState& s, double duty, const CplProfile& profile,
                const PlantParams& p, double dt_ctrl, int n_sub = 10);

/// Steady state of the ideal model: v* = d*v_in, i* = v*/R + P/v*.
PlantState find_equilibrium(double duty, double p_cpl_w, const PlantParams& p);

// ---------------------------------------------------------------------------
// Hardware surrogate: the deliberately mismatched plant the trained policy
// is transferred to. Mismatch knobs: conduction parasitics, duty actuation
// error, sensor imperfections, and an electronic-load model with finite
// power slew and control bandwidth. With every knob zeroed the surrogate
// reproduces `step` bit for bit.
// ---------------------------------------------------------------------------

struct SurrogateParams {
    PlantParams base;

    double r_inductor = 0.0;     // inductor ESR [ohm]
    double r_switch_on = 0.0;    // switch on-resistance [ohm]
    double v_diode = 0.0;        // diode forward drop [V]
    double duty_gain = 1.0;      // actuation gain error (applied duty scale)
    double duty_offset = 0.0;    // actuation offset
    double sensor_offset_v = 0.0;
    double sensor_noise_sd_v = 0.0;

    // Electronic-load realism. Zero disables either effect.
    double load_slew_w_per_s = 0.0;  // power step rate limit
    double load_lag_tau_s = 0.0;     // first-order lag of the load current

    /// Effective duty seen by the power stage, clamped to [0, 1].
    double effective_duty(double duty_cmd) const;

    void validate() const;  // throws ConfigError, prefixed "surrogate."

    /// Zero-mismatch surrogate (degenerates to the ideal model).
    static SurrogateParams ideal(const PlantParams& base);

    /// Shipped mismatch preset: enough conduction loss and actuation error
    /// that the untransferred policy holds the bus >1 V low, plus an
    /// electronic load with finite slew and bandwidth so fixed-duty
    /// operating points are open-loop stable (a pure P/v load with these
    /// L, C values is not).
    static SurrogateParams default_preset(const PlantParams& base);
};

struct SurrogateState {
    PlantState s;
    double i_load = 0.0;  // load current state when the lag model is active
};

/// One zero-order-hold control period of the surrogate dynamics:
///   di_l/dt = (v_in*d_eff - i_l*(R_L + d_eff*R_on) - (1-d_eff)*V_D - v_o)/L
///   dv_o/dt = i_l/C - v_o/(R*C) - i_load/C
/// with i_load either the algebraic P/v law (lag tau = 0) or a first-order
/// tracking state. Measurement is separate, see measure_v_out.
SurrogateState surrogate_step(const SurrogateState& st, double duty_cmd,
                              const CplProfile& profile,
                              const SurrogateParams& sp, double dt_ctrl,
                              int n_sub = 10);

/// Sensor model: true voltage plus offset plus seeded Gaussian noise.
double measure_v_out(double v_o, const SurrogateParams& sp, Rng& rng);

/// Noiseless steady state of the surrogate at a fixed duty command; the
/// larger root of the quadratic balance. Throws NoEquilibrium when the
/// load power exceeds what the lossy stage can deliver.
SurrogateState find_surrogate_equilibrium(double duty_cmd, double p_cpl_w,
                                          const SurrogateParams& sp);

/// Surrogate derivatives at a state (no stepping); used to re-check
/// steadiness of accepted sweep samples.
Derivatives surrogate_derivatives(const SurrogateState& st, double duty_cmd,
                                  double p_cpl_w, const SurrogateParams& sp);

/// Convenience wrapper owning surrogate state plus the sensor noise
/// stream. One instance per closed-loop run.
class Surrogate {
public:
    Surrogate(SurrogateParams sp, std::uint64_t noise_seed)
        : params_(std::move(sp)), rng_(Rng::stream(noise_seed, 0xfeed)) {}

    /// Resets to the given electrical state; the load-lag current starts
    /// at the scheduled P/v so a run begins load-balanced.
    void reset(const PlantState& s, const CplProfile& profile);

    /// Advances one control period and returns the measured bus voltage.
    double step(double duty_cmd, const CplProfile& profile, int n_sub = 10);

    const SurrogateState& state() const { return state_; }
    const SurrogateParams& params() const { return params_; }
    double last_measurement() const { return last_measured_v_; }
    double measure_now();

private:
    SurrogateParams params_;
    SurrogateState state_;
    Rng rng_;
    double last_measured_v_ = 0.0;
};

}  // namespace buckrl
