#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "buckrl/plant.hpp"

namespace buckrl {

/// One settled operating point from the steady-state sweep.
/// duty_sim is the simulator-domain duty that would produce the measured
/// voltage on the ideal model: v_out / v_in.
struct SteadySample {
    double duty_real = 0.0;  // duty actually commanded on the surrogate
    double duty_sim = 0.0;   // v_out / v_in
    double v_out = 0.0;      // window-mean measured bus voltage [V]
    double i_out = 0.0;      // window-mean output current [A]
    double p_load = 0.0;     // scheduled load power [W]
};

/// Fitted affine duty map: duty_real = a*duty_sim + b*i_out + c.
struct DrmCoefficients {
    double a = 1.0;
    double b = 0.0;
    double c = 0.0;
    double fit_residual_rms = 0.0;  // duty units
    int n_samples = 0;
    int rank = 3;  // 2 when the current term was dropped as collinear

    double map_unclamped(double duty_sim, double i_out) const {
        return a * duty_sim + b * i_out + c;
    }
};

/// Affine map output clamped to the actuator range.
double apply_drm(double duty_sim, double i_out, const DrmCoefficients& k);

struct SweepGrid {
    std::vector<double> duty_points;
    std::vector<double> power_points{200.0, 500.0, 800.0, 1000.0};
    double settle_window_s = 0.05;
    double settle_tol_v = 0.1;
    double settle_timeout_s = 1.0;

    void validate() const;  // throws ConfigError, prefixed "sweep."
};

struct SweepPointLog {
    double duty = 0.0;
    double power_w = 0.0;
    enum class Outcome { settled, collapsed, unsettled, no_equilibrium } outcome;
    double t_settled_s = 0.0;
    SurrogateState final_state;  // for steadiness re-checks
};

struct SweepDiagnostics {
    std::vector<SweepPointLog> points;
    int attempted = 0;
    int settled = 0;
};

/// Runs the surrogate open loop over the (duty, power) grid. A point is
/// accepted once the low-pass-filtered voltage measurement stays inside
/// settle_tol_v (max minus min) across a full settle window; the sample
/// records window means. Points that collapse or fail to settle inside the
/// timeout are skipped and logged. Throws NoSteadyState when fewer than
/// three points settle.
std::vector<SteadySample> collect_samples(const SurrogateParams& sp,
                                          const SweepGrid& grid,
                                          std::uint64_t seed,
                                          SweepDiagnostics* diag = nullptr,
                                          int jobs = 1);

/// Ordinary least squares on [duty_sim, i_out, 1] via column-pivoted QR.
/// Falls back to the rank-2 model duty_real = a*duty_sim + c when the
/// current column carries no information; throws DegenerateDesign beyond
/// that or when fewer than three samples are given, and when the fitted
/// slope is not positive (a monotone map is required for inversion).
DrmCoefficients fit_drm(const std::vector<SteadySample>& samples);

/// Runtime wrapper used inside the control loop: applies the affine map to
/// the agent's duty with a first-order low-pass filter on the measured
/// output current so sensor noise does not dither the actuated duty.
class DrmRuntime {
public:
    explicit DrmRuntime(DrmCoefficients k, double filter_tau_s = 1e-3)
        : k_(k), tau_(filter_tau_s) {}

    void reset(double i_out, double dt_ctrl);
    double map(double duty_sim, double i_out_measured);
    bool last_saturated() const { return saturated_; }
    double filtered_current() const { return i_filt_; }
    const DrmCoefficients& coefficients() const { return k_; }

private:
    DrmCoefficients k_;
    double tau_;
    double alpha_ = 1.0;  // filter coefficient, set at reset from dt
    double i_filt_ = 0.0;
    bool saturated_ = false;
    bool primed_ = false;
};

// DRM artifact (de)serialization lives in artifacts.hpp.

}  // namespace buckrl
