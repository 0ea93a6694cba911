#pragma once

#include <span>
#include <vector>

#include "buckrl/control.hpp"
#include "buckrl/plant.hpp"

namespace buckrl {

struct SettleResult {
    double time_s = 0.0;
    bool settled = false;
};

/// First time offset from t_start after which |v_o - v_ref| stays inside
/// the band for the remainder of the segment. 0 when the segment never
/// leaves the band; unsettled when its final sample is outside.
SettleResult settling_time(std::span<const StepRecord> segment, double t_start,
                           double v_ref, double band_v);

/// Per-load-segment transient and steady-state figures. The steady-state
/// window is the trailing fraction of the segment.
struct SegmentMetrics {
    int index = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    double p_load_w = 0.0;
    double settling_time_s = 0.0;
    bool settled = false;
    double overshoot_v = 0.0;            // peak |v_o - v_ref| in the segment
    double steady_state_error_v = 0.0;   // mean |e| over the trailing window
    double ripple_pp_v = 0.0;            // peak-to-peak over the same window
    int n_rows = 0;
};

/// Slices the trace at the profile's switch instants and computes metrics
/// per segment. Pure function of the trace: recomputable from CSV.
std::vector<SegmentMetrics> compute_metrics(std::span<const StepRecord> trace,
                                            const CplProfile& load,
                                            double v_ref, double duration_s,
                                            double band_v,
                                            double ss_window_frac);

}  // namespace buckrl
