#include "buckrl/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace buckrl {

namespace {
constexpr double kTimeSlop = 1e-9;
}

SettleResult settling_time(std::span<const StepRecord> segment, double t_start,
                           double v_ref, double band_v) {
    SettleResult res;
    if (segment.empty()) return res;

    // last sample outside the band decides everything
    std::ptrdiff_t last_violation = -1;
    for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(segment.size()) - 1;
         i >= 0; --i) {
        if (std::abs(segment[static_cast<std::size_t>(i)].v_o - v_ref) > band_v) {
            last_violation = i;
            break;
        }
    }
    if (last_violation < 0) {
        res.time_s = 0.0;
        res.settled = true;
        return res;
    }
    if (last_violation + 1 == static_cast<std::ptrdiff_t>(segment.size())) {
        res.time_s = segment.back().t - t_start;
        res.settled = false;
        return res;
    }
    res.time_s =
        segment[static_cast<std::size_t>(last_violation + 1)].t - t_start;
    res.settled = true;
    return res;
}

std::vector<SegmentMetrics> compute_metrics(std::span<const StepRecord> trace,
                                            const CplProfile& load,
                                            double v_ref, double duration_s,
                                            double band_v,
                                            double ss_window_frac) {
    std::vector<double> bounds{0.0};
    for (const auto& e : load.schedule)
        if (e.t_switch > kTimeSlop && e.t_switch < duration_s - kTimeSlop)
            bounds.push_back(e.t_switch);
    bounds.push_back(duration_s);

    std::vector<SegmentMetrics> out;
    std::size_t row = 0;
    for (std::size_t seg = 0; seg + 1 < bounds.size(); ++seg) {
        const double t0 = bounds[seg];
        const double t1 = bounds[seg + 1];

        const std::size_t first = row;
        while (row < trace.size() && trace[row].t <= t1 + kTimeSlop) ++row;
        const std::span<const StepRecord> rows = trace.subspan(first, row - first);

        SegmentMetrics m;
        m.index = static_cast<int>(seg);
        m.t_start = t0;
        m.t_end = t1;
        m.p_load_w = load.power_at(t0);
        m.n_rows = static_cast<int>(rows.size());
        if (rows.empty()) {
            out.push_back(m);
            continue;
        }

        const auto settle = settling_time(rows, t0, v_ref, band_v);
        m.settling_time_s = settle.time_s;
        m.settled = settle.settled;

        for (const auto& r : rows)
            m.overshoot_v = std::max(m.overshoot_v, std::abs(r.v_o - v_ref));

        const double w_start = t1 - ss_window_frac * (t1 - t0);
        double err_sum = 0.0;
        double v_min = std::numeric_limits<double>::infinity();
        double v_max = -std::numeric_limits<double>::infinity();
        int n = 0;
        for (const auto& r : rows) {
            if (r.t < w_start - kTimeSlop) continue;
            err_sum += std::abs(r.v_o - v_ref);
            v_min = std::min(v_min, r.v_o);
            v_max = std::max(v_max, r.v_o);
            ++n;
        }
        if (n > 0) {
            m.steady_state_error_v = err_sum / n;
            m.ripple_pp_v = v_max - v_min;
        }
        out.push_back(m);
    }
    return out;
}

}  // namespace buckrl
