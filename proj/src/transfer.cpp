#include "buckrl/transfer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <thread>

#include <fmt/format.h>

#include "buckrl/errors.hpp"

namespace buckrl {

double apply_drm(double duty_sim, double i_out, const DrmCoefficients& k) {
    return std::clamp(k.map_unclamped(duty_sim, i_out), 0.0, 1.0);
}

void SweepGrid::validate() const {
    if (duty_points.empty()) throw ConfigError("sweep.duty_points: must be nonempty");
    if (power_points.empty())
        throw ConfigError("sweep.power_points: must be nonempty");
    for (double d : duty_points)
        if (!(d >= 0.0 && d <= 1.0))
            throw ConfigError("sweep.duty_points: duties must be in [0, 1]");
    for (double p : power_points)
        if (!(p >= 0.0) || !std::isfinite(p))
            throw ConfigError("sweep.power_points: powers must be finite and >= 0");
    if (!(settle_window_s > 0.0))
        throw ConfigError("sweep.settle_window_s: must be > 0");
    if (!(settle_tol_v > 0.0)) throw ConfigError("sweep.settle_tol_v: must be > 0");
    if (!(settle_timeout_s >= settle_window_s))
        throw ConfigError("sweep.settle_timeout_s: must cover the settle window");
}

namespace {

struct PointResult {
    SweepPointLog log;
    SteadySample sample;
    bool ok = false;
};

// Runs one open-loop grid point until the filtered voltage measurement sits
// still for a full window, then records window means.
PointResult run_point(const SurrogateParams& sp, const SweepGrid& grid,
                      double duty, double power_w, std::uint64_t seed) {
    PointResult res;
    res.log.duty = duty;
    res.log.power_w = power_w;

    const double dt = sp.base.dt_ctrl();
    const auto window_n =
        static_cast<std::size_t>(std::lround(grid.settle_window_s / dt));
    const auto max_steps =
        static_cast<std::size_t>(std::lround(grid.settle_timeout_s / dt));
    const double filter_tau = 1e-3;
    const double alpha = dt / (filter_tau + dt);

    const CplProfile profile = CplProfile::constant(power_w);

    // Start from the ideal-model prediction for this duty: the operator's
    // prior, possibly far from the surrogate's true operating point.
    PlantState init;
    try {
        init = find_equilibrium(duty, power_w, sp.base);
    } catch (const NoEquilibrium&) {
        res.log.outcome = SweepPointLog::Outcome::no_equilibrium;
        return res;
    }

    Surrogate plant(sp, seed);
    try {
        plant.reset(init, profile);
    } catch (const VoltageCollapse&) {
        res.log.outcome = SweepPointLog::Outcome::collapsed;
        return res;
    }

    double v_filt = plant.last_measurement();
    std::deque<double> filt_window, v_window, i_window;

    for (std::size_t k = 0; k < max_steps; ++k) {
        double v_meas;
        try {
            v_meas = plant.step(duty, profile);
        } catch (const VoltageCollapse&) {
            res.log.outcome = SweepPointLog::Outcome::collapsed;
            return res;
        } catch (const NumericalDivergence&) {
            res.log.outcome = SweepPointLog::Outcome::collapsed;
            return res;
        }
        v_filt += alpha * (v_meas - v_filt);

        const auto& st = plant.state();
        const double i_out =
            sp.load_lag_tau_s > 0.0
                ? st.i_load + st.s.v_o / sp.base.R
                : st.s.v_o / sp.base.R +
                      (power_w > 0.0
                           ? cpl_current(power_w, st.s.v_o, sp.base.v_min_cpl)
                           : 0.0);

        filt_window.push_back(v_filt);
        v_window.push_back(v_meas);
        i_window.push_back(i_out);
        if (filt_window.size() > window_n) {
            filt_window.pop_front();
            v_window.pop_front();
            i_window.pop_front();
        }

        if (filt_window.size() == window_n) {
            const auto [lo, hi] =
                std::minmax_element(filt_window.begin(), filt_window.end());
            if (*hi - *lo < grid.settle_tol_v) {
                double v_mean = 0.0, i_mean = 0.0;
                for (double v : v_window) v_mean += v;
                for (double i : i_window) i_mean += i;
                v_mean /= static_cast<double>(window_n);
                i_mean /= static_cast<double>(window_n);

                res.sample.duty_real = duty;
                res.sample.v_out = v_mean;
                res.sample.i_out = i_mean;
                res.sample.p_load = power_w;
                res.sample.duty_sim = v_mean / sp.base.v_in;
                res.log.outcome = SweepPointLog::Outcome::settled;
                res.log.t_settled_s = st.s.t;
                res.log.final_state = st;
                res.ok = true;
                return res;
            }
        }
    }
    res.log.outcome = SweepPointLog::Outcome::unsettled;
    return res;
}

}  // namespace

std::vector<SteadySample> collect_samples(const SurrogateParams& sp,
                                          const SweepGrid& grid,
                                          std::uint64_t seed,
                                          SweepDiagnostics* diag, int jobs) {
    grid.validate();
    sp.validate();

    struct Task {
        double duty, power;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    std::uint64_t point_id = 0;
    for (double p : grid.power_points)
        for (double d : grid.duty_points) tasks.push_back({d, p, seed + 1000 * point_id++});

    std::vector<PointResult> results(tasks.size());
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i)
            results[i] = run_point(sp, grid, tasks[i].duty, tasks[i].power, tasks[i].seed);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < tasks.size();
                     i = next.fetch_add(1))
                    results[i] =
                        run_point(sp, grid, tasks[i].duty, tasks[i].power, tasks[i].seed);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<SteadySample> samples;
    for (auto& r : results) {
        if (diag) {
            diag->attempted += 1;
            diag->settled += r.ok ? 1 : 0;
            diag->points.push_back(r.log);
        }
        if (r.ok) samples.push_back(r.sample);
    }
    if (samples.size() < 3)
        throw NoSteadyState(fmt::format(
            "only {} of {} sweep points settled; need at least 3 to fit",
            samples.size(), tasks.size()));
    return samples;
}

DrmCoefficients fit_drm(const std::vector<SteadySample>& samples) {
    const auto n = static_cast<Eigen::Index>(samples.size());
    if (n < 3)
        throw DegenerateDesign(
            fmt::format("{} samples; the affine map needs at least 3", n));

    Eigen::MatrixXd design(n, 3);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        design(i, 0) = s.duty_sim;
        design(i, 1) = s.i_out;
        design(i, 2) = 1.0;
        target(i) = s.duty_real;
    }

    DrmCoefficients k;
    k.n_samples = static_cast<int>(n);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() == 3) {
        const Eigen::Vector3d beta = qr.solve(target);
        k.a = beta(0);
        k.b = beta(1);
        k.c = beta(2);
        k.rank = 3;
    } else {
        // current column carries no information: drop it
        Eigen::MatrixXd reduced(n, 2);
        reduced.col(0) = design.col(0);
        reduced.col(1) = design.col(2);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr2(reduced);
        qr2.setThreshold(1e-10);
        if (qr2.rank() < 2)
            throw DegenerateDesign(
                "sweep samples are collinear even without the current term");
        const Eigen::Vector2d beta = qr2.solve(target);
        k.a = beta(0);
        k.b = 0.0;
        k.c = beta(1);
        k.rank = 2;
    }

    const Eigen::VectorXd residual =
        target - design.col(0) * k.a - design.col(1) * k.b -
        Eigen::VectorXd::Constant(n, k.c);
    k.fit_residual_rms = std::sqrt(residual.squaredNorm() / static_cast<double>(n));
    if (!std::isfinite(k.fit_residual_rms))
        throw DegenerateDesign("non-finite fit residual");
    if (!(k.a > 0.0))
        throw DegenerateDesign(fmt::format(
            "fitted duty slope a = {:.4g} is not positive; map not invertible",
            k.a));
    return k;
}

void DrmRuntime::reset(double i_out, double dt_ctrl) {
    alpha_ = dt_ctrl / (tau_ + dt_ctrl);
    i_filt_ = i_out;
    primed_ = true;
    saturated_ = false;
}

double DrmRuntime::map(double duty_sim, double i_out_measured) {
    if (!primed_) {
        i_filt_ = i_out_measured;
        primed_ = true;
    } else {
        i_filt_ += alpha_ * (i_out_measured - i_filt_);
    }
    const double raw = k_.map_unclamped(duty_sim, i_filt_);
    const double duty = std::clamp(raw, 0.0, 1.0);
    saturated_ = duty != raw;
    return duty;
}

}  // namespace buckrl
