#include <doctest.h>

#include <cmath>

#include "buckrl/control.hpp"
#include "buckrl/transfer.hpp"

using namespace buckrl;

namespace {

SweepGrid reachable_grid() {
    SweepGrid grid;
    grid.duty_points = ActionTable::defaults().reachable_duties();
    return grid;
}

std::vector<SteadySample> exact_affine_samples(double a, double b, double c,
                                               int n, std::uint64_t seed,
                                               double noise_sd) {
    Rng rng(seed);
    std::vector<SteadySample> samples;
    for (int k = 0; k < n; ++k) {
        SteadySample s;
        s.duty_sim = rng.uniform(0.25, 0.75);
        s.i_out = rng.uniform(0.0, 14.0);
        s.duty_real = a * s.duty_sim + b * s.i_out + c;
        if (noise_sd > 0.0) s.duty_real += noise_sd * rng.normal();
        samples.push_back(s);
    }
    return samples;
}

// fixed-entry policy driving the surrogate, with or without the duty map
double scripted_steady_error(const SurrogateParams& sp,
                             const DrmCoefficients* k, double p_load,
                             std::uint64_t seed) {
    const PlantParams& p = sp.base;
    const auto load = CplProfile::constant(p_load);
    Surrogate plant(sp, seed);
    plant.reset(find_equilibrium(0.5, p_load, p), load);
    DrmRuntime runtime(k ? *k : DrmCoefficients{});
    runtime.reset(p_load / p.v_ref, p.dt_ctrl());

    ActionTable table;
    table.entries = {{0.5, 0.02}};
    const int settle = 4000, window = 1000;
    double err_sum = 0.0;
    for (int step_i = 0; step_i < settle + window; ++step_i) {
        const double err_meas = plant.last_measurement() - p.v_ref;
        const double duty_cmd = decode_action(0, table, err_meas).duty;
        const double i_out = plant.state().i_load;
        const double duty = k ? runtime.map(duty_cmd, i_out) : duty_cmd;
        plant.step(duty, load);
        if (step_i >= settle) err_sum += std::abs(plant.state().s.v_o - p.v_ref);
    }
    return err_sum / window;
}

}  // namespace

TEST_SUITE("transfer") {

TEST_CASE("sweeping the ideal plant is the identity map") {
    const auto sp = SurrogateParams::ideal(PlantParams{});
    SweepDiagnostics diag;
    const auto samples = collect_samples(sp, reachable_grid(), 7, &diag);
    CHECK(diag.settled >= 100);
    for (const auto& s : samples)
        CHECK(s.duty_sim == doctest::Approx(s.duty_real).epsilon(1e-12));

    const auto k = fit_drm(samples);
    CHECK(std::abs(k.a - 1.0) < 1e-9);
    CHECK(std::abs(k.b) < 1e-9);
    CHECK(std::abs(k.c) < 1e-9);

    // round trip: the fitted map is a no-op on agent duties
    for (double duty : ActionTable::defaults().reachable_duties())
        CHECK(apply_drm(duty, 5.0, k) == doctest::Approx(duty).epsilon(1e-6));
}

TEST_CASE("the mismatched surrogate sags below the commanded ratio") {
    const auto sp = SurrogateParams::default_preset(PlantParams{});
    SweepGrid grid;
    grid.duty_points = {0.5};
    grid.power_points = {500.0};
    const auto samples = collect_samples(sp, grid, 11);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].duty_sim < 0.5);
    CHECK(samples[0].v_out < 99.0);
}

TEST_CASE("small grid cardinality and settle-criterion soundness") {
    const auto sp = SurrogateParams::default_preset(PlantParams{});
    SweepGrid grid;
    grid.duty_points = {0.42, 0.46, 0.50, 0.54, 0.58};
    grid.power_points = {200.0, 500.0, 800.0};
    SweepDiagnostics diag;
    const auto samples = collect_samples(sp, grid, 13, &diag);
    CHECK(samples.size() <= 15);
    CHECK(samples.size() >= 10);

    // every accepted point, re-checked on the noiseless dynamics, moves
    // slower than the tolerance over the window
    const double rate_limit = grid.settle_tol_v / grid.settle_window_s;
    for (const auto& pt : diag.points) {
        if (pt.outcome != SweepPointLog::Outcome::settled) continue;
        const auto d = surrogate_derivatives(pt.final_state, pt.duty, pt.power_w, sp);
        CHECK(std::abs(d.dv_o_dt) < rate_limit);
    }
}

TEST_CASE("noiseless affine data is recovered exactly") {
    const auto samples = exact_affine_samples(1.1, 0.002, 0.01, 50, 5, 0.0);
    const auto k = fit_drm(samples);
    CHECK(std::abs(k.a - 1.1) < 1e-9);
    CHECK(std::abs(k.b - 0.002) < 1e-9);
    CHECK(std::abs(k.c - 0.01) < 1e-9);
    CHECK(k.fit_residual_rms < 1e-12);
}

TEST_CASE("noisy affine data is recovered within five percent") {
    const auto samples = exact_affine_samples(1.1, 0.002, 0.01, 50, 33, 0.002);
    const auto k = fit_drm(samples);
    CHECK(std::abs(k.a - 1.1) / 1.1 < 0.05);
    CHECK(std::abs(k.b - 0.002) / 0.002 < 0.05);
    CHECK(std::abs(k.c - 0.01) / 0.01 < 0.05);
}

TEST_CASE("map application") {
    DrmCoefficients identity;
    CHECK(apply_drm(0.47, 3.0, identity) == 0.47);

    DrmCoefficients k;
    k.a = 1.1;
    k.b = 0.002;
    k.c = 0.01;
    CHECK(apply_drm(0.5, 5.0, k) == doctest::Approx(0.57));
    CHECK(apply_drm(0.99, 50.0, k) == 1.0);  // clamped
    CHECK(apply_drm(0.0, -600.0, k) == 0.0);
}

TEST_CASE("fit residual is a local minimum under coefficient perturbation") {
    const auto sp = SurrogateParams::default_preset(PlantParams{});
    const auto samples = collect_samples(sp, reachable_grid(), 17);
    const auto k = fit_drm(samples);

    auto rms = [&](double a, double b, double c) {
        double acc = 0.0;
        for (const auto& s : samples) {
            const double r = s.duty_real - a * s.duty_sim - b * s.i_out - c;
            acc += r * r;
        }
        return std::sqrt(acc / samples.size());
    };
    const double base = rms(k.a, k.b, k.c);
    CHECK(base == doctest::Approx(k.fit_residual_rms).epsilon(1e-9));
    for (double scale : {0.99, 1.01}) {
        CHECK(rms(k.a * scale, k.b, k.c) >= base);
        CHECK(rms(k.a, k.b * scale, k.c) >= base);
        CHECK(rms(k.a, k.b, k.c * scale) >= base);
    }
}

TEST_CASE("collinear current column falls back to the rank-2 model") {
    Rng rng(21);
    std::vector<SteadySample> samples;
    for (int k = 0; k < 20; ++k) {
        SteadySample s;
        s.duty_sim = rng.uniform(0.3, 0.7);
        s.i_out = 5.0;  // no variation
        s.duty_real = 1.05 * s.duty_sim + 0.02;
        samples.push_back(s);
    }
    const auto k = fit_drm(samples);
    CHECK(k.rank == 2);
    CHECK(k.b == 0.0);
    CHECK(k.a == doctest::Approx(1.05).epsilon(1e-9));
    CHECK(k.c == doctest::Approx(0.02).epsilon(1e-7));
}

TEST_CASE("fit error paths") {
    CHECK_THROWS_AS(fit_drm({}), DegenerateDesign);
    std::vector<SteadySample> two(2);
    CHECK_THROWS_AS(fit_drm(two), DegenerateDesign);

    // constant duty and constant current: nothing to regress on
    std::vector<SteadySample> flat;
    for (int k = 0; k < 10; ++k) flat.push_back({0.5, 0.45, 90.0, 5.0, 450.0});
    CHECK_THROWS_AS(fit_drm(flat), DegenerateDesign);
}

TEST_CASE("a sweep with no viable points reports no steady state") {
    const auto sp = SurrogateParams::default_preset(PlantParams{});
    SweepGrid grid;
    grid.duty_points = {0.02, 0.05, 0.08};  // cannot carry the load
    grid.power_points = {800.0};
    CHECK_THROWS_AS(collect_samples(sp, grid, 3), NoSteadyState);
}

TEST_CASE("fitted map strictly improves the scripted closed loop") {
    const auto sp = SurrogateParams::default_preset(PlantParams{});
    const auto samples = collect_samples(sp, reachable_grid(), 23);
    const auto k = fit_drm(samples);
    CHECK(k.a > 1.0);
    CHECK(k.a < 1.2);
    CHECK(k.b > 0.0);

    const double err_raw = scripted_steady_error(sp, nullptr, 500.0, 31);
    const double err_mapped = scripted_steady_error(sp, &k, 500.0, 31);
    CHECK(err_mapped < err_raw);
    CHECK(err_raw > 1.0);  // untransferred loop misses by more than a volt
}

TEST_CASE("runtime current filter smooths the mapped duty") {
    DrmCoefficients k;
    k.a = 1.0;
    k.b = 0.01;
    k.c = 0.0;
    DrmRuntime runtime(k, 1e-3);
    runtime.reset(0.0, 1e-4);
    // current jumps to 10 A: the mapped duty approaches 0.5 + 0.1 gradually
    const double first = runtime.map(0.5, 10.0);
    CHECK(first < 0.52);
    double last = first;
    for (int i = 0; i < 100; ++i) last = runtime.map(0.5, 10.0);
    CHECK(last == doctest::Approx(0.6).epsilon(1e-3));
    CHECK(runtime.filtered_current() == doctest::Approx(10.0).epsilon(1e-3));
}

TEST_CASE("sweep grid validation") {
    SweepGrid g = reachable_grid();
    g.settle_timeout_s = 0.01;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g = reachable_grid();
    g.duty_points = {1.2};
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g = reachable_grid();
    g.duty_points.clear();
    CHECK_THROWS_AS(g.validate(), ConfigError);
}

}  // TEST_SUITE
