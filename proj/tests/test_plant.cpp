#include <doctest.h>

#include <array>
#include <cmath>

#include "buckrl/plant.hpp"
#include "buckrl/rng.hpp"

using namespace buckrl;

namespace {

PlantParams table_params() {
    PlantParams p;  // defaults are the bench values
    return p;
}

// Independent 2x2 matrix exponential via scaling-and-squaring Taylor, for
// the closed-form linear RLC solution. Lives only in tests.
struct Mat2 {
    double a, b, c, d;
    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c,
                c * o.b + d * o.d};
    }
    std::array<double, 2> operator*(const std::array<double, 2>& v) const {
        return {a * v[0] + b * v[1], c * v[0] + d * v[1]};
    }
};

Mat2 expm2(Mat2 m) {
    const double norm =
        std::max(std::abs(m.a) + std::abs(m.b), std::abs(m.c) + std::abs(m.d));
    int squarings = 0;
    while (norm / std::pow(2.0, squarings) > 0.5) ++squarings;
    const double scale = std::pow(2.0, -squarings);
    Mat2 x{m.a * scale, m.b * scale, m.c * scale, m.d * scale};
    Mat2 acc{1, 0, 0, 1};
    Mat2 term{1, 0, 0, 1};
    for (int k = 1; k <= 24; ++k) {
        term = term * x;
        const double f = 1.0;
        term = {term.a / k, term.b / k, term.c / k, term.d / k};
        (void)f;
        acc = {acc.a + term.a, acc.b + term.b, acc.c + term.c, acc.d + term.d};
    }
    for (int s = 0; s < squarings; ++s) acc = acc * acc;
    return acc;
}

// x(t) = x* + e^{At} (x0 - x*) for the no-CPL linear model.
std::array<double, 2> rlc_exact(const PlantParams& p, double duty, double t,
                                std::array<double, 2> x0) {
    const Mat2 a{0.0, -1.0 / p.L, 1.0 / p.C, -1.0 / (p.R * p.C)};
    const double v_star = duty * p.v_in;
    const std::array<double, 2> x_star{v_star / p.R, v_star};
    const Mat2 phi = expm2({a.a * t, a.b * t, a.c * t, a.d * t});
    const auto dx = phi * std::array<double, 2>{x0[0] - x_star[0], x0[1] - x_star[1]};
    return {x_star[0] + dx[0], x_star[1] + dx[1]};
}

}  // namespace

TEST_SUITE("plant") {

TEST_CASE("cpl current law") {
    CHECK(cpl_current(500.0, 100.0) == doctest::Approx(5.0));
    CHECK(cpl_current(0.0, 100.0) == 0.0);
    CHECK(cpl_current(800.0, 100.0) == doctest::Approx(8.0));
    CHECK_THROWS_AS(cpl_current(500.0, 10.0), VoltageCollapse);
    CHECK_THROWS_AS(cpl_current(500.0, 3.0), VoltageCollapse);
    // no power drawn: the law degenerates to zero without tripping
    CHECK(cpl_current(0.0, 0.0) == 0.0);
}

TEST_CASE("ideal derivatives vanish at the equilibrium") {
    PlantParams p = table_params();
    p.R = 200.0;
    const double P = 500.0;
    const PlantState s{100.0 / p.R + P / 100.0, 100.0, 0.0};
    const auto d = ideal_derivatives(s, 0.5, P, p);
    CHECK(d.di_l_dt == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(d.dv_o_dt) < 1e-9);
}

TEST_CASE("ideal derivatives zero-state symmetry") {
    const PlantParams p = table_params();  // R = inf
    const auto d = ideal_derivatives({0.0, 100.0, 0.0}, 0.5, 0.0, p);
    CHECK(d.di_l_dt == 0.0);
    CHECK(d.dv_o_dt == 0.0);
}

TEST_CASE("ideal derivatives match an independently coded formula") {
    PlantParams p = table_params();
    p.R = 47.0;
    Rng rng(11);
    for (int k = 0; k < 200; ++k) {
        const PlantState s{rng.uniform(-20.0, 20.0), rng.uniform(15.0, 190.0), 0.0};
        const double duty = rng.uniform(0.0, 1.0);
        const double P = rng.uniform(0.0, 1200.0);
        const auto d = ideal_derivatives(s, duty, P, p);
        const double di = duty * p.v_in / p.L - s.v_o / p.L;
        const double dv = (s.i_l - s.v_o / p.R - P / s.v_o) / p.C;
        CHECK(d.di_l_dt == doctest::Approx(di).epsilon(1e-12));
        CHECK(d.dv_o_dt == doctest::Approx(dv).epsilon(1e-12));
    }
}

TEST_CASE("step matches the closed-form linear response") {
    PlantParams p = table_params();
    p.R = 100.0;
    const auto load = CplProfile::constant(0.0);
    const double duty = 0.5;

    PlantState s{0.0, 0.0, 0.0};
    const double dt = p.dt_ctrl();
    for (int k = 0; k < 50; ++k) s = step(s, duty, load, p, dt);

    const auto exact = rlc_exact(p, duty, 5e-3, {0.0, 0.0});
    CHECK(s.t == doctest::Approx(5e-3));
    CHECK(std::abs(s.v_o - exact[1]) / std::abs(exact[1]) < 1e-6);
    CHECK(std::abs(s.i_l - exact[0]) / std::max(std::abs(exact[0]), 1.0) < 1e-6);
}

TEST_CASE("halving the substep shrinks the error fourth-order") {
    PlantParams p = table_params();
    p.R = 100.0;
    const auto load = CplProfile::constant(0.0);
    const double duty = 0.5;
    const double dt = p.dt_ctrl();

    auto run = [&](int n_sub) {
        PlantState s{0.0, 0.0, 0.0};
        for (int k = 0; k < 50; ++k) s = step(s, duty, load, p, dt, n_sub);
        return s;
    };
    const auto exact = rlc_exact(p, duty, 5e-3, {0.0, 0.0});
    const auto err = [&](const PlantState& s) {
        return std::hypot(s.i_l - exact[0], s.v_o - exact[1]);
    };
    const double e1 = err(run(10));
    const double e2 = err(run(20));
    const double order = std::log2(e1 / e2);
    CHECK(order > 3.7);
    CHECK(order < 4.3);
}

TEST_CASE("step preconditions") {
    const PlantParams p = table_params();
    const auto load = CplProfile::constant(0.0);
    CHECK_THROWS_AS(step({0, 100, 0}, 0.5, load, p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(step({0, 100, 0}, 1.5, load, p, p.dt_ctrl()),
                    std::invalid_argument);
    CHECK(p.dt_ctrl() == doctest::Approx(100e-6));
}

TEST_CASE("step flags numerical blowup") {
    const PlantParams p = table_params();
    const auto load = CplProfile::constant(0.0);
    CHECK_THROWS_AS(step({1e308, 100.0, 0.0}, 0.5, load, p, p.dt_ctrl()),
                    NumericalDivergence);
}

TEST_CASE("lossless model balances stored energy against source work") {
    const PlantParams p = table_params();  // R = inf, no dissipation
    const double duty = 0.5;
    const double h = p.dt_ctrl() / 10.0;

    // augmented test-side integration: [i_l, v_o, source work]
    std::array<double, 3> x{2.0, 80.0, 0.0};
    auto rhs = [&](const std::array<double, 3>& y) {
        return std::array<double, 3>{(p.v_in * duty - y[1]) / p.L, y[0] / p.C,
                                     p.v_in * duty * y[0]};
    };
    auto rk4 = [&](std::array<double, 3> y) {
        const auto k1 = rhs(y);
        std::array<double, 3> t;
        for (int i = 0; i < 3; ++i) t[i] = y[i] + 0.5 * h * k1[i];
        const auto k2 = rhs(t);
        for (int i = 0; i < 3; ++i) t[i] = y[i] + 0.5 * h * k2[i];
        const auto k3 = rhs(t);
        for (int i = 0; i < 3; ++i) t[i] = y[i] + h * k3[i];
        const auto k4 = rhs(t);
        for (int i = 0; i < 3; ++i)
            y[i] += (h / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        return y;
    };

    // the plant must follow the same trajectory
    const auto load = CplProfile::constant(0.0);
    PlantState s{x[0], x[1], 0.0};
    const double e0 = 0.5 * p.L * x[0] * x[0] + 0.5 * p.C * x[1] * x[1];
    for (int step_i = 0; step_i < 200; ++step_i) {
        for (int sub = 0; sub < 10; ++sub) x = rk4(x);
        s = step(s, duty, load, p, p.dt_ctrl());
        CHECK(s.i_l == doctest::Approx(x[0]).epsilon(1e-10));
        CHECK(s.v_o == doctest::Approx(x[1]).epsilon(1e-10));
    }
    const double e1 = 0.5 * p.L * x[0] * x[0] + 0.5 * p.C * x[1] * x[1];
    CHECK(e1 - e0 == doctest::Approx(x[2]).epsilon(1e-7));
}

TEST_CASE("load schedule sampling") {
    CplProfile load;
    load.schedule = {{0.0, 200.0}, {0.14, 500.0}, {0.2, 200.0}};
    load.validate();
    CHECK(load.power_at(0.0) == 200.0);
    CHECK(load.power_at(0.13999) == 200.0);
    CHECK(load.power_at(0.14) == 500.0);  // the new power applies at the switch
    CHECK(load.power_at(0.17) == 500.0);
    CHECK(load.power_at(0.25) == 200.0);
    // reconstructed control instants stay on the intended side
    double t = 0.0;
    for (int k = 0; k < 1400; ++k) t += 1e-4;
    CHECK(load.power_at(t) == 500.0);

    // applied power times load current is the scheduled power
    const PlantParams p = table_params();
    PlantState s = find_equilibrium(0.5, 200.0, p);
    const double applied = load.power_at(s.t);
    CHECK(cpl_current(applied, s.v_o) * s.v_o == doctest::Approx(applied).epsilon(1e-9));

    CplProfile bad;
    bad.schedule = {{0.0, 200.0}, {0.0, 500.0}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("load schedule with slew ramps between powers") {
    CplProfile load;
    load.schedule = {{0.0, 200.0}, {0.1, 1000.0}};
    const double slew = 2e6;
    CHECK(load.power_at(0.09, slew) == 200.0);
    CHECK(load.power_at(0.1 + 1e-4, slew) == doctest::Approx(400.0).epsilon(1e-6));
    CHECK(load.power_at(0.1 + 2e-4, slew) == doctest::Approx(600.0).epsilon(1e-6));
    CHECK(load.power_at(0.1 + 4e-4, slew) == doctest::Approx(1000.0));
    CHECK(load.power_at(0.2, slew) == 1000.0);
    CHECK(load.power_at(0.2, 0.0) == 1000.0);  // slew disabled
}

TEST_CASE("deterministic stepping") {
    const PlantParams p = table_params();
    const auto load = CplProfile::constant(300.0);
    PlantState a = find_equilibrium(0.5, 300.0, p);
    PlantState b = a;
    for (int k = 0; k < 100; ++k) {
        a = step(a, 0.52, load, p, p.dt_ctrl());
        b = step(b, 0.52, load, p, p.dt_ctrl());
        CHECK(a.i_l == b.i_l);
        CHECK(a.v_o == b.v_o);
    }
}

TEST_CASE("ideal equilibria") {
    const PlantParams p = table_params();
    const PlantState no_load = find_equilibrium(0.5, 0.0, p);
    CHECK(no_load.v_o == doctest::Approx(100.0));
    CHECK(no_load.i_l == doctest::Approx(0.0));

    const PlantState loaded = find_equilibrium(0.5, 500.0, p);
    CHECK(loaded.v_o == doctest::Approx(100.0));
    CHECK(loaded.i_l == doctest::Approx(5.0));

    Rng rng(5);
    for (int k = 0; k < 50; ++k) {
        const double duty = rng.uniform(0.2, 0.9);
        const double P = rng.uniform(0.0, 1000.0);
        const PlantState eq = find_equilibrium(duty, P, p);
        const auto d = ideal_derivatives(eq, duty, P, p);
        CHECK(std::abs(d.di_l_dt) < 1e-9);
        CHECK(std::abs(d.dv_o_dt) < 1e-9);
    }

    CHECK_THROWS_AS(find_equilibrium(0.04, 500.0, p), NoEquilibrium);
}

TEST_CASE("zero-mismatch surrogate reproduces the ideal model bit for bit") {
    // shunt-damped operating point: the pure-CPL fixed-duty spiral is a
    // real instability and would collapse a long open-loop run
    PlantParams p = table_params();
    p.R = 40.0;
    const SurrogateParams sp = SurrogateParams::ideal(p);
    CplProfile load;
    load.schedule = {{0.0, 100.0}, {0.05, 150.0}};

    PlantState ideal_s = find_equilibrium(0.5, 100.0, p);
    SurrogateState sur{ideal_s, 0.0};
    Rng duty_rng(3);
    for (int k = 0; k < 800; ++k) {
        const double duty = 0.45 + 0.1 * duty_rng.uniform();
        ideal_s = step(ideal_s, duty, load, p, p.dt_ctrl());
        sur = surrogate_step(sur, duty, load, sp, p.dt_ctrl());
        REQUIRE(sur.s.i_l == ideal_s.i_l);
        REQUIRE(sur.s.v_o == ideal_s.v_o);
    }
}

TEST_CASE("default preset sags more than a volt at nominal duty") {
    const PlantParams p = table_params();
    const SurrogateParams sp = SurrogateParams::default_preset(p);

    // quadratic balance solved independently of find_surrogate_equilibrium
    const double d_eff = sp.duty_gain * 0.5 + sp.duty_offset;
    const double r_s = sp.r_inductor + d_eff * sp.r_switch_on;
    const double v_eff = p.v_in * d_eff - (1.0 - d_eff) * sp.v_diode;
    const double disc = v_eff * v_eff - 4.0 * 500.0 * r_s;
    const double v_expect = 0.5 * (v_eff + std::sqrt(disc));

    const auto eq = find_surrogate_equilibrium(0.5, 500.0, sp);
    CHECK(eq.s.v_o == doctest::Approx(v_expect).epsilon(1e-12));
    CHECK(eq.s.v_o < 99.0);  // untransferred steady error exceeds 1 V

    // and the simulated plant actually lands there
    Surrogate plant(sp, 99);
    const auto load = CplProfile::constant(500.0);
    plant.reset(find_equilibrium(0.5, 500.0, p), load);
    double mean = 0.0;
    const int settle_steps = 4000, window = 500;
    for (int k = 0; k < settle_steps; ++k) plant.step(0.5, load);
    for (int k = 0; k < window; ++k) mean += plant.step(0.5, load);
    mean /= window;
    CHECK(mean == doctest::Approx(v_expect).epsilon(2e-3));
}

TEST_CASE("surrogate steady state is monotone in duty") {
    const PlantParams p = table_params();
    const SurrogateParams sp = SurrogateParams::default_preset(p);
    double prev_analytic = 0.0;
    double prev_sim = 0.0;
    bool first = true;
    for (double duty : {0.38, 0.44, 0.50, 0.56, 0.62}) {
        const auto eq = find_surrogate_equilibrium(duty, 500.0, sp);

        Surrogate plant(sp, 7);
        const auto load = CplProfile::constant(500.0);
        plant.reset(find_equilibrium(duty, 500.0, p), load);
        double mean = 0.0;
        for (int k = 0; k < 3000; ++k) plant.step(duty, load);
        for (int k = 0; k < 500; ++k) mean += plant.step(duty, load);
        mean /= 500;

        if (!first) {
            CHECK(eq.s.v_o > prev_analytic);
            CHECK(mean > prev_sim);
        }
        prev_analytic = eq.s.v_o;
        prev_sim = mean;
        first = false;
    }
}

TEST_CASE("surrogate equilibrium self-consistency and failure modes") {
    const PlantParams p = table_params();
    const SurrogateParams sp = SurrogateParams::default_preset(p);
    const auto eq = find_surrogate_equilibrium(0.55, 800.0, sp);
    const auto d = surrogate_derivatives(eq, 0.55, 800.0, sp);
    CHECK(std::abs(d.di_l_dt) < 1e-9);
    CHECK(std::abs(d.dv_o_dt) < 1e-9);
    CHECK_THROWS_AS(find_surrogate_equilibrium(0.18, 900.0, sp), NoEquilibrium);
}

TEST_CASE("surrogate measurement noise is deterministic under the seed") {
    const PlantParams p = table_params();
    const SurrogateParams sp = SurrogateParams::default_preset(p);
    const auto load = CplProfile::constant(500.0);
    auto run = [&](std::uint64_t seed) {
        Surrogate plant(sp, seed);
        plant.reset(find_equilibrium(0.5, 500.0, p), load);
        std::vector<double> vs;
        for (int k = 0; k < 50; ++k) vs.push_back(plant.step(0.5, load));
        return vs;
    };
    const auto a = run(42), b = run(42), c = run(43);
    CHECK(a == b);
    CHECK(a != c);
}

}  // TEST_SUITE
