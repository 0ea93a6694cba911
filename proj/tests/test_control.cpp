#include <doctest.h>

#include <cmath>

#include "buckrl/control.hpp"
#include "buckrl/dqn.hpp"

using namespace buckrl;

namespace {

MlpQNet small_net(int n_actions, std::uint64_t seed) {
    MlpQNet net({6, 8, 8, n_actions});
    Rng rng(seed);
    net.init_uniform(rng);
    return net;
}

EpisodeConfig short_episode(const PlantParams& p, int horizon, double p_load) {
    EpisodeConfig ep;
    ep.horizon = horizon;
    ep.reset_state = find_equilibrium(0.5, p_load, p);
    ep.load = CplProfile::constant(p_load);
    return ep;
}

}  // namespace

TEST_SUITE("control") {

TEST_CASE("observation at steady state") {
    const Observation o = observe(100.0, 100.0, 100.0, 1e-4);
    CHECK(o.v_o == 100.0);
    CHECK(o.v_o_prev == 100.0);
    CHECK(o.dv_dt == 0.0);
    CHECK(o.err == 0.0);
    CHECK(o.err_prev == 0.0);
    CHECK(o.derr_dt == 0.0);
}

TEST_CASE("observation difference quotients") {
    const Observation o = observe(100.0, 99.0, 100.0, 1e-4);
    CHECK(o.dv_dt == doctest::Approx(1e4));
    CHECK(o.err == doctest::Approx(0.0));
    CHECK(o.err_prev == doctest::Approx(-1.0));
    CHECK(o.derr_dt == doctest::Approx(1e4));
}

TEST_CASE("error and voltage slopes coincide for a constant reference") {
    Rng rng(5);
    for (int k = 0; k < 100; ++k) {
        const double v_now = rng.uniform(50.0, 150.0);
        const double v_prev = rng.uniform(50.0, 150.0);
        const Observation o = observe(v_now, v_prev, 100.0, 1e-4);
        CHECK(o.err == doctest::Approx(o.v_o - 100.0));
        CHECK(o.derr_dt == doctest::Approx(o.dv_dt));
    }
}

TEST_CASE("action decode against the plant's sign convention") {
    ActionTable table;
    table.entries = {{0.5, 0.02}};
    table.deadband_v = 0.05;

    // undervoltage must raise the duty: a higher duty raises v_o on the
    // ideal plant, so the correction fights the error
    const PlantParams p;
    const auto load = CplProfile::constant(200.0);
    PlantState base = find_equilibrium(0.5, 200.0, p);
    const PlantState up = step(base, 0.52, load, p, p.dt_ctrl());
    const PlantState hold = step(base, 0.50, load, p, p.dt_ctrl());
    CHECK(up.v_o > hold.v_o);

    CHECK(decode_action(0, table, -2.0).duty == doctest::Approx(0.52));
    CHECK(decode_action(0, table, 2.0).duty == doctest::Approx(0.48));
    CHECK(decode_action(0, table, 0.03).duty == doctest::Approx(0.5));
    CHECK(decode_action(0, table, -0.05).duty == doctest::Approx(0.5));
}

TEST_CASE("action decode clamps and flags saturation") {
    ActionTable table;
    table.entries = {{0.99, 0.05}};
    table.deadband_v = 0.05;
    const auto d = decode_action(0, table, -3.0);
    CHECK(d.duty == 1.0);
    CHECK(d.saturated);
    const auto ok = decode_action(0, table, 3.0);
    CHECK(ok.duty == doctest::Approx(0.94));
    CHECK(!ok.saturated);
}

TEST_CASE("action table validation and reachable duties") {
    ActionTable t = ActionTable::defaults();
    t.validate();
    const auto duties = t.reachable_duties();
    CHECK(duties.front() >= 0.0);
    CHECK(duties.back() <= 1.0);
    CHECK(std::is_sorted(duties.begin(), duties.end()));

    ActionTable bad;
    bad.entries = {{0.9, 0.2}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    ActionTable dup;
    dup.entries = {{0.5, 0.1}, {0.5, 0.1}};
    CHECK_THROWS_AS(dup.validate(), ConfigError);
}

TEST_CASE("reward branches with the bench constants") {
    const RewardConfig cfg;
    CHECK(reward(0.05, cfg) == doctest::Approx(9.5));    // 10 - 10*0.05
    CHECK(reward(0.5, cfg) == doctest::Approx(-4.0));    // 1 - 10*0.5
    CHECK(reward(-2.0, cfg) == doctest::Approx(-20.0));  // -10*2
}

TEST_CASE("reward branch boundaries are exact") {
    const RewardConfig cfg;
    // |e| = tight band: second branch (strict first bound)
    CHECK(reward(0.1, cfg) == doctest::Approx(1.0 - 10.0 * 0.1));
    // |e| = loose band: still the second branch (inclusive)
    CHECK(reward(1.0, cfg) == doctest::Approx(1.0 - 10.0));
    // just beyond: third branch
    CHECK(reward(1.0 + 1e-9, cfg) == doctest::Approx(-10.0 * (1.0 + 1e-9)));
    CHECK(reward(0.1 - 1e-9, cfg) == doctest::Approx(10.0 - 10.0 * (0.1 - 1e-9)));
}

TEST_CASE("reward symmetry and monotonicity within branches") {
    const RewardConfig cfg;
    Rng rng(17);
    for (int k = 0; k < 300; ++k) {
        const double e = rng.uniform(-30.0, 30.0);
        CHECK(reward(e, cfg) == reward(-e, cfg));
    }
    // strictly decreasing in |e| inside each branch
    for (auto [lo, hi] : {std::pair{0.0, 0.1}, {0.1, 1.0}, {1.0, 30.0}}) {
        double prev = reward(lo + 1e-12, cfg);
        for (int k = 1; k <= 20; ++k) {
            const double e = lo + (hi - lo) * k / 20.0 - 1e-12;
            const double r = reward(e, cfg);
            CHECK(r < prev);
            prev = r;
        }
    }
}

TEST_CASE("horizon one yields exactly one transition") {
    const PlantParams p;
    DqnHyper hyper;
    hyper.batch_size = 4;
    Agent agent(small_net(3, 1), hyper);
    ActionTable table;
    table.entries = {{0.5, 0.005}, {0.5, 0.02}, {0.5, 0.1}};

    IdealEnv env(p);
    Rng rng(2);
    const auto res = run_episode(agent, env, short_episode(p, 1, 200.0),
                                 RewardConfig{}, table, RunMode::train, rng);
    CHECK(res.steps == 1);
    CHECK(agent.memory().size() == 1);
    CHECK(res.trace.size() == 1);
    CHECK(agent.memory().at(0).terminal);  // horizon end marks terminal
}

TEST_CASE("eval mode mutates neither network nor replay memory") {
    const PlantParams p;
    DqnHyper hyper;
    hyper.batch_size = 4;
    Agent agent(small_net(3, 3), hyper);
    ActionTable table;
    table.entries = {{0.5, 0.005}, {0.5, 0.02}, {0.5, 0.1}};

    const auto w_before = agent.net().weights();
    IdealEnv env(p);
    Rng rng(4);
    const auto res = run_episode(agent, env, short_episode(p, 50, 200.0),
                                 RewardConfig{}, table, RunMode::eval, rng);
    CHECK(res.steps == 50);
    CHECK(agent.memory().size() == 0);
    for (std::size_t l = 0; l < w_before.size(); ++l)
        CHECK(agent.net().weights()[l] == w_before[l]);
}

TEST_CASE("training episodes reproduce bit for bit under one seed") {
    const PlantParams p;
    ActionTable table;
    table.entries = {{0.5, 0.005}, {0.5, 0.02}, {0.45, 0.02}, {0.55, 0.02}};

    auto run = [&] {
        DqnHyper hyper;
        hyper.batch_size = 16;
        Agent agent(small_net(4, 11), hyper);
        IdealEnv env(p);
        Rng rng(12);
        EpisodeConfig ep = short_episode(p, 120, 300.0);
        return run_episode(agent, env, ep, RewardConfig{}, table,
                           RunMode::train, rng);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].v_o == b.trace[i].v_o);
        CHECK(a.trace[i].action == b.trace[i].action);
        CHECK(a.trace[i].reward == b.trace[i].reward);
    }
    CHECK(a.total_reward == b.total_reward);
}

TEST_CASE("abort bounds terminate with the configured penalty") {
    const PlantParams p;
    DqnHyper hyper;
    hyper.batch_size = 4;
    Agent agent(small_net(1, 21), hyper);
    ActionTable table;
    table.entries = {{1.0, 0.0}};  // slam high: voltage runs away upward

    EpisodeConfig ep = short_episode(p, 3000, 0.0);
    IdealEnv env(p);
    Rng rng(22);
    const auto res = run_episode(agent, env, ep, RewardConfig{}, table,
                                 RunMode::train, rng);
    CHECK(res.aborted);
    CHECK(res.steps < 3000);
    CHECK(res.trace.back().reward == ep.terminal_penalty);
    CHECK(agent.memory().at(agent.memory().size() - 1).terminal);
    CHECK(res.trace.back().v_o >= ep.v_abort_hi);
}

TEST_CASE("episode validation") {
    const PlantParams p;
    EpisodeConfig ep = short_episode(p, 0, 200.0);
    CHECK_THROWS_AS(ep.validate(p.v_ref), ConfigError);
    ep = short_episode(p, 10, 200.0);
    ep.v_abort_lo = 120.0;
    CHECK_THROWS_AS(ep.validate(p.v_ref), ConfigError);
}

TEST_CASE("feature scaling keeps channels near unit magnitude") {
    const Observation o = observe(95.0, 96.0, 100.0, 1e-4);
    const Vec6 f = to_features(o);
    CHECK(f[0] == doctest::Approx(0.95));
    CHECK(f[1] == doctest::Approx(0.96));
    CHECK(f[2] == doctest::Approx(-0.1));   // -1e4 V/s * 1e-5
    CHECK(f[3] == doctest::Approx(-0.5));
    CHECK(f[4] == doctest::Approx(-0.4));
    CHECK(f[5] == doctest::Approx(-0.1));
}

}  // TEST_SUITE
