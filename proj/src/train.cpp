#include "buckrl/train.hpp"

#include <cmath>

#include "buckrl/scenario.hpp"

namespace buckrl {

namespace {

// Greedy return averaged over the fixed ideal load-step suite.
double eval_return(const MlpQNet& net, const RunConfig& cfg) {
    const double dt = cfg.plant.dt_ctrl();
    const PlantState init = find_equilibrium(cfg.plant.v_ref / cfg.plant.v_in,
                                             cfg.eval.base_power_w, cfg.plant);
    double total = 0.0;
    for (double p_step : cfg.eval.step_powers) {
        EpisodeConfig ep;
        ep.horizon = static_cast<int>(std::lround(cfg.eval.duration_s / dt));
        ep.reset_state = init;
        ep.load.schedule = {{0.0, cfg.eval.base_power_w},
                            {cfg.eval.t_step_up, p_step},
                            {cfg.eval.t_step_down, cfg.eval.base_power_w}};
        ep.v_abort_lo = cfg.episode.v_abort_lo;
        ep.v_abort_hi = cfg.episode.v_abort_hi;
        ep.terminal_penalty = cfg.episode.terminal_penalty;
        IdealEnv env(cfg.plant, cfg.eval.n_sub);
        total += run_policy_episode(net, env, ep, cfg.reward, cfg.actions,
                                    nullptr, false)
                     .total_reward;
    }
    return total / static_cast<double>(cfg.eval.step_powers.size());
}

}  // namespace

TrainResult train_policy(const RunConfig& cfg, const ProgressFn& progress) {
    cfg.validate();
    const double dt = cfg.plant.dt_ctrl();

    MlpQNet net({6, 64, 64, cfg.actions.size()});
    Rng init_rng = Rng::stream(cfg.seed, 0);
    net.init_uniform(init_rng);

    DqnHyper hyper = cfg.dqn;
    hyper.seed = cfg.seed;
    Agent agent(std::move(net), hyper);
    Rng train_rng = Rng::stream(cfg.seed, 1);    // exploration + batch sampling
    Rng episode_rng = Rng::stream(cfg.seed, 2);  // load-step randomization

    const PlantState init = find_equilibrium(
        cfg.plant.v_ref / cfg.plant.v_in, cfg.training.base_power_w, cfg.plant);

    TrainResult out;
    out.best_eval_return = -std::numeric_limits<double>::infinity();

    for (int e = 1; e <= cfg.training.episodes; ++e) {
        const double p_step = episode_rng.uniform(cfg.training.step_power_min_w,
                                                  cfg.training.step_power_max_w);
        const double t_raw = episode_rng.uniform(cfg.training.step_time_min_s,
                                                 cfg.training.step_time_max_s);
        const double t_step = std::round(t_raw / dt) * dt;  // on the control grid

        EpisodeConfig ep;
        ep.horizon = cfg.episode.horizon;
        ep.reset_state = init;
        ep.load.schedule = {{0.0, cfg.training.base_power_w}, {t_step, p_step}};
        ep.v_abort_lo = cfg.episode.v_abort_lo;
        ep.v_abort_hi = cfg.episode.v_abort_hi;
        ep.terminal_penalty = cfg.episode.terminal_penalty;

        IdealEnv env(cfg.plant, cfg.eval.n_sub);
        const EpisodeResult res = run_episode(agent, env, ep, cfg.reward,
                                              cfg.actions, RunMode::train,
                                              train_rng, nullptr, false);

        CurvePoint pt;
        pt.episode = e;
        pt.total_reward = res.total_reward;
        pt.mean_loss = res.train_steps_done > 0
                           ? res.train_loss_sum / res.train_steps_done
                           : 0.0;

        if (e % cfg.training.eval_period == 0 || e == cfg.training.episodes) {
            pt.eval_return = eval_return(agent.net(), cfg);
            if (pt.eval_return > out.best_eval_return) {
                out.best_eval_return = pt.eval_return;
                out.best_episode = e;
                out.best.net = agent.net();
                out.best.training_steps = agent.train_steps();
            }
        }
        out.curve.push_back(pt);
        if (progress) progress(pt);
    }

    out.total_train_steps = agent.train_steps();
    out.best.hyper = hyper;
    out.best.seed = cfg.seed;
    out.best.config_hash = config_hash(cfg);
    return out;
}

}  // namespace buckrl
