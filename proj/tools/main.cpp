// buckrl — train a DQN voltage controller on the ideal buck model, fit the
// steady-state duty map against the hardware surrogate, and evaluate the
// transferred policy. Subcommands mirror the four-stage workflow:
//   train -> eval (no map) -> drm-fit -> eval --drm map.json
#include <CLI11.hpp>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include <fmt/format.h>

#include "buckrl/artifacts.hpp"
#include "buckrl/config.hpp"
#include "buckrl/scenario.hpp"
#include "buckrl/svg.hpp"
#include "buckrl/train.hpp"
#include "buckrl/transfer.hpp"

namespace fs = std::filesystem;
using namespace buckrl;

namespace {

// exit codes: 0 ok, 1 other, 2 validation, 3 numerical, 4 scenario failure
constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitScenario = 4;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed_override = -1;
    int jobs = 1;
};

std::string resolve_out_dir(const CommonOpts& opts, const char* subcommand) {
    if (!opts.out_dir.empty()) return opts.out_dir;
    if (const char* root = std::getenv("BUCKRL_OUT_ROOT"))
        return (fs::path(root) / subcommand).string();
    return (fs::path("runs") / subcommand).string();
}

RunConfig load_effective_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty() ? default_config()
                                             : load_config(opts.config_path);
    if (opts.seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(opts.seed_override);
        cfg.dqn.seed = cfg.seed;
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "run configuration file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed_override, "override the config seed");
    cmd->add_option("--out", opts.out_dir,
                    "output directory (default $BUCKRL_OUT_ROOT/<cmd>)");
    cmd->add_option("--jobs", opts.jobs, "parallel scenarios / sweep points")
        ->check(CLI::PositiveNumber);
}

int cmd_train(const CommonOpts& opts) {
    const RunConfig cfg = load_effective_config(opts);
    const fs::path out(resolve_out_dir(opts, "train"));
    fs::create_directories(out);

    fmt::print("training: {} episodes of {} steps, seed {}\n",
               cfg.training.episodes, cfg.episode.horizon, cfg.seed);
    const TrainResult result = train_policy(cfg, [&](const CurvePoint& pt) {
        if (!std::isnan(pt.eval_return))
            fmt::print("  episode {:>4}  return {:>10.1f}  loss {:>9.4f}  eval {:>10.1f}\n",
                       pt.episode, pt.total_reward, pt.mean_loss, pt.eval_return);
    });

    save_checkpoint((out / "checkpoint.json").string(), result.best);
    write_curve_csv((out / "training_curve.csv").string(), result.curve);
    write_text_file((out / "config_used.toml").string(), config_to_toml(cfg));
    fmt::print("best eval return {:.1f} at episode {} ({} training steps)\n",
               result.best_eval_return, result.best_episode,
               result.total_train_steps);
    fmt::print("checkpoint: {}\n", (out / "checkpoint.json").string());
    return kExitOk;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path,
             const std::string& plant_kind, const std::string& drm_path) {
    const RunConfig cfg = load_effective_config(opts);
    const fs::path out(resolve_out_dir(opts, "eval"));
    fs::create_directories(out);

    const Checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.net.output_dim() != cfg.actions.size())
        throw ConfigError(fmt::format(
            "actions.entries: checkpoint has {} actions, config {}",
            ck.net.output_dim(), cfg.actions.size()));
    const std::string ck_hash = hash_file(checkpoint_path);
    const std::string cfg_hash = config_hash(cfg);

    const bool drm_on = !drm_path.empty();
    std::optional<DrmArtifact> drm;
    if (drm_on) drm = load_drm(drm_path);

    const auto plant = plant_kind == "surrogate" ? Scenario::PlantKind::surrogate
                                                 : Scenario::PlantKind::ideal;
    const auto suite = make_scenario_suite(cfg.eval, plant, drm_on, cfg.seed);

    std::vector<ScenarioResult> results(suite.size());
    std::atomic<std::size_t> next{0};
    const int n_threads =
        std::max(1, std::min<int>(opts.jobs, static_cast<int>(suite.size())));
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < suite.size();
             i = next.fetch_add(1))
            results[i] = run_scenario(ck.net, cfg.plant, cfg.surrogate,
                                      cfg.actions, cfg.reward, cfg.eval,
                                      suite[i], drm ? &drm->coefficients : nullptr);
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (const auto& res : results) {
        const std::string stem =
            fmt::format("{}_{}_{}", res.scenario.name, plant_kind,
                        drm_on ? "drm" : "nodrm");
        write_trace_csv((out / (stem + ".trace.csv")).string(), res.trace);
        write_scenario_svg((out / (stem + ".svg")).string(), res, cfg.plant.v_ref);
        ScenarioMeta meta;
        meta.scenario = res.scenario;
        meta.v_ref = cfg.plant.v_ref;
        meta.settle_band_v = cfg.eval.settle_band_v;
        meta.ss_window_frac = cfg.eval.ss_window_frac;
        meta.config_hash = cfg_hash;
        meta.checkpoint_hash = ck_hash;
        write_text_file((out / (stem + ".scenario.json")).string(),
                        scenario_meta_to_json(meta));
    }
    write_metrics_json((out / "metrics.json").string(), results, cfg_hash, ck_hash);
    write_text_file((out / "config_used.toml").string(), config_to_toml(cfg));
    fmt::print("{}", metrics_summary_table(results));
    fmt::print("reports in {}\n", out.string());

    for (const auto& res : results)
        if (res.collapsed) return kExitScenario;
    return kExitOk;
}

int cmd_drm_fit(const CommonOpts& opts, const std::string& preset,
                const std::string& checkpoint_path) {
    RunConfig cfg = load_effective_config(opts);
    if (!preset.empty()) {
        cfg.surrogate_preset = preset;
        cfg.surrogate = preset == "ideal"
                            ? SurrogateParams::ideal(cfg.plant)
                            : SurrogateParams::default_preset(cfg.plant);
        cfg.validate();
    }
    const fs::path out(resolve_out_dir(opts, "drm"));
    fs::create_directories(out);

    const SweepGrid grid = cfg.effective_sweep();
    SweepDiagnostics diag;
    const auto samples =
        collect_samples(cfg.surrogate, grid, cfg.seed, &diag, opts.jobs);
    const DrmCoefficients k = fit_drm(samples);

    DrmArtifact art;
    art.coefficients = k;
    art.grid = grid;
    art.surrogate_preset_id = cfg.surrogate_preset;
    art.created_from =
        checkpoint_path.empty() ? "unspecified" : hash_file(checkpoint_path);
    art.config_hash = config_hash(cfg);
    save_drm((out / "drm.json").string(), art);
    write_samples_csv((out / "samples.csv").string(), samples);
    write_text_file((out / "config_used.toml").string(), config_to_toml(cfg));

    fmt::print("sweep: {} of {} grid points settled\n", diag.settled,
               diag.attempted);
    fmt::print("duty map: d_real = {:.6f}*d_sim + {:.6g}*i_o + {:.6g}  "
               "(residual rms {:.3g}, {} samples, rank {})\n",
               k.a, k.b, k.c, k.fit_residual_rms, k.n_samples, k.rank);
    fmt::print("artifact: {}\n", (out / "drm.json").string());
    return kExitOk;
}

int cmd_report(const std::string& run_dir) {
    const fs::path dir(run_dir);
    if (!fs::is_directory(dir))
        throw ConfigError(fmt::format("report: not a directory: {}", run_dir));

    std::vector<ScenarioResult> results;
    std::string cfg_hash, ck_hash;
    std::vector<fs::path> metas;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.size() > 14 && name.ends_with(".scenario.json"))
            metas.push_back(entry.path());
    }
    std::sort(metas.begin(), metas.end());
    for (const auto& meta_path : metas) {
        const ScenarioMeta meta =
            scenario_meta_from_json(read_text_file(meta_path.string()));
        const std::string stem =
            meta_path.filename().string().substr(
                0, meta_path.filename().string().size() - 14);
        ScenarioResult res;
        res.scenario = meta.scenario;
        res.trace = read_trace_csv((dir / (stem + ".trace.csv")).string());
        res.segments = compute_metrics(res.trace, meta.scenario.load, meta.v_ref,
                                       meta.scenario.duration_s,
                                       meta.settle_band_v, meta.ss_window_frac);
        write_scenario_svg((dir / (stem + ".svg")).string(), res, meta.v_ref);
        cfg_hash = meta.config_hash;
        ck_hash = meta.checkpoint_hash;
        results.push_back(std::move(res));
    }
    if (results.empty())
        throw ConfigError("report: no *.scenario.json files in the run directory");
    write_metrics_json((dir / "metrics.json").string(), results, cfg_hash, ck_hash);
    fmt::print("{}", metrics_summary_table(results));
    fmt::print("regenerated metrics.json and plots in {}\n", dir.string());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DQN buck-converter voltage control with steady-state duty-ratio transfer"};
    app.require_subcommand(1);

    CommonOpts train_opts;
    auto* train = app.add_subcommand("train", "train the controller on the ideal plant");
    add_common(train, train_opts);

    CommonOpts eval_opts;
    std::string eval_checkpoint, eval_plant = "ideal", eval_drm;
    auto* eval = app.add_subcommand("eval", "run the load-step scenario suite");
    add_common(eval, eval_opts);
    eval->add_option("--checkpoint", eval_checkpoint, "trained policy checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--plant", eval_plant, "which plant to run against")
        ->check(CLI::IsMember({"ideal", "surrogate"}));
    eval->add_option("--drm", eval_drm, "duty map artifact; enables the mapping")
        ->check(CLI::ExistingFile);

    CommonOpts drm_opts;
    std::string drm_preset, drm_checkpoint;
    auto* drm = app.add_subcommand("drm-fit",
                                   "sweep the surrogate and fit the duty map");
    add_common(drm, drm_opts);
    drm->add_option("--surrogate", drm_preset, "surrogate preset override")
        ->check(CLI::IsMember({"default", "ideal"}));
    drm->add_option("--checkpoint", drm_checkpoint,
                    "checkpoint whose hash the artifact records")
        ->check(CLI::ExistingFile);

    std::string report_dir;
    auto* report = app.add_subcommand(
        "report", "recompute metrics and plots from stored traces");
    report->add_option("--run", report_dir, "directory written by eval")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(train_opts);
        if (app.got_subcommand(eval))
            return cmd_eval(eval_opts, eval_checkpoint, eval_plant, eval_drm);
        if (app.got_subcommand(drm))
            return cmd_drm_fit(drm_opts, drm_preset, drm_checkpoint);
        if (app.got_subcommand(report)) return cmd_report(report_dir);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "configuration error: {}\n", e.what());
        return kExitValidation;
    } catch (const VoltageCollapse& e) {
        fmt::print(stderr, "scenario failure: {}\n", e.what());
        return kExitScenario;
    } catch (const NumericalDivergence& e) {
        fmt::print(stderr, "numerical failure: {}\n", e.what());
        return kExitNumerical;
    } catch (const NoEquilibrium& e) {
        fmt::print(stderr, "numerical failure: {}\n", e.what());
        return kExitNumerical;
    } catch (const NoSteadyState& e) {
        fmt::print(stderr, "numerical failure: {}\n", e.what());
        return kExitNumerical;
    } catch (const DegenerateDesign& e) {
        fmt::print(stderr, "numerical failure: {}\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitOther;
    }
    return kExitOther;
}
