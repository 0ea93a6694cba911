#include "buckrl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "buckrl/artifacts.hpp"

namespace buckrl {

void TrainingConfig::validate() const {
    if (episodes < 1) throw ConfigError("training.episodes: must be >= 1");
    if (eval_period < 1) throw ConfigError("training.eval_period: must be >= 1");
    if (!(step_power_min_w >= 0.0 && step_power_min_w <= step_power_max_w))
        throw ConfigError("training.step_power_min_w: need 0 <= min <= max");
    if (!(step_time_min_s >= 0.0 && step_time_min_s <= step_time_max_s))
        throw ConfigError("training.step_time_min_s: need 0 <= min <= max");
    if (!(base_power_w >= 0.0))
        throw ConfigError("training.base_power_w: must be >= 0");
}

void RunConfig::validate() const {
    plant.validate();
    surrogate.validate();
    if (surrogate_preset != "default" && surrogate_preset != "ideal")
        throw ConfigError("surrogate.preset: must be \"default\" or \"ideal\"");
    dqn.validate();
    actions.validate();
    reward.validate();
    episode.validate(plant.v_ref);
    training.validate();
    effective_sweep().validate();
    eval.validate();
    if (!(training.step_time_max_s < episode.horizon * plant.dt_ctrl()))
        throw ConfigError(
            "training.step_time_max_s: load step must fall inside the episode");
}

SweepGrid RunConfig::effective_sweep() const {
    SweepGrid g = sweep;
    if (g.duty_points.empty()) g.duty_points = actions.reachable_duties();
    return g;
}

RunConfig default_config() {
    RunConfig cfg;
    cfg.surrogate = SurrogateParams::default_preset(cfg.plant);
    cfg.dqn.seed = cfg.seed;
    return cfg;
}

// ---------------------------------------------------------------------------
// TOML-subset parser: [section] headers and key = value lines, where value
// is a number (inf allowed), a bool, a quoted string, or a one-line array
// of numbers. Enough for this artifact; unknown keys are rejected later.
// ---------------------------------------------------------------------------

namespace {

struct Value {
    enum class Kind { number, boolean, string, array } kind;
    double num = 0.0;
    bool b = false;
    std::string str;
    std::vector<double> arr;
    int line = 0;
};

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string_view strip_comment(std::string_view s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

double parse_number(std::string_view tok, const std::string& where) {
    tok = trim(tok);
    std::string t(tok);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
        throw ConfigError(fmt::format("{}: not a number: '{}'", where, t));
    return v;
}

Value parse_value(std::string_view tok, const std::string& where, int line) {
    Value v;
    v.line = line;
    tok = trim(tok);
    if (tok.empty()) throw ConfigError(where + ": missing value");
    if (tok.front() == '"') {
        if (tok.size() < 2 || tok.back() != '"')
            throw ConfigError(where + ": unterminated string");
        v.kind = Value::Kind::string;
        v.str = std::string(tok.substr(1, tok.size() - 2));
        return v;
    }
    if (tok == "true" || tok == "false") {
        v.kind = Value::Kind::boolean;
        v.b = tok == "true";
        return v;
    }
    if (tok.front() == '[') {
        if (tok.back() != ']')
            throw ConfigError(where + ": array must close on the same line");
        v.kind = Value::Kind::array;
        std::string inner(tok.substr(1, tok.size() - 2));
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!trim(item).empty()) v.arr.push_back(parse_number(item, where));
        return v;
    }
    v.kind = Value::Kind::number;
    v.num = parse_number(tok, where);
    return v;
}

using KvMap = std::map<std::string, Value>;

KvMap parse_kv(const std::string& text, const std::string& origin) {
    KvMap kv;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(
                    fmt::format("{}:{}: malformed section header", origin, line_no));
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty())
                throw ConfigError(
                    fmt::format("{}:{}: empty section name", origin, line_no));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(
                fmt::format("{}:{}: expected key = value", origin, line_no));
        const auto key = trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError(fmt::format("{}:{}: empty key", origin, line_no));
        const std::string path =
            section.empty() ? std::string(key) : section + "." + std::string(key);
        if (kv.count(path))
            throw ConfigError(fmt::format("{}: duplicate key", path));
        kv.emplace(path, parse_value(line.substr(eq + 1), path, line_no));
    }
    return kv;
}

class KvReader {
public:
    explicit KvReader(KvMap kv) : kv_(std::move(kv)) {}

    bool has(const std::string& path) const { return kv_.count(path) > 0; }

    double number(const std::string& path, double fallback) {
        const Value* v = take(path);
        if (!v) return fallback;
        if (v->kind != Value::Kind::number)
            throw ConfigError(path + ": expected a number");
        return v->num;
    }
    int integer(const std::string& path, int fallback) {
        const double d = number(path, fallback);
        const double r = std::round(d);
        if (std::abs(d - r) > 1e-9 || !std::isfinite(d))
            throw ConfigError(path + ": expected an integer");
        return static_cast<int>(r);
    }
    std::uint64_t uint64(const std::string& path, std::uint64_t fallback) {
        const Value* v = take(path);
        if (!v) return fallback;
        if (v->kind != Value::Kind::number || v->num < 0 ||
            v->num != std::floor(v->num))
            throw ConfigError(path + ": expected a non-negative integer");
        return static_cast<std::uint64_t>(v->num);
    }
    std::string string(const std::string& path, std::string fallback) {
        const Value* v = take(path);
        if (!v) return fallback;
        if (v->kind != Value::Kind::string)
            throw ConfigError(path + ": expected a quoted string");
        return v->str;
    }
    std::vector<double> array(const std::string& path, std::vector<double> fallback) {
        const Value* v = take(path);
        if (!v) return fallback;
        if (v->kind != Value::Kind::array)
            throw ConfigError(path + ": expected an array");
        return v->arr;
    }

    void reject_leftovers() const {
        for (const auto& [path, value] : kv_)
            if (!consumed_.count(path))
                throw ConfigError(fmt::format("{}: unknown key", path));
    }

private:
    const Value* take(const std::string& path) {
        auto it = kv_.find(path);
        if (it == kv_.end()) return nullptr;
        consumed_.insert(path);
        return &it->second;
    }
    KvMap kv_;
    std::set<std::string> consumed_;
};

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
    KvReader kv(parse_kv(text, origin));
    RunConfig cfg = default_config();

    cfg.seed = kv.uint64("seed", cfg.seed);
    cfg.out_dir = kv.string("out_dir", cfg.out_dir);

    auto& p = cfg.plant;
    p.v_in = kv.number("plant.v_in", p.v_in);
    p.L = kv.number("plant.l", p.L);
    p.C = kv.number("plant.c", p.C);
    p.R = kv.number("plant.r", p.R);
    p.f_sw = kv.number("plant.f_sw", p.f_sw);
    p.v_ref = kv.number("plant.v_ref", p.v_ref);
    p.v_min_cpl = kv.number("plant.v_min_cpl", p.v_min_cpl);

    cfg.surrogate_preset = kv.string("surrogate.preset", cfg.surrogate_preset);
    if (cfg.surrogate_preset == "ideal")
        cfg.surrogate = SurrogateParams::ideal(cfg.plant);
    else
        cfg.surrogate = SurrogateParams::default_preset(cfg.plant);
    auto& s = cfg.surrogate;
    s.base = cfg.plant;
    s.r_inductor = kv.number("surrogate.r_inductor", s.r_inductor);
    s.r_switch_on = kv.number("surrogate.r_switch_on", s.r_switch_on);
    s.v_diode = kv.number("surrogate.v_diode", s.v_diode);
    s.duty_gain = kv.number("surrogate.duty_gain", s.duty_gain);
    s.duty_offset = kv.number("surrogate.duty_offset", s.duty_offset);
    s.sensor_offset_v = kv.number("surrogate.sensor_offset_v", s.sensor_offset_v);
    s.sensor_noise_sd_v =
        kv.number("surrogate.sensor_noise_sd_v", s.sensor_noise_sd_v);
    s.load_slew_w_per_s =
        kv.number("surrogate.load_slew_w_per_s", s.load_slew_w_per_s);
    s.load_lag_tau_s = kv.number("surrogate.load_lag_tau_s", s.load_lag_tau_s);

    auto& d = cfg.dqn;
    d.alpha = kv.number("dqn.alpha", d.alpha);
    d.gamma = kv.number("dqn.gamma", d.gamma);
    d.batch_size = kv.integer("dqn.batch_size", d.batch_size);
    d.epsilon = kv.number("dqn.epsilon", d.epsilon);
    d.target_sync_period = kv.integer("dqn.target_sync_period", d.target_sync_period);
    d.replay_capacity = kv.uint64("dqn.replay_capacity", d.replay_capacity);
    d.optimizer = kv.string("dqn.optimizer", d.optimizer);
    d.seed = cfg.seed;

    const bool product_form =
        kv.has("actions.duty_levels") || kv.has("actions.duty_trims");
    const bool pair_form =
        kv.has("actions.entry_bases") || kv.has("actions.entry_trims");
    if (product_form && pair_form)
        throw ConfigError(
            "actions.duty_levels: give either the level/trim product or "
            "explicit entry pairs, not both");
    if (product_form) {
        const auto levels = kv.array("actions.duty_levels", {});
        const auto trims = kv.array("actions.duty_trims", {});
        if (levels.empty() || trims.empty())
            throw ConfigError(
                "actions.duty_levels: levels and trims must both be given");
        cfg.actions.entries.clear();
        for (double base : levels)
            for (double trim : trims) cfg.actions.entries.push_back({base, trim});
    } else if (pair_form) {
        const auto bases = kv.array("actions.entry_bases", {});
        const auto trims = kv.array("actions.entry_trims", {});
        if (bases.size() != trims.size() || bases.empty())
            throw ConfigError(
                "actions.entry_bases: bases and trims must pair up");
        cfg.actions.entries.clear();
        for (std::size_t i = 0; i < bases.size(); ++i)
            cfg.actions.entries.push_back({bases[i], trims[i]});
    }
    cfg.actions.deadband_v = kv.number("actions.deadband_v", cfg.actions.deadband_v);

    auto& r = cfg.reward;
    r.tight_bonus = kv.number("reward.tight_bonus", r.tight_bonus);
    r.loose_bonus = kv.number("reward.loose_bonus", r.loose_bonus);
    r.error_weight = kv.number("reward.error_weight", r.error_weight);
    r.tight_band_v = kv.number("reward.tight_band_v", r.tight_band_v);
    r.loose_band_v = kv.number("reward.loose_band_v", r.loose_band_v);

    auto& e = cfg.episode;
    e.horizon = kv.integer("episode.horizon", e.horizon);
    e.v_abort_lo = kv.number("episode.v_abort_lo", e.v_abort_lo);
    e.v_abort_hi = kv.number("episode.v_abort_hi", e.v_abort_hi);
    e.terminal_penalty = kv.number("episode.terminal_penalty", e.terminal_penalty);

    auto& t = cfg.training;
    t.episodes = kv.integer("training.episodes", t.episodes);
    t.eval_period = kv.integer("training.eval_period", t.eval_period);
    t.step_power_min_w = kv.number("training.step_power_min_w", t.step_power_min_w);
    t.step_power_max_w = kv.number("training.step_power_max_w", t.step_power_max_w);
    t.step_time_min_s = kv.number("training.step_time_min_s", t.step_time_min_s);
    t.step_time_max_s = kv.number("training.step_time_max_s", t.step_time_max_s);
    t.base_power_w = kv.number("training.base_power_w", t.base_power_w);

    auto& g = cfg.sweep;
    g.duty_points = kv.array("sweep.duty_points", g.duty_points);
    g.power_points = kv.array("sweep.power_points", g.power_points);
    g.settle_window_s = kv.number("sweep.settle_window_s", g.settle_window_s);
    g.settle_tol_v = kv.number("sweep.settle_tol_v", g.settle_tol_v);
    g.settle_timeout_s = kv.number("sweep.settle_timeout_s", g.settle_timeout_s);

    auto& ev = cfg.eval;
    ev.duration_s = kv.number("eval.duration_s", ev.duration_s);
    ev.t_step_up = kv.number("eval.t_step_up", ev.t_step_up);
    ev.t_step_down = kv.number("eval.t_step_down", ev.t_step_down);
    ev.step_powers = kv.array("eval.step_powers", ev.step_powers);
    ev.base_power_w = kv.number("eval.base_power_w", ev.base_power_w);
    ev.settle_band_v = kv.number("eval.settle_band_v", ev.settle_band_v);
    ev.ss_window_frac = kv.number("eval.ss_window_frac", ev.ss_window_frac);
    ev.n_sub = kv.integer("eval.n_sub", ev.n_sub);

    kv.reject_leftovers();
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    return parse_config(read_text_file(path), path);
}

namespace {

std::string fd(double v) { return format_double(v); }

std::string array_str(const std::vector<double>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fd(v[i]);
    }
    return out + "]";
}

}  // namespace

std::string config_to_toml(const RunConfig& cfg) {
    std::string o;
    o += fmt::format("seed = {}\n", cfg.seed);
    o += fmt::format("out_dir = \"{}\"\n", cfg.out_dir);

    o += "\n[plant]\n";
    o += fmt::format("v_in = {}\n", fd(cfg.plant.v_in));
    o += fmt::format("l = {}\n", fd(cfg.plant.L));
    o += fmt::format("c = {}\n", fd(cfg.plant.C));
    o += fmt::format("r = {}\n", std::isinf(cfg.plant.R) ? "inf" : fd(cfg.plant.R));
    o += fmt::format("f_sw = {}\n", fd(cfg.plant.f_sw));
    o += fmt::format("v_ref = {}\n", fd(cfg.plant.v_ref));
    o += fmt::format("v_min_cpl = {}\n", fd(cfg.plant.v_min_cpl));

    o += "\n[surrogate]\n";
    o += fmt::format("preset = \"{}\"\n", cfg.surrogate_preset);
    o += fmt::format("r_inductor = {}\n", fd(cfg.surrogate.r_inductor));
    o += fmt::format("r_switch_on = {}\n", fd(cfg.surrogate.r_switch_on));
    o += fmt::format("v_diode = {}\n", fd(cfg.surrogate.v_diode));
    o += fmt::format("duty_gain = {}\n", fd(cfg.surrogate.duty_gain));
    o += fmt::format("duty_offset = {}\n", fd(cfg.surrogate.duty_offset));
    o += fmt::format("sensor_offset_v = {}\n", fd(cfg.surrogate.sensor_offset_v));
    o += fmt::format("sensor_noise_sd_v = {}\n", fd(cfg.surrogate.sensor_noise_sd_v));
    o += fmt::format("load_slew_w_per_s = {}\n", fd(cfg.surrogate.load_slew_w_per_s));
    o += fmt::format("load_lag_tau_s = {}\n", fd(cfg.surrogate.load_lag_tau_s));

    o += "\n[dqn]\n";
    o += fmt::format("alpha = {}\n", fd(cfg.dqn.alpha));
    o += fmt::format("gamma = {}\n", fd(cfg.dqn.gamma));
    o += fmt::format("batch_size = {}\n", cfg.dqn.batch_size);
    o += fmt::format("epsilon = {}\n", fd(cfg.dqn.epsilon));
    o += fmt::format("target_sync_period = {}\n", cfg.dqn.target_sync_period);
    o += fmt::format("replay_capacity = {}\n", cfg.dqn.replay_capacity);
    o += fmt::format("optimizer = \"{}\"\n", cfg.dqn.optimizer);

    o += "\n[actions]\n";
    // emitted entry-by-entry to stay canonical even for hand-built tables
    {
        std::vector<double> bases, trims;
        for (const auto& e : cfg.actions.entries) {
            bases.push_back(e.duty_base);
            trims.push_back(e.duty_trim);
        }
        o += "# entries as (base, trim) pairs\n";
        o += fmt::format("entry_bases = {}\n", array_str(bases));
        o += fmt::format("entry_trims = {}\n", array_str(trims));
    }
    o += fmt::format("deadband_v = {}\n", fd(cfg.actions.deadband_v));

    o += "\n[reward]\n";
    o += fmt::format("tight_bonus = {}\n", fd(cfg.reward.tight_bonus));
    o += fmt::format("loose_bonus = {}\n", fd(cfg.reward.loose_bonus));
    o += fmt::format("error_weight = {}\n", fd(cfg.reward.error_weight));
    o += fmt::format("tight_band_v = {}\n", fd(cfg.reward.tight_band_v));
    o += fmt::format("loose_band_v = {}\n", fd(cfg.reward.loose_band_v));

    o += "\n[episode]\n";
    o += fmt::format("horizon = {}\n", cfg.episode.horizon);
    o += fmt::format("v_abort_lo = {}\n", fd(cfg.episode.v_abort_lo));
    o += fmt::format("v_abort_hi = {}\n", fd(cfg.episode.v_abort_hi));
    o += fmt::format("terminal_penalty = {}\n", fd(cfg.episode.terminal_penalty));

    o += "\n[training]\n";
    o += fmt::format("episodes = {}\n", cfg.training.episodes);
    o += fmt::format("eval_period = {}\n", cfg.training.eval_period);
    o += fmt::format("step_power_min_w = {}\n", fd(cfg.training.step_power_min_w));
    o += fmt::format("step_power_max_w = {}\n", fd(cfg.training.step_power_max_w));
    o += fmt::format("step_time_min_s = {}\n", fd(cfg.training.step_time_min_s));
    o += fmt::format("step_time_max_s = {}\n", fd(cfg.training.step_time_max_s));
    o += fmt::format("base_power_w = {}\n", fd(cfg.training.base_power_w));

    o += "\n[sweep]\n";
    o += fmt::format("duty_points = {}\n", array_str(cfg.sweep.duty_points));
    o += fmt::format("power_points = {}\n", array_str(cfg.sweep.power_points));
    o += fmt::format("settle_window_s = {}\n", fd(cfg.sweep.settle_window_s));
    o += fmt::format("settle_tol_v = {}\n", fd(cfg.sweep.settle_tol_v));
    o += fmt::format("settle_timeout_s = {}\n", fd(cfg.sweep.settle_timeout_s));

    o += "\n[eval]\n";
    o += fmt::format("duration_s = {}\n", fd(cfg.eval.duration_s));
    o += fmt::format("t_step_up = {}\n", fd(cfg.eval.t_step_up));
    o += fmt::format("t_step_down = {}\n", fd(cfg.eval.t_step_down));
    o += fmt::format("step_powers = {}\n", array_str(cfg.eval.step_powers));
    o += fmt::format("base_power_w = {}\n", fd(cfg.eval.base_power_w));
    o += fmt::format("settle_band_v = {}\n", fd(cfg.eval.settle_band_v));
    o += fmt::format("ss_window_frac = {}\n", fd(cfg.eval.ss_window_frac));
    o += fmt::format("n_sub = {}\n", cfg.eval.n_sub);
    return o;
}

std::string config_hash(const RunConfig& cfg) {
    return fnv1a64_hex(config_to_toml(cfg));
}

}  // namespace buckrl
