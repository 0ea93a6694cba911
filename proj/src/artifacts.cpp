#include "buckrl/artifacts.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace buckrl {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view bytes) {
    return fmt::format("{:016x}", fnv1a64(bytes));
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string hash_file(const std::string& path) {
    return fnv1a64_hex(read_text_file(path));
}

// ---------------------------------------------------------------------------
// trace CSV
// ---------------------------------------------------------------------------

static constexpr const char* kTraceHeader =
    "t_s,v_o_V,i_L_A,i_o_A,P_cpl_W,action_idx,d_sim,d_real,reward";

std::string trace_to_csv(std::span<const StepRecord> trace) {
    std::string out{kTraceHeader};
    out += '\n';
    for (const auto& r : trace) {
        out += format_double(r.t);
        out += ',';
        out += format_double(r.v_o);
        out += ',';
        out += format_double(r.i_l);
        out += ',';
        out += format_double(r.i_o);
        out += ',';
        out += format_double(r.p_cpl);
        out += ',';
        out += std::to_string(r.action);
        out += ',';
        out += format_double(r.duty_cmd);
        out += ',';
        out += format_double(r.duty_applied);
        out += ',';
        out += format_double(r.reward);
        out += '\n';
    }
    return out;
}

void write_trace_csv(const std::string& path, std::span<const StepRecord> trace) {
    write_text_file(path, trace_to_csv(trace));
}

std::vector<StepRecord> parse_trace_csv(const std::string& text) {
    std::vector<StepRecord> rows;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("trace csv: empty file");
    if (line != kTraceHeader)
        throw std::runtime_error("trace csv: unexpected header: " + line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        StepRecord r;
        double action_val = 0.0;
        double* fields[9] = {&r.t,    &r.v_o,      &r.i_o /*placeholder*/,
                             &r.i_o,  &r.p_cpl,    &action_val,
                             &r.duty_cmd, &r.duty_applied, &r.reward};
        fields[2] = &r.i_l;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int f = 0; f < 9; ++f) {
            const auto res = std::from_chars(p, end, *fields[f]);
            if (res.ec != std::errc{})
                throw std::runtime_error("trace csv: bad number in line: " + line);
            p = res.ptr;
            if (f < 8) {
                if (p == end || *p != ',')
                    throw std::runtime_error("trace csv: bad field count: " + line);
                ++p;
            }
        }
        r.action = static_cast<int>(action_val);
        rows.push_back(r);
    }
    return rows;
}

std::vector<StepRecord> read_trace_csv(const std::string& path) {
    return parse_trace_csv(read_text_file(path));
}

// ---------------------------------------------------------------------------
// metrics report
// ---------------------------------------------------------------------------

namespace {

ordered_json segment_json(const SegmentMetrics& m) {
    ordered_json j;
    j["index"] = m.index;
    j["t_start_s"] = m.t_start;
    j["t_end_s"] = m.t_end;
    j["p_load_W"] = m.p_load_w;
    j["settling_time_s"] = m.settling_time_s;
    j["settled"] = m.settled;
    j["overshoot_V"] = m.overshoot_v;
    j["steady_state_error_V"] = m.steady_state_error_v;
    j["ripple_pp_V"] = m.ripple_pp_v;
    j["n_rows"] = m.n_rows;
    return j;
}

}  // namespace

std::string metrics_to_json(const std::vector<ScenarioResult>& results,
                            const std::string& config_hash,
                            const std::string& checkpoint_hash) {
    ordered_json doc;
    doc["config_hash"] = config_hash;
    doc["checkpoint_hash"] = checkpoint_hash;
    ordered_json arr = ordered_json::array();
    for (const auto& res : results) {
        ordered_json s;
        s["scenario"] = res.scenario.name;
        s["plant"] =
            res.scenario.plant == Scenario::PlantKind::ideal ? "ideal" : "surrogate";
        s["drm"] = res.scenario.drm_on ? "on" : "off";
        s["seed"] = res.scenario.seed;
        s["collapsed"] = res.collapsed;
        ordered_json segs = ordered_json::array();
        for (const auto& m : res.segments) segs.push_back(segment_json(m));
        s["segments"] = std::move(segs);
        arr.push_back(std::move(s));
    }
    doc["scenarios"] = std::move(arr);
    return doc.dump(2) + "\n";
}

void write_metrics_json(const std::string& path,
                        const std::vector<ScenarioResult>& results,
                        const std::string& config_hash,
                        const std::string& checkpoint_hash) {
    write_text_file(path, metrics_to_json(results, config_hash, checkpoint_hash));
}

std::string metrics_summary_table(const std::vector<ScenarioResult>& results) {
    std::string out;
    out += fmt::format("{:<10} {:<9} {:<4} {:>4} {:>8} {:>10} {:>10} {:>9} {:>9}\n",
                       "scenario", "plant", "drm", "seg", "P[W]", "settle[ms]",
                       "overshoot", "ss_err[V]", "ripple[V]");
    for (const auto& res : results) {
        for (const auto& m : res.segments) {
            out += fmt::format(
                "{:<10} {:<9} {:<4} {:>4} {:>8.0f} {:>10} {:>10.3f} {:>9.3f} {:>9.3f}\n",
                res.scenario.name,
                res.scenario.plant == Scenario::PlantKind::ideal ? "ideal"
                                                                 : "surrogate",
                res.scenario.drm_on ? "on" : "off", m.index, m.p_load_w,
                m.settled ? fmt::format("{:.2f}", m.settling_time_s * 1e3)
                          : std::string("unsettled"),
                m.overshoot_v, m.steady_state_error_v, m.ripple_pp_v);
        }
        if (res.collapsed)
            out += fmt::format("{:<10}  !! voltage collapse at t={:.4f}s\n",
                               res.scenario.name, res.collapse_t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// duty map artifact
// ---------------------------------------------------------------------------

std::string drm_to_json(const DrmArtifact& art) {
    ordered_json doc;
    doc["a"] = art.coefficients.a;
    doc["b"] = art.coefficients.b;
    doc["c"] = art.coefficients.c;
    doc["fit_residual_rms"] = art.coefficients.fit_residual_rms;
    doc["n_samples"] = art.coefficients.n_samples;
    doc["rank"] = art.coefficients.rank;
    ordered_json grid;
    grid["duty_points"] = art.grid.duty_points;
    grid["power_points"] = art.grid.power_points;
    grid["settle_window_s"] = art.grid.settle_window_s;
    grid["settle_tol_v"] = art.grid.settle_tol_v;
    grid["settle_timeout_s"] = art.grid.settle_timeout_s;
    doc["grid"] = std::move(grid);
    doc["surrogate_preset_id"] = art.surrogate_preset_id;
    doc["created_from"] = art.created_from;
    doc["config_hash"] = art.config_hash;
    return doc.dump(2) + "\n";
}

DrmArtifact drm_from_json(const std::string& text) {
    const auto doc = ordered_json::parse(text);
    DrmArtifact art;
    art.coefficients.a = doc.at("a").get<double>();
    art.coefficients.b = doc.at("b").get<double>();
    art.coefficients.c = doc.at("c").get<double>();
    art.coefficients.fit_residual_rms = doc.at("fit_residual_rms").get<double>();
    art.coefficients.n_samples = doc.at("n_samples").get<int>();
    art.coefficients.rank = doc.value("rank", 3);
    if (doc.contains("grid")) {
        const auto& g = doc.at("grid");
        art.grid.duty_points = g.at("duty_points").get<std::vector<double>>();
        art.grid.power_points = g.at("power_points").get<std::vector<double>>();
        art.grid.settle_window_s = g.at("settle_window_s").get<double>();
        art.grid.settle_tol_v = g.at("settle_tol_v").get<double>();
        art.grid.settle_timeout_s = g.at("settle_timeout_s").get<double>();
    }
    art.surrogate_preset_id = doc.value("surrogate_preset_id", std::string{});
    art.created_from = doc.value("created_from", std::string{});
    art.config_hash = doc.value("config_hash", std::string{});
    if (!(art.coefficients.a > 0.0))
        throw ConfigError("drm: duty slope a must be positive");
    return art;
}

void save_drm(const std::string& path, const DrmArtifact& art) {
    write_text_file(path, drm_to_json(art));
}

DrmArtifact load_drm(const std::string& path) {
    return drm_from_json(read_text_file(path));
}

void write_samples_csv(const std::string& path,
                       const std::vector<SteadySample>& samples) {
    std::string out = "d_real,d_sim,v_o_real_V,i_o_real_A,P_o_W\n";
    for (const auto& s : samples) {
        out += format_double(s.duty_real);
        out += ',';
        out += format_double(s.duty_sim);
        out += ',';
        out += format_double(s.v_out);
        out += ',';
        out += format_double(s.i_out);
        out += ',';
        out += format_double(s.p_load);
        out += '\n';
    }
    write_text_file(path, out);
}

std::string scenario_meta_to_json(const ScenarioMeta& meta) {
    ordered_json doc;
    doc["name"] = meta.scenario.name;
    doc["plant"] = meta.scenario.plant == Scenario::PlantKind::ideal ? "ideal"
                                                                     : "surrogate";
    doc["drm"] = meta.scenario.drm_on;
    doc["seed"] = meta.scenario.seed;
    doc["duration_s"] = meta.scenario.duration_s;
    ordered_json sched = ordered_json::array();
    for (const auto& e : meta.scenario.load.schedule)
        sched.push_back({e.t_switch, e.power_w});
    doc["load"] = std::move(sched);
    doc["v_ref"] = meta.v_ref;
    doc["settle_band_v"] = meta.settle_band_v;
    doc["ss_window_frac"] = meta.ss_window_frac;
    doc["config_hash"] = meta.config_hash;
    doc["checkpoint_hash"] = meta.checkpoint_hash;
    return doc.dump(2) + "\n";
}

ScenarioMeta scenario_meta_from_json(const std::string& text) {
    const auto doc = ordered_json::parse(text);
    ScenarioMeta meta;
    meta.scenario.name = doc.at("name").get<std::string>();
    meta.scenario.plant = doc.at("plant").get<std::string>() == "ideal"
                              ? Scenario::PlantKind::ideal
                              : Scenario::PlantKind::surrogate;
    meta.scenario.drm_on = doc.at("drm").get<bool>();
    meta.scenario.seed = doc.at("seed").get<std::uint64_t>();
    meta.scenario.duration_s = doc.at("duration_s").get<double>();
    for (const auto& e : doc.at("load"))
        meta.scenario.load.schedule.push_back(
            {e.at(0).get<double>(), e.at(1).get<double>()});
    meta.v_ref = doc.at("v_ref").get<double>();
    meta.settle_band_v = doc.at("settle_band_v").get<double>();
    meta.ss_window_frac = doc.at("ss_window_frac").get<double>();
    meta.config_hash = doc.value("config_hash", std::string{});
    meta.checkpoint_hash = doc.value("checkpoint_hash", std::string{});
    return meta;
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& pts) {
    std::string out = "episode,total_reward,mean_loss,eval_return\n";
    for (const auto& p : pts) {
        out += std::to_string(p.episode);
        out += ',';
        out += format_double(p.total_reward);
        out += ',';
        out += format_double(p.mean_loss);
        out += ',';
        out += std::isnan(p.eval_return) ? std::string() : format_double(p.eval_return);
        out += '\n';
    }
    write_text_file(path, out);
}

}  // namespace buckrl
