#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "buckrl/scenario.hpp"
#include "buckrl/transfer.hpp"

namespace buckrl {

/// Shortest representation that round-trips the exact double.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);
std::string hash_file(const std::string& path);

// --- trace CSV ---------------------------------------------------------
// header: t_s,v_o_V,i_L_A,i_o_A,P_cpl_W,action_idx,d_sim,d_real,reward
std::string trace_to_csv(std::span<const StepRecord> trace);
void write_trace_csv(const std::string& path, std::span<const StepRecord> trace);
std::vector<StepRecord> parse_trace_csv(const std::string& text);
std::vector<StepRecord> read_trace_csv(const std::string& path);

// --- metrics report ----------------------------------------------------
std::string metrics_to_json(const std::vector<ScenarioResult>& results,
                            const std::string& config_hash,
                            const std::string& checkpoint_hash);
void write_metrics_json(const std::string& path,
                        const std::vector<ScenarioResult>& results,
                        const std::string& config_hash,
                        const std::string& checkpoint_hash);
/// Human-readable per-segment table for the run log.
std::string metrics_summary_table(const std::vector<ScenarioResult>& results);

// --- duty map artifact --------------------------------------------------
struct DrmArtifact {
    DrmCoefficients coefficients;
    SweepGrid grid;
    std::string surrogate_preset_id;
    std::string created_from;  // checkpoint hash
    std::string config_hash;
};

std::string drm_to_json(const DrmArtifact& art);
DrmArtifact drm_from_json(const std::string& text);
void save_drm(const std::string& path, const DrmArtifact& art);
DrmArtifact load_drm(const std::string& path);

/// Sample table CSV: d_real,d_sim,v_o_real_V,i_o_real_A,P_o_W
void write_samples_csv(const std::string& path,
                       const std::vector<SteadySample>& samples);

// --- scenario sidecar ----------------------------------------------------
// Everything `report` needs to recompute metrics and plots from a stored
// trace without the original config.
struct ScenarioMeta {
    Scenario scenario;
    double v_ref = 100.0;
    double settle_band_v = 1.0;
    double ss_window_frac = 0.2;
    std::string config_hash;
    std::string checkpoint_hash;
};

std::string scenario_meta_to_json(const ScenarioMeta& meta);
ScenarioMeta scenario_meta_from_json(const std::string& text);

// --- training curve -----------------------------------------------------
struct CurvePoint {
    int episode = 0;
    double total_reward = 0.0;
    double mean_loss = 0.0;
    double eval_return = std::numeric_limits<double>::quiet_NaN();
};
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& pts);

void write_text_file(const std::string& path, std::string_view text);
std::string read_text_file(const std::string& path);

}  // namespace buckrl
