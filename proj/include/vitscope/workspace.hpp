#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vitscope/dataset.hpp"
#include "vitscope/neuron_lab.hpp"
#include "vitscope/vit.hpp"

namespace vitscope::ws {

struct AnalysisConfig {
    int top_k = 30;
    std::string aggregator = "mean_patches";
    double percentile_cutoff = 1.0;  // feature-neuron flag threshold, percent
    int hist_bins = 40;
    int report_neurons = 8;  // per-neuron report folders for the top N ranked
};

struct GradcamPanel {
    int image_id = 0;
    std::vector<std::string> features;
};

struct GradcamConfig {
    int layer = -1;  // -1 = last block
    bool softmax_scores = false;
    std::vector<GradcamPanel> panels;
};

struct SuperposConfig {
    int n_neurons = 0;  // 0 = min(1000, ranked neurons)
    bool leave_one_out = false;
};

// One document drives the whole pipeline; a run is reproducible from it.
struct RunConfig {
    uint64_t seed = 42;
    std::string workspace = "workspace";
    GenConfig dataset;
    ViTConfig model;
    TrainHyper train;
    AnalysisConfig analysis;
    GradcamConfig gradcam;
    SuperposConfig superpos;
};

RunConfig default_config();
std::string config_to_json(const RunConfig& c);
// Strict: unknown keys anywhere are a config error.
RunConfig config_from_json(const std::string& text);
RunConfig load_config_file(const std::filesystem::path& path);

// Stage fingerprints: each stage hashes the config fields it depends on plus
// its upstream stage's fingerprint, so any relevant change invalidates
// exactly the downstream artifacts.
uint64_t fingerprint_gen(const RunConfig& c);
uint64_t fingerprint_train(const RunConfig& c);
uint64_t fingerprint_neurons(const RunConfig& c);
uint64_t fingerprint_gradcam(const RunConfig& c);
uint64_t fingerprint_superpos(const RunConfig& c);

struct Paths {
    std::filesystem::path root;

    std::filesystem::path dataset_dir() const { return root / "dataset"; }
    std::filesystem::path manifest() const { return dataset_dir() / "manifest.json"; }
    std::filesystem::path image_dir() const { return dataset_dir() / "img"; }
    std::filesystem::path probe_dir() const { return dataset_dir() / "probe"; }
    std::filesystem::path image(int id) const {
        return image_dir() / (std::to_string(id) + ".ppm");
    }
    std::filesystem::path probe(int id) const {
        return probe_dir() / (std::to_string(id) + ".ppm");
    }
    std::filesystem::path model_dir() const { return root / "model"; }
    std::filesystem::path weights() const { return model_dir() / "weights.bin"; }
    std::filesystem::path train_log() const { return model_dir() / "train_log.csv"; }
    std::filesystem::path analysis_dir() const { return root / "analysis"; }
    std::filesystem::path activations() const { return analysis_dir() / "activations.bin"; }
    std::filesystem::path profiles() const { return analysis_dir() / "profiles.csv"; }
    std::filesystem::path degenerate() const { return analysis_dir() / "degenerate.csv"; }
    std::filesystem::path entropy_hist() const { return analysis_dir() / "entropy_hist.csv"; }
    std::filesystem::path neuron_dir(int layer, int unit) const {
        return analysis_dir() / "neurons" /
               ("L" + std::to_string(layer) + "_N" + std::to_string(unit));
    }
    std::filesystem::path gradcam_dir() const { return root / "gradcam"; }
    std::filesystem::path metrics_dir() const { return root / "metrics"; }
    std::filesystem::path pairs() const { return metrics_dir() / "pairs.csv"; }
    std::filesystem::path correlations() const { return metrics_dir() / "correlations.json"; }
    std::filesystem::path scatter_sd() const { return metrics_dir() / "scatter_SD.csv"; }
    std::filesystem::path scatter_sm() const { return metrics_dir() / "scatter_SM.csv"; }
    std::filesystem::path report_dir() const { return root / "report"; }
    std::filesystem::path report() const { return report_dir() / "report.md"; }
    std::filesystem::path stage_fingerprint(const std::string& stage) const;
};

struct StageResult {
    bool up_to_date = false;  // artifacts already matched the fingerprint
};

// Pipeline stages. Each writes its fingerprint on success and verifies the
// upstream fingerprints first; a mismatch is a staleness error naming the
// command to rerun.
StageResult cmd_gen(const RunConfig& c, bool force = false);
StageResult cmd_train(const RunConfig& c, bool force = false);
StageResult cmd_neurons(const RunConfig& c, bool force = false);
// With empty overrides, renders every panel in the config.
void cmd_gradcam(const RunConfig& c, int image_id = -1,
                 const std::vector<std::string>& features = {});
StageResult cmd_superpos(const RunConfig& c, bool force = false);
void cmd_report(const RunConfig& c);
void run_pipeline(const RunConfig& c, bool force = false);

}  // namespace vitscope::ws
