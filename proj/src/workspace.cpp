#include "vitscope/workspace.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string_view>

#include "json.hpp"
#include "vitscope/error.hpp"
#include "vitscope/gradcam.hpp"
#include "vitscope/parallel.hpp"
#include "vitscope/rng.hpp"
#include "vitscope/superpos.hpp"
#include "vitscope/text.hpp"

namespace vitscope::ws {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

RunConfig default_config() { return RunConfig{}; }

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
                return key == a;
            }) == allowed.end())
            raise(ErrorCategory::Config,
                  "unknown config key '" + where + key + "'");
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

json dataset_json(const GenConfig& c) {
    return json{
        {"image_count", c.image_count}, {"canvas", c.canvas},
        {"object_min", c.object_min},   {"object_max", c.object_max},
        {"probe_reps", c.probe_reps},   {"scale_min", c.scale_min},
        {"scale_max", c.scale_max},     {"jitter_frac", c.jitter_frac},
    };
}

json model_json(const ViTConfig& c) {
    return json{
        {"image_size", c.image_size}, {"patch_size", c.patch_size},
        {"layers", c.layers},         {"d_model", c.d_model},
        {"heads", c.heads},           {"mlp_hidden", c.mlp_hidden},
        {"embed_dim", c.embed_dim},   {"eps", c.eps},
    };
}

json train_json(const TrainHyper& c) {
    return json{
        {"epochs", c.epochs}, {"batch", c.batch},
        {"lr", c.lr},         {"beta1", c.beta1},
        {"beta2", c.beta2},   {"adam_eps", c.adam_eps},
        {"val_fraction", c.val_fraction},
    };
}

json analysis_json(const AnalysisConfig& c) {
    return json{
        {"top_k", c.top_k},
        {"aggregator", c.aggregator},
        {"percentile_cutoff", c.percentile_cutoff},
        {"hist_bins", c.hist_bins},
        {"report_neurons", c.report_neurons},
    };
}

json gradcam_json(const GradcamConfig& c) {
    json panels = json::array();
    for (const auto& p : c.panels)
        panels.push_back({{"image_id", p.image_id}, {"features", p.features}});
    return json{{"layer", c.layer},
                {"softmax_scores", c.softmax_scores},
                {"panels", std::move(panels)}};
}

json superpos_json(const SuperposConfig& c) {
    return json{{"n_neurons", c.n_neurons}, {"leave_one_out", c.leave_one_out}};
}

}  // namespace

std::string config_to_json(const RunConfig& c) {
    json doc;
    doc["seed"] = c.seed;
    doc["workspace"] = c.workspace;
    doc["dataset"] = dataset_json(c.dataset);
    doc["model"] = model_json(c.model);
    doc["train"] = train_json(c.train);
    doc["analysis"] = analysis_json(c.analysis);
    doc["gradcam"] = gradcam_json(c.gradcam);
    doc["superpos"] = superpos_json(c.superpos);
    return doc.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        raise(ErrorCategory::Config, std::string("config parse error: ") + e.what());
    }
    RunConfig c;
    try {
        check_keys(doc, {"seed", "workspace", "dataset", "model", "train",
                         "analysis", "gradcam", "superpos"}, "");
        get_if(doc, "seed", c.seed);
        get_if(doc, "workspace", c.workspace);
        if (doc.contains("dataset")) {
            const auto& d = doc["dataset"];
            check_keys(d, {"image_count", "canvas", "object_min", "object_max",
                           "probe_reps", "scale_min", "scale_max", "jitter_frac"},
                       "dataset.");
            get_if(d, "image_count", c.dataset.image_count);
            get_if(d, "canvas", c.dataset.canvas);
            get_if(d, "object_min", c.dataset.object_min);
            get_if(d, "object_max", c.dataset.object_max);
            get_if(d, "probe_reps", c.dataset.probe_reps);
            get_if(d, "scale_min", c.dataset.scale_min);
            get_if(d, "scale_max", c.dataset.scale_max);
            get_if(d, "jitter_frac", c.dataset.jitter_frac);
        }
        if (doc.contains("model")) {
            const auto& d = doc["model"];
            check_keys(d, {"image_size", "patch_size", "layers", "d_model", "heads",
                           "mlp_hidden", "embed_dim", "eps"}, "model.");
            get_if(d, "image_size", c.model.image_size);
            get_if(d, "patch_size", c.model.patch_size);
            get_if(d, "layers", c.model.layers);
            get_if(d, "d_model", c.model.d_model);
            get_if(d, "heads", c.model.heads);
            get_if(d, "mlp_hidden", c.model.mlp_hidden);
            get_if(d, "embed_dim", c.model.embed_dim);
            get_if(d, "eps", c.model.eps);
        }
        if (doc.contains("train")) {
            const auto& d = doc["train"];
            check_keys(d, {"epochs", "batch", "lr", "beta1", "beta2", "adam_eps",
                           "val_fraction", "threads"}, "train.");
            get_if(d, "epochs", c.train.epochs);
            get_if(d, "batch", c.train.batch);
            get_if(d, "lr", c.train.lr);
            get_if(d, "beta1", c.train.beta1);
            get_if(d, "beta2", c.train.beta2);
            get_if(d, "adam_eps", c.train.adam_eps);
            get_if(d, "val_fraction", c.train.val_fraction);
            get_if(d, "threads", c.train.threads);
        }
        if (doc.contains("analysis")) {
            const auto& d = doc["analysis"];
            check_keys(d, {"top_k", "aggregator", "percentile_cutoff", "hist_bins",
                           "report_neurons"}, "analysis.");
            get_if(d, "top_k", c.analysis.top_k);
            get_if(d, "aggregator", c.analysis.aggregator);
            get_if(d, "percentile_cutoff", c.analysis.percentile_cutoff);
            get_if(d, "hist_bins", c.analysis.hist_bins);
            get_if(d, "report_neurons", c.analysis.report_neurons);
        }
        if (doc.contains("gradcam")) {
            const auto& d = doc["gradcam"];
            check_keys(d, {"layer", "softmax_scores", "panels"}, "gradcam.");
            get_if(d, "layer", c.gradcam.layer);
            get_if(d, "softmax_scores", c.gradcam.softmax_scores);
            if (d.contains("panels")) {
                c.gradcam.panels.clear();
                for (const auto& p : d["panels"]) {
                    check_keys(p, {"image_id", "features"}, "gradcam.panels.");
                    GradcamPanel panel;
                    get_if(p, "image_id", panel.image_id);
                    get_if(p, "features", panel.features);
                    c.gradcam.panels.push_back(std::move(panel));
                }
            }
        }
        if (doc.contains("superpos")) {
            const auto& d = doc["superpos"];
            check_keys(d, {"n_neurons", "leave_one_out"}, "superpos.");
            get_if(d, "n_neurons", c.superpos.n_neurons);
            get_if(d, "leave_one_out", c.superpos.leave_one_out);
        }
    } catch (const json::exception& e) {
        raise(ErrorCategory::Config, std::string("bad config value: ") + e.what());
    }
    return c;
}

RunConfig load_config_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorCategory::Io, "cannot open config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    return config_from_json(text);
}

// --- fingerprints -----------------------------------------------------------

namespace {

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// The dataset stage inherits the encoder's patch size for its divisibility
// check, so it participates in the gen fingerprint.
GenConfig effective_dataset(const RunConfig& c) {
    GenConfig d = c.dataset;
    d.patch_size = c.model.patch_size;
    return d;
}

}  // namespace

uint64_t fingerprint_gen(const RunConfig& c) {
    json j{{"seed", c.seed},
           {"dataset", dataset_json(c.dataset)},
           {"patch_size", c.model.patch_size}};
    return fnv1a64(j.dump());
}

uint64_t fingerprint_train(const RunConfig& c) {
    // threads never change bytes, so they are not part of the identity
    json j{{"upstream", hex64(fingerprint_gen(c))},
           {"model", model_json(c.model)},
           {"train", train_json(c.train)}};
    return fnv1a64(j.dump());
}

uint64_t fingerprint_neurons(const RunConfig& c) {
    json j{{"upstream", hex64(fingerprint_train(c))},
           {"analysis", analysis_json(c.analysis)}};
    return fnv1a64(j.dump());
}

uint64_t fingerprint_gradcam(const RunConfig& c) {
    json j{{"upstream", hex64(fingerprint_train(c))},
           {"gradcam", gradcam_json(c.gradcam)}};
    return fnv1a64(j.dump());
}

uint64_t fingerprint_superpos(const RunConfig& c) {
    json j{{"upstream", hex64(fingerprint_neurons(c))},
           {"superpos", superpos_json(c.superpos)}};
    return fnv1a64(j.dump());
}

fs::path Paths::stage_fingerprint(const std::string& stage) const {
    if (stage == "gen") return dataset_dir() / "fingerprint.json";
    if (stage == "train") return model_dir() / "fingerprint.json";
    if (stage == "neurons") return analysis_dir() / "fingerprint.json";
    if (stage == "gradcam") return gradcam_dir() / "fingerprint.json";
    if (stage == "superpos") return metrics_dir() / "fingerprint.json";
    raise(ErrorCategory::Internal, "unknown stage " + stage);
}

namespace {

void write_fingerprint(const Paths& paths, const std::string& stage, uint64_t fp) {
    json j{{"stage", stage}, {"fingerprint", hex64(fp)}};
    std::ofstream f(paths.stage_fingerprint(stage), std::ios::binary | std::ios::trunc);
    if (!f)
        raise(ErrorCategory::Io, "cannot write fingerprint for stage " + stage);
    f << j.dump(2) << "\n";
}

// Returns true when the stored fingerprint exists and matches.
bool fingerprint_matches(const Paths& paths, const std::string& stage, uint64_t fp) {
    const fs::path p = paths.stage_fingerprint(stage);
    if (!fs::exists(p)) return false;
    std::ifstream f(p, std::ios::binary);
    if (!f) return false;
    try {
        json j = json::parse(f);
        return j.at("fingerprint").get<std::string>() == hex64(fp);
    } catch (...) {
        return false;
    }
}

// A prerequisite stage must have run, and with the current config.
void require_stage(const Paths& paths, const std::string& stage, uint64_t fp,
                   const std::string& artifact_hint) {
    const fs::path p = paths.stage_fingerprint(stage);
    if (!fs::exists(p))
        raise(ErrorCategory::State,
              artifact_hint + " missing; run `vitscope " + stage + "` first");
    if (!fingerprint_matches(paths, stage, fp))
        raise(ErrorCategory::Stale,
              artifact_hint + " was built from a different config; rerun `vitscope " +
                  stage + "`");
}

std::vector<RasterImage> load_dataset_images(const Paths& paths,
                                             const DatasetManifest& manifest) {
    std::vector<RasterImage> images(manifest.annotations.size());
    parallel_for(static_cast<int64_t>(images.size()), 0, [&](int64_t i) {
        images[i] = read_ppm(paths.image(manifest.annotations[i].image_id));
    });
    return images;
}

VitModel load_model(const RunConfig& c, const Paths& paths) {
    ModelWeights w = load_weights(paths.weights());
    if (!(w.config == c.model))
        raise(ErrorCategory::Stale,
              "weight file config does not match the run config; rerun `vitscope train`");
    return VitModel(std::move(w));
}

}  // namespace

// --- stages -----------------------------------------------------------------

StageResult cmd_gen(const RunConfig& c, bool force) {
    const Paths paths{c.workspace};
    const GenConfig dataset = effective_dataset(c);
    dataset.validate();
    const uint64_t fp = fingerprint_gen(c);
    if (!force && fingerprint_matches(paths, "gen", fp) &&
        fs::exists(paths.manifest()))
        return {true};

    DatasetManifest manifest = generate_dataset(dataset, c.seed);
    fs::create_directories(paths.image_dir());
    fs::create_directories(paths.probe_dir());
    save_manifest(manifest, paths.manifest());
    parallel_for(static_cast<int64_t>(manifest.annotations.size()), 0, [&](int64_t i) {
        write_ppm(render_image(manifest.annotations[i], dataset.canvas),
                  paths.image(manifest.annotations[i].image_id));
    });
    parallel_for(static_cast<int64_t>(manifest.probe_set.size()), 0, [&](int64_t i) {
        write_ppm(render_image(manifest.probe_set[i], dataset.canvas),
                  paths.probe(manifest.probe_set[i].image_id));
    });
    write_fingerprint(paths, "gen", fp);
    return {false};
}

StageResult cmd_train(const RunConfig& c, bool force) {
    const Paths paths{c.workspace};
    c.model.validate();
    if (c.model.image_size != c.dataset.canvas)
        raise(ErrorCategory::Config,
              "model.image_size (" + std::to_string(c.model.image_size) +
                  ") must equal dataset.canvas (" + std::to_string(c.dataset.canvas) + ")");
    require_stage(paths, "gen", fingerprint_gen(c), "dataset");
    const uint64_t fp = fingerprint_train(c);
    if (!force && fingerprint_matches(paths, "train", fp) &&
        fs::exists(paths.weights()))
        return {true};

    DatasetManifest manifest = load_manifest(paths.manifest());
    std::vector<RasterImage> images = load_dataset_images(paths, manifest);

    VitModel model(c.model, derive_seed(c.seed, 21));
    TrainHyper hyper = c.train;
    hyper.seed = derive_seed(c.seed, 20);
    TrainResult log = train_model(model, manifest, images, hyper);

    fs::create_directories(paths.model_dir());
    save_weights(model.weights(), paths.weights());
    write_train_log(log, paths.train_log());
    write_fingerprint(paths, "train", fp);
    return {false};
}

namespace {

struct NeuronArtifacts {
    lab::ActivationMatrix matrix;
    std::vector<lab::NeuronProfile> profiles;
    lab::Ranking ranking;
};

NeuronArtifacts compute_profiles(const RunConfig& c, const Paths& paths,
                                 const VitModel& model,
                                 const DatasetManifest& manifest,
                                 std::span<const RasterImage> images) {
    NeuronArtifacts a;
    a.matrix = lab::build_activation_matrix(
        model, manifest, images,
        lab::aggregator_from_string(c.analysis.aggregator), c.train.threads);
    a.profiles = lab::profile_all(a.matrix, manifest, c.analysis.top_k,
                                  c.train.threads);
    a.ranking = lab::rank_neurons(a.profiles);
    return a;
}

}  // namespace

StageResult cmd_neurons(const RunConfig& c, bool force) {
    const Paths paths{c.workspace};
    require_stage(paths, "gen", fingerprint_gen(c), "dataset");
    require_stage(paths, "train", fingerprint_train(c), "model weights");
    const uint64_t fp = fingerprint_neurons(c);
    if (!force && fingerprint_matches(paths, "neurons", fp) &&
        fs::exists(paths.profiles()))
        return {true};
    if (c.analysis.top_k < 1)
        raise(ErrorCategory::Config, "analysis.top_k must be >= 1");

    DatasetManifest manifest = load_manifest(paths.manifest());
    std::vector<RasterImage> images = load_dataset_images(paths, manifest);
    VitModel model = load_model(c, paths);
    NeuronArtifacts a = compute_profiles(c, paths, model, manifest, images);

    fs::create_directories(paths.analysis_dir());
    lab::save_matrix(a.matrix, paths.activations());
    lab::write_profiles_csv(a.profiles, a.ranking, paths.profiles());
    lab::write_degenerate_csv(a.profiles, a.ranking, paths.degenerate());
    const auto hist = lab::entropy_histogram(a.profiles, c.analysis.hist_bins);
    lab::write_histogram_csv(hist, paths.entropy_hist());

    // Per-neuron report folders for the most selective neurons.
    const int report_n = std::min<int>(c.analysis.report_neurons,
                                       static_cast<int>(a.ranking.ranked.size()));
    for (int pos = 0; pos < report_n; ++pos) {
        const auto& p = a.profiles[a.ranking.ranked[pos]];
        const fs::path dir = paths.neuron_dir(p.layer, p.unit);
        fs::create_directories(dir);

        json info;
        info["layer"] = p.layer;
        info["unit"] = p.unit;
        info["entropy_bits"] = p.entropy_bits;
        info["percentile"] = p.percentile;
        info["k"] = p.k;
        json feats = json::array();
        std::vector<int> by_o(kNumFeatures);
        std::iota(by_o.begin(), by_o.end(), 0);
        std::sort(by_o.begin(), by_o.end(), [&](int x, int y) {
            if (p.occurrences[x] != p.occurrences[y])
                return p.occurrences[x] > p.occurrences[y];
            return x < y;
        });
        for (int f : by_o)
            feats.push_back({{"feature", feature_name(f)},
                             {"o", p.occurrences[f]},
                             {"a", p.affinities[f]}});
        info["features"] = std::move(feats);
        info["top_images"] = p.top_images;
        std::ofstream jf(dir / "profile.json", std::ios::binary | std::ios::trunc);
        jf << info.dump(2) << "\n";

        const int map_count = std::min<int>(4, static_cast<int>(p.top_images.size()));
        for (int i = 0; i < map_count; ++i) {
            const int img_id = p.top_images[i];
            const auto values =
                lab::patchwise_map(model, images[img_id], p.layer, p.unit);
            write_ppm(lab::render_patchwise(values, model.config().patches_per_side(),
                                            model.config().image_size),
                      dir / ("patchmap_" + std::to_string(img_id) + ".ppm"));
        }
        const int copy_count = std::min<int>(8, static_cast<int>(p.top_images.size()));
        for (int i = 0; i < copy_count; ++i) {
            const int img_id = p.top_images[i];
            fs::copy_file(paths.image(img_id),
                          dir / ("top" + std::to_string(i + 1) + "_" +
                                 std::to_string(img_id) + ".ppm"),
                          fs::copy_options::overwrite_existing);
        }
    }
    write_fingerprint(paths, "neurons", fp);
    return {false};
}

void cmd_gradcam(const RunConfig& c, int image_id,
                 const std::vector<std::string>& features) {
    const Paths paths{c.workspace};
    require_stage(paths, "gen", fingerprint_gen(c), "dataset");
    require_stage(paths, "train", fingerprint_train(c), "model weights");

    std::vector<GradcamPanel> panels;
    if (image_id >= 0 && !features.empty()) {
        panels.push_back({image_id, features});
    } else {
        panels = c.gradcam.panels;
        if (panels.empty())
            raise(ErrorCategory::Input,
                  "no Grad-CAM panels: pass an image id and feature list or add "
                  "gradcam.panels to the config");
    }

    DatasetManifest manifest = load_manifest(paths.manifest());
    VitModel model = load_model(c, paths);
    fs::create_directories(paths.gradcam_dir());

    for (const auto& panel : panels) {
        if (panel.image_id < 0 ||
            panel.image_id >= static_cast<int>(manifest.annotations.size()))
            raise(ErrorCategory::Input,
                  "image id " + std::to_string(panel.image_id) +
                      " outside the dataset");
        gradcam::ScoreSelector selector;
        selector.softmax_scores = c.gradcam.softmax_scores;
        for (const auto& name : panel.features) {
            const int f = feature_index(name);
            if (f < 0)
                raise(ErrorCategory::Input, "unknown feature '" + name + "'");
            selector.features.push_back(f);
        }
        RasterImage image = read_ppm(paths.image(panel.image_id));
        gradcam::Capture cap = gradcam::capture(model, image, selector,
                                                c.gradcam.layer);
        const auto alpha =
            gradcam::channel_weights(cap.gradients, cap.grid, cap.grid, cap.channels);
        const auto map =
            gradcam::heatmap(cap.activations, cap.grid, cap.grid, cap.channels, alpha);
        const RasterImage colored = gradcam::colorize(map, model.config().image_size);
        const RasterImage blended = gradcam::blend_overlay(colored, image);

        const std::string stem =
            std::to_string(panel.image_id) + "_" + selector.label();
        write_ppm(colored, paths.gradcam_dir() / (stem + ".heat.ppm"));
        write_ppm(blended, paths.gradcam_dir() / (stem + ".overlay.ppm"));
        std::ofstream jf(paths.gradcam_dir() / (stem + ".json"),
                         std::ios::binary | std::ios::trunc);
        jf << gradcam::sidecar_json(cap, selector, alpha);
    }
    write_fingerprint(paths, "gradcam", fingerprint_gradcam(c));
}

StageResult cmd_superpos(const RunConfig& c, bool force) {
    const Paths paths{c.workspace};
    require_stage(paths, "gen", fingerprint_gen(c), "dataset");
    require_stage(paths, "train", fingerprint_train(c), "model weights");
    require_stage(paths, "neurons", fingerprint_neurons(c), "neuron profiles");
    const uint64_t fp = fingerprint_superpos(c);
    if (!force && fingerprint_matches(paths, "superpos", fp) &&
        fs::exists(paths.pairs()))
        return {true};

    DatasetManifest manifest = load_manifest(paths.manifest());
    VitModel model = load_model(c, paths);
    lab::ActivationMatrix matrix = lab::load_matrix(paths.activations());
    auto profiles = lab::profile_all(matrix, manifest, c.analysis.top_k,
                                     c.train.threads);
    auto ranking = lab::rank_neurons(profiles);

    // Probe embeddings from the single-object probe images.
    superpos::ProbeEmbeddings probes;
    probes.dim = model.config().output_dim();
    probes.vectors.resize(manifest.probe_set.size());
    probes.present.resize(manifest.probe_set.size());
    parallel_for(static_cast<int64_t>(manifest.probe_set.size()), c.train.threads,
                 [&](int64_t i) {
                     const auto& ann = manifest.probe_set[i];
                     RasterImage img = read_ppm(paths.probe(ann.image_id));
                     ForwardResult fr = model.forward(img);
                     probes.vectors[i] = fr.embedding;
                     for (int f = 0; f < kNumFeatures; ++f)
                         probes.present[i][f] = ann.feature_present[f];
                 });

    const int n = c.superpos.n_neurons > 0
                      ? c.superpos.n_neurons
                      : std::min<int>(1000, static_cast<int>(ranking.ranked.size()));
    auto table = superpos::pairwise_sweep(profiles, ranking.ranked, probes, n,
                                          c.superpos.leave_one_out);
    superpos::Correlations corr = superpos::correlate(table);

    fs::create_directories(paths.metrics_dir());
    superpos::write_pairs_csv(table, paths.pairs());
    superpos::write_scatter_csv(table, true, paths.scatter_sd());
    superpos::write_scatter_csv(table, false, paths.scatter_sm());
    std::ofstream jf(paths.correlations(), std::ios::binary | std::ios::trunc);
    jf << superpos::correlations_json(corr);
    write_fingerprint(paths, "superpos", fp);
    return {false};
}

// --- report -----------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorCategory::Io, "cannot open: " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        size_t start = 0;
        while (true) {
            const size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace

void cmd_report(const RunConfig& c) {
    const Paths paths{c.workspace};
    require_stage(paths, "gen", fingerprint_gen(c), "dataset");
    require_stage(paths, "train", fingerprint_train(c), "model weights");
    require_stage(paths, "neurons", fingerprint_neurons(c), "neuron profiles");
    require_stage(paths, "superpos", fingerprint_superpos(c), "superposition metrics");
    const bool with_gradcam =
        fingerprint_matches(paths, "gradcam", fingerprint_gradcam(c));

    fs::create_directories(paths.report_dir());
    std::ofstream out(paths.report(), std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCategory::Io, "cannot write report");

    out << "# vitscope run report\n\n";
    out << "- seed: " << c.seed << "\n";
    out << "- dataset: " << c.dataset.image_count << " images, canvas "
        << c.dataset.canvas << "x" << c.dataset.canvas << ", probe set "
        << (kNumShapes * kNumColors * kNumPositions * c.dataset.probe_reps)
        << " images\n";
    out << "- encoder: " << c.model.layers << " blocks, d_model "
        << c.model.d_model << ", " << c.model.heads << " heads, patch "
        << c.model.patch_size << " -> " << c.model.monitored_neurons()
        << " monitored neurons\n\n";

    {
        const auto log = read_csv(paths.train_log());
        out << "## Training\n\n";
        if (log.size() > 1) {
            const auto& last = log.back();
            out << "Final epoch " << last[0] << ": train loss " << last[1]
                << ", held-out macro-F1 " << last[2] << ".\n";
            out << "Full log: `../model/train_log.csv`.\n\n";
        } else {
            out << "No training epochs were run.\n\n";
        }
    }

    {
        out << "## Entropy distribution\n\n";
        out << "Histogram of neuron affinity entropy (bits), from "
            << "`../analysis/entropy_hist.csv`:\n\n";
        out << "| bin | count |\n|---|---|\n";
        const auto hist = read_csv(paths.entropy_hist());
        for (size_t i = 1; i < hist.size(); ++i)
            out << "| [" << fmt_fixed(std::stod(hist[i][0]), 2) << ", "
                << fmt_fixed(std::stod(hist[i][1]), 2) << ") | " << hist[i][2]
                << " |\n";
        out << "\n";
    }

    {
        out << "## Feature neurons\n\n";
        const auto rows = read_csv(paths.profiles());
        out << "Lowest-entropy neurons (top "
            << std::min<size_t>(c.analysis.report_neurons,
                                rows.size() > 0 ? rows.size() - 1 : 0)
            << " of the ranking; cutoff for the feature-neuron flag is "
            << fmt_fixed(c.analysis.percentile_cutoff, 2) << " %ile):\n\n";
        const size_t limit =
            std::min<size_t>(rows.size(), 1 + c.analysis.report_neurons);
        for (size_t i = 1; i < limit; ++i) {
            const auto& r = rows[i];
            const int layer = std::stoi(r[1]);
            const int unit = std::stoi(r[2]);
            const double h = std::stod(r[3]);
            const double pct = std::stod(r[4]);
            out << "### Layer " << layer << ", neuron " << unit
                << " | Entropy: " << fmt_fixed(h, 2) << " (" << fmt_fixed(pct, 2)
                << " %ile)" << (pct <= c.analysis.percentile_cutoff
                                    ? " [feature neuron]"
                                    : "")
                << "\n\n";
            // columns: neuron,layer,unit,H,pct, a_0..a_15, o_0..o_15, top
            std::vector<std::pair<double, int>> by_o;
            for (int f = 0; f < kNumFeatures; ++f)
                by_o.push_back({std::stod(r[5 + kNumFeatures + f]), f});
            std::sort(by_o.begin(), by_o.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            out << "Top features: ";
            for (int t = 0; t < 5; ++t) {
                if (t) out << ", ";
                out << feature_name(by_o[t].second) << " (o="
                    << fmt_fixed(by_o[t].first, 2) << ", a="
                    << fmt_fixed(std::stod(r[5 + by_o[t].second]), 2) << ")";
            }
            out << "\n\nArtifacts: `../analysis/neurons/L" << layer << "_N" << unit
                << "/` (patch-wise maps and top-" << std::min(8, c.analysis.top_k)
                << " images)\n\n";
        }
    }

    if (with_gradcam) {
        out << "## Grad-CAM panels\n\n";
        for (const auto& entry : fs::directory_iterator(paths.gradcam_dir())) {
            const auto name = entry.path().filename().string();
            if (name.ends_with(".overlay.ppm"))
                out << "- `../gradcam/" << name << "` (heatmap: `"
                    << name.substr(0, name.size() - 12) << ".heat.ppm`)\n";
        }
        out << "\n";
    }

    {
        out << "## Superposition vs separability\n\n";
        std::ifstream cf(paths.correlations(), std::ios::binary);
        json corr = json::parse(cf);
        auto line = [&](const char* key, const char* label) {
            const auto& e = corr.at(key);
            out << "- " << label << ": ";
            if (e.at("defined").get<bool>())
                out << fmt_fixed(e.at("value").get<double>(), 4) << "\n";
            else
                out << "undefined (zero-variance column)\n";
        };
        line("spearman_SD", "Spearman S vs D");
        line("pearson_SD", "Pearson S vs D");
        line("spearman_SM", "Spearman S vs M");
        line("pearson_SM", "Pearson S vs M");
        out << "\nPair table: `../metrics/pairs.csv`; scatter data: "
               "`../metrics/scatter_SD.csv`, `../metrics/scatter_SM.csv`.\n";
    }
}

void run_pipeline(const RunConfig& c, bool force) {
    cmd_gen(c, force);
    cmd_train(c, force);
    cmd_neurons(c, force);
    if (!c.gradcam.panels.empty()) cmd_gradcam(c);
    cmd_superpos(c, force);
    cmd_report(c);
}

}  // namespace vitscope::ws
