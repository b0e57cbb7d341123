#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vitscope/error.hpp"
#include "vitscope/workspace.hpp"

namespace {

using vitscope::ws::RunConfig;

struct GlobalOpts {
    std::string config_path;
    std::string workspace;
    bool have_seed = false;
    uint64_t seed = 0;
    int threads = -1;
    bool force = false;
};

// Precedence: command-line flags > config file > built-in defaults.
RunConfig resolve_config(const GlobalOpts& g) {
    RunConfig c = g.config_path.empty()
                      ? vitscope::ws::default_config()
                      : vitscope::ws::load_config_file(g.config_path);
    if (!g.workspace.empty()) c.workspace = g.workspace;
    if (g.have_seed) c.seed = g.seed;
    if (g.threads >= 0) c.train.threads = g.threads;
    return c;
}

void add_global_opts(CLI::App* cmd, GlobalOpts& g) {
    cmd->add_option("--config", g.config_path, "JSON run configuration file");
    cmd->add_option("--workspace", g.workspace, "workspace directory");
    cmd->add_option("--seed", g.seed, "global seed")
        ->each([&](const std::string&) { g.have_seed = true; });
    cmd->add_option("--threads", g.threads, "worker threads (0 = all cores)");
    cmd->add_flag("--force", g.force, "rebuild even when artifacts are up to date");
}

void report_stage(const char* what, const vitscope::ws::StageResult& r) {
    if (r.up_to_date)
        std::cout << what << ": up to date\n";
    else
        std::cout << what << ": written\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vitscope: train a small ViT on synthetic shapes and analyze "
                 "its neurons (Grad-CAM, entropy ranking, superposition metrics)"};
    app.require_subcommand(1);
    GlobalOpts g;

    auto* gen = app.add_subcommand("gen", "generate the shapes dataset");
    add_global_opts(gen, g);

    auto* train = app.add_subcommand("train", "train the feature detector");
    add_global_opts(train, g);

    auto* neurons = app.add_subcommand(
        "neurons", "activation matrix, neuron profiles, entropy ranking");
    add_global_opts(neurons, g);

    auto* gradcam = app.add_subcommand("gradcam", "Grad-CAM heatmaps and overlays");
    add_global_opts(gradcam, g);
    int gc_image = -1;
    std::vector<std::string> gc_features;
    gradcam->add_option("--image", gc_image, "dataset image id");
    gradcam->add_option("--features", gc_features,
                        "feature names forming the score (e.g. green square)");

    auto* superpos = app.add_subcommand(
        "superpos", "superposition score and separability metrics per feature pair");
    add_global_opts(superpos, g);

    auto* report = app.add_subcommand("report", "assemble the markdown report");
    add_global_opts(report, g);

    auto* run = app.add_subcommand("run", "full pipeline: gen through report");
    add_global_opts(run, g);

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig c = resolve_config(g);
        if (gen->parsed()) report_stage("dataset", vitscope::ws::cmd_gen(c, g.force));
        if (train->parsed()) report_stage("model", vitscope::ws::cmd_train(c, g.force));
        if (neurons->parsed())
            report_stage("analysis", vitscope::ws::cmd_neurons(c, g.force));
        if (gradcam->parsed()) {
            vitscope::ws::cmd_gradcam(c, gc_image, gc_features);
            std::cout << "gradcam: written\n";
        }
        if (superpos->parsed())
            report_stage("metrics", vitscope::ws::cmd_superpos(c, g.force));
        if (report->parsed()) {
            vitscope::ws::cmd_report(c);
            std::cout << "report: written\n";
        }
        if (run->parsed()) {
            vitscope::ws::run_pipeline(c, g.force);
            std::cout << "pipeline: complete\n";
        }
    } catch (const vitscope::Error& e) {
        std::cerr << "error category=" << vitscope::to_string(e.category())
                  << " message=\"" << e.what() << "\"\n";
        return vitscope::exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error category=internal message=\"" << e.what() << "\"\n";
        return 1;
    }
    return 0;
}
