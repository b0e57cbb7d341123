#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "vitscope/error.hpp"
#include "vitscope/workspace.hpp"

using namespace vitscope;
namespace ws = vitscope::ws;
namespace fs = std::filesystem;

namespace {

// Small but complete run: seconds, not minutes.
ws::RunConfig smoke_config(const fs::path& root) {
    ws::RunConfig c;
    c.seed = 7;
    c.workspace = root.string();
    c.dataset.image_count = 24;
    c.dataset.canvas = 16;
    c.dataset.probe_reps = 1;
    c.model.image_size = 16;
    c.model.patch_size = 8;
    c.model.layers = 2;
    c.model.d_model = 16;
    c.model.heads = 2;
    c.model.mlp_hidden = 32;
    c.model.embed_dim = 8;
    c.train.epochs = 2;
    c.train.batch = 6;
    c.train.val_fraction = 0.25;
    c.analysis.top_k = 5;
    c.analysis.hist_bins = 8;
    c.analysis.report_neurons = 2;
    c.gradcam.panels.push_back({0, {"green", "square"}});
    c.superpos.n_neurons = 0;  // auto
    return c;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("vitscope_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config json round trip preserves every field") {
    ws::RunConfig c = smoke_config("ws");
    c.gradcam.softmax_scores = true;
    c.superpos.leave_one_out = true;
    const std::string text = ws::config_to_json(c);
    ws::RunConfig back = ws::config_from_json(text);
    CHECK(ws::config_to_json(back) == text);
    CHECK(back.seed == c.seed);
    CHECK(back.model.d_model == 16);
    CHECK(back.gradcam.panels.size() == 1);
    CHECK(back.gradcam.panels[0].features ==
          std::vector<std::string>{"green", "square"});
    CHECK(back.superpos.leave_one_out);
}

TEST_CASE("unknown config keys are rejected") {
    try {
        ws::config_from_json("{\"sede\": 4}");
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Config);
        CHECK(std::string(e.what()).find("sede") != std::string::npos);
    }
    CHECK_THROWS_AS(ws::config_from_json("{\"model\": {\"dmodel\": 4}}"), Error);
    CHECK_THROWS_AS(ws::config_from_json("not json"), Error);
    // partial configs keep defaults for everything else
    ws::RunConfig c = ws::config_from_json("{\"seed\": 9}");
    CHECK(c.seed == 9);
    CHECK(c.model.d_model == 128);
}

TEST_CASE("fingerprints react to the relevant config fields only") {
    ws::RunConfig a = smoke_config("ws");
    ws::RunConfig b = a;
    CHECK(ws::fingerprint_gen(a) == ws::fingerprint_gen(b));
    b.train.lr *= 2;
    CHECK(ws::fingerprint_gen(a) == ws::fingerprint_gen(b));   // dataset unaffected
    CHECK(ws::fingerprint_train(a) != ws::fingerprint_train(b));
    CHECK(ws::fingerprint_neurons(a) != ws::fingerprint_neurons(b));
    b = a;
    b.train.threads = 4;  // execution detail, not identity
    CHECK(ws::fingerprint_train(a) == ws::fingerprint_train(b));
    b = a;
    b.seed += 1;
    CHECK(ws::fingerprint_gen(a) != ws::fingerprint_gen(b));
}

TEST_CASE("stages demand their prerequisites") {
    TempDir tmp("stages");
    ws::RunConfig c = smoke_config(tmp.path);
    SUBCASE("neurons without training names the train command") {
        try {
            ws::cmd_neurons(c);
            FAIL("expected state error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::State);
            CHECK(std::string(e.what()).find("vitscope gen") != std::string::npos);
        }
        ws::cmd_gen(c);
        try {
            ws::cmd_neurons(c);
            FAIL("expected state error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::State);
            CHECK(std::string(e.what()).find("vitscope train") != std::string::npos);
        }
    }
    SUBCASE("config drift between stages is a staleness error") {
        ws::cmd_gen(c);
        ws::cmd_train(c);
        ws::RunConfig drifted = c;
        drifted.seed += 1;
        try {
            ws::cmd_train(drifted);
            FAIL("expected staleness error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Stale);
            CHECK(std::string(e.what()).find("vitscope gen") != std::string::npos);
        }
    }
}

TEST_CASE("gen is idempotent until forced") {
    TempDir tmp("idem");
    ws::RunConfig c = smoke_config(tmp.path);
    auto first = ws::cmd_gen(c);
    CHECK(!first.up_to_date);
    const auto stamp = fs::last_write_time(ws::Paths{c.workspace}.manifest());
    auto second = ws::cmd_gen(c);
    CHECK(second.up_to_date);
    CHECK(fs::last_write_time(ws::Paths{c.workspace}.manifest()) == stamp);
    auto forced = ws::cmd_gen(c, true);
    CHECK(!forced.up_to_date);
}

TEST_CASE("full pipeline emits every artifact and reruns byte-identically") {
    TempDir tmp("pipe");
    ws::RunConfig c = smoke_config(tmp.path);
    ws::run_pipeline(c);

    const ws::Paths paths{c.workspace};
    for (const fs::path p :
         {paths.manifest(), paths.weights(), paths.train_log(), paths.activations(),
          paths.profiles(), paths.degenerate(), paths.entropy_hist(), paths.pairs(),
          paths.correlations(), paths.scatter_sd(), paths.scatter_sm(),
          paths.report()}) {
        INFO(p.string());
        CHECK(fs::exists(p));
    }
    CHECK(fs::exists(paths.image(0)));
    CHECK(fs::exists(paths.probe(0)));
    CHECK(fs::exists(paths.gradcam_dir() / "0_green+square.heat.ppm"));
    CHECK(fs::exists(paths.gradcam_dir() / "0_green+square.overlay.ppm"));
    CHECK(fs::exists(paths.gradcam_dir() / "0_green+square.json"));

    // a second full run into a fresh workspace reproduces the bytes
    TempDir tmp2("pipe2");
    ws::RunConfig c2 = c;
    c2.workspace = tmp2.path.string();
    ws::run_pipeline(c2);
    const ws::Paths paths2{c2.workspace};
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
    };
    for (const auto& rel :
         {std::string("dataset/manifest.json"), std::string("model/weights.bin"),
          std::string("model/train_log.csv"), std::string("analysis/profiles.csv"),
          std::string("metrics/pairs.csv"), std::string("report/report.md")}) {
        INFO(rel);
        CHECK(slurp(paths.root / rel) == slurp(paths2.root / rel));
    }
}

TEST_CASE("gradcam command validates its inputs") {
    TempDir tmp("gc");
    ws::RunConfig c = smoke_config(tmp.path);
    ws::cmd_gen(c);
    ws::cmd_train(c);
    CHECK_THROWS_AS(ws::cmd_gradcam(c, 999, {"red"}), Error);
    CHECK_THROWS_AS(ws::cmd_gradcam(c, 0, {"vermilion"}), Error);
    ws::cmd_gradcam(c, 1, {"red", "circle"});
    CHECK(fs::exists(ws::Paths{c.workspace}.gradcam_dir() / "1_red+circle.heat.ppm"));
}
