#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "vitscope/dataset.hpp"
#include "vitscope/error.hpp"

using namespace vitscope;

namespace {
GenConfig desk_config() {
    GenConfig c;
    c.probe_reps = 1;
    return c;
}
}  // namespace

TEST_CASE("feature ordering is shapes, colors, positions") {
    CHECK(kNumFeatures == 16);
    CHECK(feature_name(0) == "circle");
    CHECK(feature_name(4) == "hexagon");
    CHECK(feature_name(5) == "red");
    CHECK(feature_name(10) == "yellow");
    CHECK(feature_name(11) == "top-left");
    CHECK(feature_name(15) == "center");
    CHECK(feature_index("pink") == 8);
    CHECK(feature_index("nope") == -1);
    CHECK(shape_feature(2).index() == 2);
    CHECK(color_feature(0).index() == 5);
    CHECK(position_feature(4).index() == 15);
}

TEST_CASE("feature_vector counts objects per feature") {
    ImageAnnotation ann;
    ann.objects.push_back({shape_feature(0), color_feature(0), position_feature(4), 0.2, 0, 0});
    auto counts = feature_vector(ann);
    CHECK(counts[0] == 1);   // circle
    CHECK(counts[5] == 1);   // red
    CHECK(counts[15] == 1);  // center
    int total = 0;
    for (int c : counts) total += c;
    CHECK(total == 3);

    ImageAnnotation two;
    two.objects.push_back({shape_feature(2), color_feature(3), position_feature(0), 0.2, 0, 0});
    two.objects.push_back({shape_feature(2), color_feature(3), position_feature(1), 0.2, 0, 0});
    auto c2 = feature_vector(two);
    CHECK(c2[2] == 2);   // square x2
    CHECK(c2[8] == 2);   // pink x2
    CHECK(c2[11] == 1);  // top-left
    CHECK(c2[12] == 1);  // top-right

    ImageAnnotation empty;
    auto c3 = feature_vector(empty);
    for (int v : c3) CHECK(v == 0);
}

TEST_CASE("generate_dataset honors the configured counts") {
    GenConfig cfg = desk_config();
    cfg.image_count = 500;
    DatasetManifest m = generate_dataset(cfg, 7);
    REQUIRE(m.annotations.size() == 500);
    for (const auto& ann : m.annotations) {
        CHECK(ann.objects.size() >= 1);
        CHECK(ann.objects.size() <= 5);
        // feature_present is the support of feature_counts
        for (int i = 0; i < kNumFeatures; ++i)
            CHECK((ann.feature_present[i] == 1) == (ann.feature_counts[i] > 0));
        int shape_total = 0;
        for (int i = 0; i < kNumShapes; ++i) shape_total += ann.feature_counts[i];
        CHECK(shape_total == static_cast<int>(ann.objects.size()));
    }
}

TEST_CASE("empty dataset config yields empty manifest and probe set") {
    GenConfig cfg = desk_config();
    cfg.image_count = 0;
    DatasetManifest m = generate_dataset(cfg, 9);
    CHECK(m.annotations.empty());
    CHECK(m.probe_set.empty());
}

TEST_CASE("regeneration is byte-identical") {
    GenConfig cfg = desk_config();
    cfg.image_count = 40;
    cfg.probe_reps = 2;
    DatasetManifest a = generate_dataset(cfg, 42);
    DatasetManifest b = generate_dataset(cfg, 42);
    CHECK(manifest_to_json(a) == manifest_to_json(b));
    for (size_t i = 0; i < a.annotations.size(); ++i)
        CHECK(encode_ppm(render_image(a.annotations[i], cfg.canvas)) ==
              encode_ppm(render_image(b.annotations[i], cfg.canvas)));
    // a different seed changes the content
    DatasetManifest c = generate_dataset(cfg, 43);
    CHECK(manifest_to_json(a) != manifest_to_json(c));
}

TEST_CASE("positions within one image never repeat") {
    GenConfig cfg = desk_config();
    cfg.image_count = 200;
    DatasetManifest m = generate_dataset(cfg, 3);
    for (const auto& ann : m.annotations) {
        std::set<int> cells;
        for (const auto& obj : ann.objects) cells.insert(obj.position.value);
        CHECK(cells.size() == ann.objects.size());
    }
}

TEST_CASE("marginal frequencies stay near uniform over 500 images") {
    GenConfig cfg = desk_config();
    DatasetManifest m = generate_dataset(cfg, 42);
    std::array<int, kNumFeatures> counts{};
    int objects = 0;
    for (const auto& ann : m.annotations) {
        objects += static_cast<int>(ann.objects.size());
        for (int i = 0; i < kNumFeatures; ++i) counts[i] += ann.feature_counts[i];
    }
    for (int s = 0; s < kNumShapes; ++s) {
        const double f = static_cast<double>(counts[s]) / objects;
        CHECK(f > 0.15);
        CHECK(f < 0.25);
    }
    for (int c = 0; c < kNumColors; ++c) {
        const double f = static_cast<double>(counts[kColorBase + c]) / objects;
        CHECK(f > 1.0 / 6.0 - 0.05);
        CHECK(f < 1.0 / 6.0 + 0.05);
    }
    for (int p = 0; p < kNumPositions; ++p) {
        const double f = static_cast<double>(counts[kPositionBase + p]) / objects;
        CHECK(f > 0.15);
        CHECK(f < 0.25);
    }
}

TEST_CASE("probe set enumerates every combination") {
    GenConfig cfg = desk_config();
    SUBCASE("r=1 gives 150 probes with exact per-feature counts") {
        auto probes = generate_probe_set(cfg, 5);
        REQUIRE(probes.size() == 150);
        std::array<int, kNumFeatures> seen{};
        for (const auto& p : probes) {
            REQUIRE(p.objects.size() == 1);
            for (int i = 0; i < kNumFeatures; ++i) seen[i] += p.feature_present[i];
        }
        for (int s = 0; s < kNumShapes; ++s) CHECK(seen[s] == 30);           // 6*5
        for (int c = 0; c < kNumColors; ++c) CHECK(seen[kColorBase + c] == 25);  // 5*5
        for (int p = 0; p < kNumPositions; ++p) CHECK(seen[kPositionBase + p] == 30);
    }
    SUBCASE("r=2 regenerates byte-identically") {
        cfg.probe_reps = 2;
        auto a = generate_probe_set(cfg, 11);
        auto b = generate_probe_set(cfg, 11);
        REQUIRE(a.size() == 300);
        REQUIRE(b.size() == 300);
        for (size_t i = 0; i < a.size(); ++i)
            CHECK(encode_ppm(render_image(a[i], cfg.canvas)) ==
                  encode_ppm(render_image(b[i], cfg.canvas)));
    }
}

TEST_CASE("invalid configurations are rejected") {
    GenConfig cfg = desk_config();
    SUBCASE("zero canvas") {
        cfg.canvas = 0;
        CHECK_THROWS_AS(generate_dataset(cfg, 1), Error);
    }
    SUBCASE("object range outside [1,5]") {
        cfg.object_max = 6;
        CHECK_THROWS_AS(generate_dataset(cfg, 1), Error);
    }
    SUBCASE("canvas not divisible by patch") {
        cfg.canvas = 65;
        CHECK_THROWS_AS(generate_dataset(cfg, 1), Error);
    }
    SUBCASE("oversize objects cannot guarantee containment") {
        cfg.scale_max = 0.6;
        CHECK_THROWS_AS(generate_dataset(cfg, 1), Error);
    }
}

TEST_CASE("render places a red square at the canvas center") {
    ImageAnnotation ann;
    ann.objects.push_back({shape_feature(2), color_feature(0), position_feature(4),
                           0.25, 0.0, 0.0});
    RasterImage img = render_image(ann, 64);
    CHECK(img.get(32, 32) == Rgb{255, 0, 0});
    CHECK(img.get(0, 0) == Rgb{255, 255, 255});
    CHECK(img.get(63, 63) == Rgb{255, 255, 255});
    // determinism by construction
    CHECK(encode_ppm(render_image(ann, 64)) == encode_ppm(img));
}

TEST_CASE("degenerate and out-of-canvas objects are render errors") {
    ImageAnnotation zero;
    zero.objects.push_back({shape_feature(0), color_feature(0), position_feature(4),
                            0.0, 0.0, 0.0});
    CHECK_THROWS_AS(render_image(zero, 64), Error);

    ImageAnnotation outside;
    outside.objects.push_back({shape_feature(0), color_feature(0), position_feature(0),
                               0.3, -10.0, -10.0});
    CHECK_THROWS_AS(render_image(outside, 64), Error);
}

TEST_CASE("all five shapes and six colors rasterize") {
    for (int s = 0; s < kNumShapes; ++s)
        for (int c = 0; c < kNumColors; ++c) {
            ImageAnnotation ann;
            ann.objects.push_back({shape_feature(s), color_feature(c),
                                   position_feature(4), 0.3, 0.0, 0.0});
            RasterImage img = render_image(ann, 64);
            CHECK(img.get(32, 34) == color_rgb(c));  // just below center: inside
        }
}

TEST_CASE("manifest json round trip") {
    GenConfig cfg = desk_config();
    cfg.image_count = 12;
    DatasetManifest m = generate_dataset(cfg, 4);
    const std::string text = manifest_to_json(m);
    DatasetManifest back = manifest_from_json(text);
    CHECK(manifest_to_json(back) == text);
    CHECK(back.seed == m.seed);
    CHECK(back.annotations.size() == m.annotations.size());

    CHECK_THROWS_AS(manifest_from_json("{not json"), Error);
    CHECK_THROWS_AS(manifest_from_json("{\"format\":\"other\"}"), Error);
}
