#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "vitscope/dataset.hpp"
#include "vitscope/error.hpp"
#include "vitscope/gradcam.hpp"
#include "vitscope/neuron_lab.hpp"
#include "vitscope/rng.hpp"

using namespace vitscope;
namespace lab = vitscope::lab;

namespace {

ViTConfig tiny_config() {
    ViTConfig c;
    c.image_size = 16;
    c.patch_size = 8;
    c.layers = 2;
    c.d_model = 16;
    c.heads = 2;
    c.mlp_hidden = 32;
    c.embed_dim = 8;
    return c;
}

// Hand-buildable activation matrix.
lab::ActivationMatrix make_matrix(int layers, int d_model, int images,
                                  const std::vector<double>& data) {
    lab::ActivationMatrix m;
    m.layers = layers;
    m.d_model = d_model;
    m.images = images;
    m.data = data;
    return m;
}

ImageAnnotation ann_with(int id, std::vector<std::array<int, 3>> objects) {
    ImageAnnotation ann;
    ann.image_id = id;
    for (auto [s, c, p] : objects)
        ann.objects.push_back({shape_feature(s), color_feature(c),
                               position_feature(p), 0.2, 0.0, 0.0});
    ann.refresh_features();
    return ann;
}

// Independent reference for Algorithm 1 used by the oracle-equivalence tests:
// plain loops, no shared helpers with the implementation.
struct BruteProfile {
    std::vector<int> top;
    std::array<double, 16> o{};
    std::array<double, 16> a{};
    double H = 0.0;
};

BruteProfile brute_profile(const std::vector<double>& row,
                           const std::vector<ImageAnnotation>& anns, int k) {
    BruteProfile bp;
    std::vector<int> ids(row.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int x, int y) {
        if (row[x] != row[y]) return row[x] > row[y];
        return x < y;
    });
    bp.top.assign(ids.begin(), ids.begin() + k);
    for (int img : bp.top) {
        const auto counts = feature_vector(anns[img]);
        for (int f = 0; f < 16; ++f) bp.o[f] += counts[f];
    }
    double total = 0.0;
    for (int f = 0; f < 16; ++f) {
        bp.o[f] /= k;
        total += bp.o[f];
    }
    for (int f = 0; f < 16; ++f) bp.a[f] = total > 0 ? bp.o[f] / total : 0.0;
    for (int f = 0; f < 16; ++f)
        if (bp.a[f] > 0) bp.H -= bp.a[f] * std::log2(bp.a[f]);
    return bp;
}

}  // namespace

TEST_CASE("image_activation aggregators") {
    ActivationRecord rec;
    rec.layer = 0;
    rec.unit = 0;
    SUBCASE("constant record: all aggregators agree") {
        rec.per_token = {2.5, 2.5, 2.5, 2.5};
        CHECK(lab::image_activation(rec, lab::Aggregator::MeanPatches) == 2.5);
        CHECK(lab::image_activation(rec, lab::Aggregator::MaxPatches) == 2.5);
        CHECK(lab::image_activation(rec, lab::Aggregator::Cls) == 2.5);
    }
    SUBCASE("cls vs patch statistics") {
        rec.per_token = {9.0, 1.0, 2.0, 3.0};
        CHECK(lab::image_activation(rec, lab::Aggregator::MeanPatches) == 2.0);
        CHECK(lab::image_activation(rec, lab::Aggregator::MaxPatches) == 3.0);
        CHECK(lab::image_activation(rec, lab::Aggregator::Cls) == 9.0);
    }
    SUBCASE("mean equals the direct summation oracle") {
        Rng rng(3);
        rec.per_token.resize(17);
        for (auto& v : rec.per_token) v = rng.uniform(-5, 5);
        double s = 0;
        for (size_t t = 1; t < rec.per_token.size(); ++t) s += rec.per_token[t];
        CHECK(lab::image_activation(rec, lab::Aggregator::MeanPatches) ==
              doctest::Approx(s / 16.0).epsilon(1e-15));
    }
    SUBCASE("empty record is an input error") {
        CHECK_THROWS_AS(lab::image_activation(rec, lab::Aggregator::Cls), Error);
    }
}

TEST_CASE("shannon entropy reference points") {
    SUBCASE("uniform over 16 is exactly 4 bits") {
        std::vector<double> a(16, 1.0 / 16.0);
        CHECK(std::abs(lab::shannon_entropy_bits(a) - 4.0) < 1e-12);
    }
    SUBCASE("one-hot is 0 bits") {
        std::vector<double> a(16, 0.0);
        a[7] = 1.0;
        CHECK(lab::shannon_entropy_bits(a) == 0.0);
    }
    SUBCASE("(0.3, 0.3, 0.2, 0.2) evaluates to 1.9710 bits") {
        // High-precision oracle: direct evaluation with long double.
        const long double terms[] = {0.3L, 0.3L, 0.2L, 0.2L};
        long double href = 0.0L;
        for (long double p : terms) href -= p * std::log2(p);
        std::vector<double> a = {0.3, 0.3, 0.2, 0.2};
        const double h = lab::shannon_entropy_bits(a);
        CHECK(std::abs(h - static_cast<double>(href)) < 1e-12);
        CHECK(std::abs(h - 1.9710) < 1e-3);
    }
}

TEST_CASE("profile_neuron implements Algorithm 1") {
    // 1 layer x 2 units, 4 images
    std::vector<ImageAnnotation> anns = {
        ann_with(0, {{0, 0, 4}}),          // red circle center
        ann_with(1, {{2, 3, 0}, {2, 3, 1}}),  // two pink squares
        ann_with(2, {{1, 2, 2}}),          // blue triangle bottom-left
        ann_with(3, {{0, 0, 0}}),          // red circle top-left
    };
    DatasetManifest manifest;
    manifest.annotations = anns;
    auto m = make_matrix(1, 2, 4,
                         {5.0, 1.0, 4.0, 5.0,    // unit 0
                          0.0, 0.0, 0.0, 0.0});  // unit 1: constant

    SUBCASE("top-k ties break by ascending image id") {
        auto p = lab::profile_neuron(m, manifest, 0, 0, 3);
        REQUIRE(p.top_images.size() == 3);
        CHECK(p.top_images[0] == 0);  // 5.0, id 0 before id 3
        CHECK(p.top_images[1] == 3);
        CHECK(p.top_images[2] == 2);  // 4.0
        // o: two red circles (ids 0,3) + one blue triangle (id 2), k=3
        CHECK(p.occurrences[0] == doctest::Approx(2.0 / 3.0));  // circle
        CHECK(p.occurrences[5] == doctest::Approx(2.0 / 3.0));  // red
        CHECK(p.occurrences[1] == doctest::Approx(1.0 / 3.0));  // triangle
        const double sum_a =
            std::accumulate(p.affinities.begin(), p.affinities.end(), 0.0);
        CHECK(std::abs(sum_a - 1.0) < 1e-12);
        CHECK(!p.degenerate);
    }
    SUBCASE("constant rows are degenerate") {
        auto p = lab::profile_neuron(m, manifest, 0, 1, 3);
        CHECK(p.degenerate);
    }
    SUBCASE("k out of range is an input error") {
        CHECK_THROWS_AS(lab::profile_neuron(m, manifest, 0, 0, 5), Error);
        CHECK_THROWS_AS(lab::profile_neuron(m, manifest, 0, 0, 0), Error);
    }
}

TEST_CASE("pipeline equals the brute-force reference on a hand instance") {
    // 5 neurons x 10 images with varied annotations, incl. ties
    Rng rng(17);
    std::vector<ImageAnnotation> anns;
    for (int i = 0; i < 10; ++i) {
        const int n_obj = 1 + static_cast<int>(rng.bounded(3));
        std::vector<std::array<int, 3>> objs;
        std::vector<int> cells = {0, 1, 2, 3, 4};
        for (int j = 0; j < n_obj; ++j) {
            const int pick = static_cast<int>(rng.bounded(cells.size()));
            objs.push_back({static_cast<int>(rng.bounded(5)),
                            static_cast<int>(rng.bounded(6)), cells[pick]});
            cells.erase(cells.begin() + pick);
        }
        anns.push_back(ann_with(i, objs));
    }
    DatasetManifest manifest;
    manifest.annotations = anns;

    std::vector<double> data(5 * 10);
    for (auto& v : data) v = std::round(rng.uniform(0, 6)) / 2.0;  // force ties
    auto matrix = make_matrix(1, 5, 10, data);

    const int k = 4;
    auto profiles = lab::profile_all(matrix, manifest, k);
    auto ranking = lab::rank_neurons(profiles);

    std::vector<double> brute_h;
    for (int u = 0; u < 5; ++u) {
        std::vector<double> row(data.begin() + u * 10, data.begin() + (u + 1) * 10);
        BruteProfile bp = brute_profile(row, anns, k);
        const auto& p = profiles[u];
        if (p.degenerate) continue;
        CHECK(p.top_images == bp.top);
        for (int f = 0; f < 16; ++f) {
            CHECK(p.occurrences[f] == doctest::Approx(bp.o[f]).epsilon(1e-15));
            CHECK(p.affinities[f] == doctest::Approx(bp.a[f]).epsilon(1e-15));
        }
        CHECK(p.entropy_bits == doctest::Approx(bp.H).epsilon(1e-15));
        brute_h.push_back(bp.H);
    }
    // ranking equals the entropy sort of the reference
    std::vector<double> ranked_h;
    for (int idx : ranking.ranked) ranked_h.push_back(profiles[idx].entropy_bits);
    CHECK(std::is_sorted(ranked_h.begin(), ranked_h.end()));
    std::sort(brute_h.begin(), brute_h.end());
    REQUIRE(ranked_h.size() == brute_h.size());
    for (size_t i = 0; i < brute_h.size(); ++i)
        CHECK(ranked_h[i] == doctest::Approx(brute_h[i]).epsilon(1e-15));
}

TEST_CASE("entropy bounds hold for all profiles") {
    Rng rng(23);
    GenConfig gcfg;
    gcfg.canvas = 16;
    gcfg.image_count = 30;
    DatasetManifest manifest = generate_dataset(gcfg, 29);
    std::vector<double> data(3 * 30);
    for (auto& v : data) v = rng.uniform(-1, 1);
    auto matrix = make_matrix(1, 3, 30, data);
    auto profiles = lab::profile_all(matrix, manifest, 10);
    for (const auto& p : profiles) {
        CHECK(p.entropy_bits >= 0.0);
        CHECK(p.entropy_bits <= 4.0 + 1e-12);
        if (!p.degenerate) {
            const double sum_a =
                std::accumulate(p.affinities.begin(), p.affinities.end(), 0.0);
            CHECK(std::abs(sum_a - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("rank_neurons orders by entropy with deterministic ties") {
    std::vector<lab::NeuronProfile> profiles(3);
    profiles[0].layer = 0;
    profiles[0].unit = 0;
    profiles[0].entropy_bits = 2.0;
    profiles[1].layer = 0;
    profiles[1].unit = 1;
    profiles[1].entropy_bits = 1.0;
    profiles[2].layer = 0;
    profiles[2].unit = 2;
    profiles[2].entropy_bits = 3.0;
    auto ranking = lab::rank_neurons(profiles);
    REQUIRE(ranking.ranked.size() == 3);
    CHECK(ranking.ranked[0] == 1);
    CHECK(ranking.ranked[1] == 0);
    CHECK(ranking.ranked[2] == 2);
    CHECK(profiles[1].percentile == doctest::Approx(100.0 / 3.0));
    CHECK(profiles[0].percentile == doctest::Approx(200.0 / 3.0));
    CHECK(profiles[2].percentile == doctest::Approx(100.0));

    SUBCASE("equal entropies fall back to (layer, unit)") {
        for (auto& p : profiles) p.entropy_bits = 1.5;
        profiles[2].layer = 1;
        auto r2 = lab::rank_neurons(profiles);
        CHECK(r2.ranked == std::vector<int>{0, 1, 2});
    }
}

TEST_CASE("entropy histogram partitions [0,4]") {
    SUBCASE("single profile, one bin") {
        std::vector<lab::NeuronProfile> ps(1);
        ps[0].entropy_bits = 2.2;
        auto bins = lab::entropy_histogram(ps, 1);
        REQUIRE(bins.size() == 1);
        CHECK(bins[0].count == 1);
        CHECK(bins[0].lo == 0.0);
        CHECK(bins[0].hi == 4.0);
    }
    SUBCASE("widths sum to the range and counts are conserved") {
        std::vector<lab::NeuronProfile> ps(100);
        Rng rng(31);
        for (auto& p : ps) p.entropy_bits = rng.uniform(0, 4);
        ps[0].entropy_bits = 4.0;  // boundary case lands in the last bin
        auto bins = lab::entropy_histogram(ps, 7);
        double total_w = 0.0;
        int total_c = 0;
        for (const auto& b : bins) {
            total_w += b.hi - b.lo;
            total_c += b.count;
        }
        CHECK(total_w == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(total_c == 100);
    }
    SUBCASE("bins must be positive") {
        std::vector<lab::NeuronProfile> ps(1);
        CHECK_THROWS_AS(lab::entropy_histogram(ps, 0), Error);
    }
}

TEST_CASE("activation matrix from the model and its persistence") {
    GenConfig gcfg;
    gcfg.canvas = 16;
    gcfg.image_count = 6;
    DatasetManifest manifest = generate_dataset(gcfg, 37);
    std::vector<RasterImage> images;
    for (const auto& ann : manifest.annotations)
        images.push_back(render_image(ann, gcfg.canvas));
    VitModel model(tiny_config(), 38);

    auto m = lab::build_activation_matrix(model, manifest, images,
                                          lab::Aggregator::MeanPatches);
    CHECK(m.rows() == 32);
    CHECK(m.images == 6);

    SUBCASE("rebuild is bit-identical") {
        auto m2 = lab::build_activation_matrix(model, manifest, images,
                                               lab::Aggregator::MeanPatches);
        CHECK(m.data == m2.data);
    }
    SUBCASE("matrix round-trips through disk") {
        const auto tmp = std::filesystem::temp_directory_path() / "vitscope_m.bin";
        lab::save_matrix(m, tmp);
        auto back = lab::load_matrix(tmp);
        CHECK(back.layers == m.layers);
        CHECK(back.d_model == m.d_model);
        CHECK(back.images == m.images);
        CHECK(back.aggregator == m.aggregator);
        CHECK(back.data == m.data);
        std::filesystem::remove(tmp);
    }
    SUBCASE("matrix entries match per-record aggregation") {
        ForwardResult fr = model.forward(images[2], TapSpec::All());
        for (const auto& rec : fr.records) {
            const double expect = lab::image_activation(rec, lab::Aggregator::MeanPatches);
            CHECK(m.at(rec.layer * 16 + rec.unit, 2) == expect);
        }
    }
    SUBCASE("image count mismatch is an error") {
        images.pop_back();
        CHECK_THROWS_AS(lab::build_activation_matrix(model, manifest, images,
                                                     lab::Aggregator::MeanPatches),
                        Error);
    }
}

TEST_CASE("patchwise map equals the ALL-taps record") {
    GenConfig gcfg;
    gcfg.canvas = 16;
    gcfg.image_count = 1;
    DatasetManifest manifest = generate_dataset(gcfg, 41);
    RasterImage img = render_image(manifest.annotations[0], 16);
    VitModel model(tiny_config(), 42);

    auto values = lab::patchwise_map(model, img, 1, 5);
    REQUIRE(values.size() == 4);  // 2x2 grid
    ForwardResult fr = model.forward(img, TapSpec::All());
    const auto& rec = fr.records[1 * 16 + 5];
    for (size_t i = 0; i < values.size(); ++i)
        CHECK(values[i] == rec.per_token[i + 1]);

    SUBCASE("constant field renders mid-ramp") {
        std::vector<double> flat(4, 1.23);
        RasterImage r = lab::render_patchwise(flat, 2, 8);
        const Rgb mid = gradcam::ramp(0.5);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) CHECK(r.get(x, y) == mid);
    }
}
