#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "vitscope/error.hpp"
#include "vitscope/rng.hpp"
#include "vitscope/superpos.hpp"

using namespace vitscope;
namespace sp = vitscope::superpos;

namespace {

std::vector<lab::NeuronProfile> uniform_profiles(int n) {
    std::vector<lab::NeuronProfile> ps(n);
    for (int i = 0; i < n; ++i) {
        ps[i].layer = 0;
        ps[i].unit = i;
        ps[i].affinities.fill(1.0 / 16.0);
        ps[i].entropy_bits = 4.0;
    }
    return ps;
}

std::vector<int> identity_ranking(int n) {
    std::vector<int> r(n);
    std::iota(r.begin(), r.end(), 0);
    return r;
}

// Single-object probe embeddings with controllable vectors.
sp::ProbeEmbeddings probes_from(
    int dim, const std::vector<std::pair<std::vector<double>, std::vector<int>>>& rows) {
    sp::ProbeEmbeddings p;
    p.dim = dim;
    for (const auto& [vec, feats] : rows) {
        p.vectors.push_back(vec);
        std::array<uint8_t, kNumFeatures> present{};
        for (int f : feats) present[f] = 1;
        p.present.push_back(present);
    }
    return p;
}

}  // namespace

TEST_CASE("superposition score on canonical fixtures") {
    SUBCASE("uniform affinities, n = 1000 -> exactly 125") {
        auto ps = uniform_profiles(1000);
        auto rank = identity_ranking(1000);
        const double s = sp::superposition_S(3, 9, ps, rank, 1000);
        CHECK(s == 125.0);
        CHECK(sp::superposition_S_simplified(3, 9, ps, rank, 1000) == 125.0);
    }
    SUBCASE("delta affinity attains the upper bound n") {
        auto ps = uniform_profiles(50);
        for (auto& p : ps) {
            p.affinities.fill(0.0);
            p.affinities[4] = 1.0;
        }
        auto rank = identity_ranking(50);
        CHECK(sp::superposition_S(4, 7, ps, rank, 50) == 50.0);
    }
    SUBCASE("hand-built profiles match the direct formula") {
        std::vector<lab::NeuronProfile> ps(3);
        Rng rng(3);
        for (auto& p : ps) {
            double total = 0.0;
            for (int f = 0; f < 16; ++f) {
                p.affinities[f] = rng.uniform(0, 1);
                total += p.affinities[f];
            }
            for (int f = 0; f < 16; ++f) p.affinities[f] /= total;
        }
        auto rank = identity_ranking(3);
        const int f1 = 2, f2 = 11;
        double expect = 0.0;
        for (int i = 0; i < 3; ++i) {
            double denom = 0.0;
            for (int f = 0; f < 16; ++f) denom += ps[i].affinities[f];
            expect += (ps[i].affinities[f1] + ps[i].affinities[f2]) / denom;
        }
        CHECK(sp::superposition_S(f1, f2, ps, rank, 3) ==
              doctest::Approx(expect).epsilon(1e-15));
        // written vs simplified agree for normalized affinities
        CHECK(std::abs(sp::superposition_S(f1, f2, ps, rank, 3) -
                       sp::superposition_S_simplified(f1, f2, ps, rank, 3)) < 1e-12);
    }
    SUBCASE("input validation") {
        auto ps = uniform_profiles(4);
        auto rank = identity_ranking(4);
        CHECK_THROWS_AS(sp::superposition_S(1, 1, ps, rank, 4), Error);
        CHECK_THROWS_AS(sp::superposition_S(0, 1, ps, rank, 0), Error);
        CHECK_THROWS_AS(sp::superposition_S(0, 1, ps, rank, 5), Error);
    }
}

TEST_CASE("cluster construction and exclusion rules") {
    // 4 probes: red circle, red square, blue circle, blue square (center)
    auto probes = probes_from(2, {
        {{0.0, 0.0}, {5, 0, 15}},
        {{1.0, 0.0}, {5, 2, 15}},
        {{0.0, 1.0}, {7, 0, 15}},
        {{1.0, 1.0}, {7, 2, 15}},
    });
    SUBCASE("same-attribute pair has no exclusions") {
        auto [red, blue] = sp::build_clusters(probes, 5, 7);
        CHECK(red.members.size() == 2);
        CHECK(blue.members.size() == 2);
        CHECK(red.centroid == std::vector<double>{0.5, 0.0});
        CHECK(blue.centroid == std::vector<double>{0.5, 1.0});
    }
    SUBCASE("cross-attribute overlap drops the ambiguous probes") {
        auto [red, circle] = sp::build_clusters(probes, 5, 0);
        // the red circle carries both features -> excluded from both sides
        CHECK(red.members == std::vector<int>{1});
        CHECK(circle.members == std::vector<int>{2});
    }
    SUBCASE("empty cluster is a metric error naming the pair") {
        auto lonely = probes_from(2, {{{0.0, 0.0}, {5}}});
        try {
            sp::build_clusters(lonely, 5, 7);
            FAIL("expected metric error");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::Metric);
            CHECK(std::string(e.what()).find("blue") != std::string::npos);
        }
    }
    SUBCASE("rebuilding gives bitwise-identical centroids") {
        auto a = sp::build_clusters(probes, 5, 7);
        auto b = sp::build_clusters(probes, 5, 7);
        CHECK(a.first.centroid == b.first.centroid);
        CHECK(a.second.centroid == b.second.centroid);
    }
}

TEST_CASE("centroid distance") {
    sp::FeatureCluster a, b;
    a.centroid = {0.0, 0.0};
    b.centroid = {3.0, 4.0};
    CHECK(sp::distance_D(a, b) == 5.0);
    b.centroid = a.centroid;
    CHECK(sp::distance_D(a, b) == 0.0);
    b.centroid = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(sp::distance_D(a, b), Error);

    SUBCASE("random clusters match the brute-force norm") {
        Rng rng(7);
        sp::FeatureCluster x, y;
        for (int d = 0; d < 8; ++d) {
            x.centroid.push_back(rng.uniform(-2, 2));
            y.centroid.push_back(rng.uniform(-2, 2));
        }
        double s = 0;
        for (int d = 0; d < 8; ++d) {
            const double diff = x.centroid[d] - y.centroid[d];
            s += diff * diff;
        }
        CHECK(sp::distance_D(x, y) == doctest::Approx(std::sqrt(s)).epsilon(1e-15));
    }
}

TEST_CASE("misclassification rate") {
    SUBCASE("1-D hand instance gives M = 1/4") {
        // c1 = {0, 1}, c2 = {0.4, 10}: centroids 0.5 and 5.2; only 0.4 lands
        // nearer the wrong centroid.
        auto probes = probes_from(1, {
            {{0.0}, {5}}, {{1.0}, {5}}, {{0.4}, {7}}, {{10.0}, {7}},
        });
        auto [c1, c2] = sp::build_clusters(probes, 5, 7);
        CHECK(c1.centroid[0] == doctest::Approx(0.5));
        CHECK(c2.centroid[0] == doctest::Approx(5.2));
        CHECK(sp::misclassification_M(probes, c1, c2) == 0.25);
    }
    SUBCASE("perfect separation gives M = 0") {
        auto probes = probes_from(1, {
            {{0.0}, {5}}, {{0.2}, {5}}, {{9.8}, {7}}, {{10.0}, {7}},
        });
        auto [c1, c2] = sp::build_clusters(probes, 5, 7);
        CHECK(sp::misclassification_M(probes, c1, c2) == 0.0);
    }
    SUBCASE("identical multisets tie to their own cluster -> M = 0") {
        auto probes = probes_from(1, {
            {{1.0}, {5}}, {{2.0}, {5}}, {{1.0}, {7}}, {{2.0}, {7}},
        });
        auto [c1, c2] = sp::build_clusters(probes, 5, 7);
        CHECK(sp::distance_D(c1, c2) == 0.0);
        CHECK(sp::misclassification_M(probes, c1, c2) == 0.0);
    }
    SUBCASE("leave-one-out variant moves the boundary") {
        auto probes = probes_from(1, {
            {{0.0}, {5}}, {{1.0}, {5}}, {{0.4}, {7}}, {{10.0}, {7}},
        });
        auto [c1, c2] = sp::build_clusters(probes, 5, 7);
        const double m_loo = sp::misclassification_M(probes, c1, c2, true);
        // member 0.4: own centroid without it = 10 -> 9.6 vs 0.1 -> wrong
        // member 10: own centroid without it = 0.4 -> 9.6 vs 9.5 -> wrong
        CHECK(m_loo == 0.5);
    }
}

TEST_CASE("pairwise sweep covers all 120 pairs symmetrically") {
    auto ps = uniform_profiles(20);
    auto rank = identity_ranking(20);
    // embeddings: one probe per feature pair pattern (single-feature probes
    // for every feature so no cluster is empty)
    std::vector<std::pair<std::vector<double>, std::vector<int>>> rows;
    Rng rng(11);
    for (int f = 0; f < 16; ++f) {
        for (int r = 0; r < 2; ++r) {
            std::vector<double> v = {static_cast<double>(f) + 0.1 * r, 1.0 - 0.1 * r};
            rows.push_back({v, {f}});
        }
    }
    auto probes = probes_from(2, rows);
    auto table = sp::pairwise_sweep(ps, rank, probes, 20);
    REQUIRE(table.size() == 120);
    for (const auto& row : table) {
        CHECK(row.valid);
        CHECK(row.S == doctest::Approx(20.0 * 2.0 / 16.0));
        // S is symmetric by the formula
        CHECK(sp::superposition_S(row.f2, row.f1, ps, rank, 20) ==
              doctest::Approx(row.S).epsilon(1e-15));
        CHECK(row.D >= 0.0);
        CHECK(row.M >= 0.0);
        CHECK(row.M <= 1.0);
    }
}

TEST_CASE("correlation coefficients") {
    SUBCASE("strictly inverse ranking gives spearman -1") {
        std::vector<double> s = {1, 2, 3, 4, 5};
        std::vector<double> d = {10, 8, 6, 4, 2};
        CHECK(sp::spearman(s, d) == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(sp::pearson(s, d) == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("average ranks handle ties") {
        std::vector<double> x = {1.0, 2.0, 2.0, 3.0};
        auto r = sp::average_ranks(x);
        CHECK(r[0] == 1.0);
        CHECK(r[1] == 2.5);
        CHECK(r[2] == 2.5);
        CHECK(r[3] == 4.0);
    }
    SUBCASE("random table matches the textbook formulas") {
        Rng rng(13);
        std::vector<double> x(10), y(10);
        for (int i = 0; i < 10; ++i) {
            x[i] = rng.uniform(-3, 3);
            y[i] = rng.uniform(-3, 3);
        }
        // brute-force reference
        double sx = 0, sy = 0;
        for (int i = 0; i < 10; ++i) {
            sx += x[i];
            sy += y[i];
        }
        const double mx = sx / 10, my = sy / 10;
        double num = 0, dx = 0, dy = 0;
        for (int i = 0; i < 10; ++i) {
            num += (x[i] - mx) * (y[i] - my);
            dx += (x[i] - mx) * (x[i] - mx);
            dy += (y[i] - my) * (y[i] - my);
        }
        CHECK(sp::pearson(x, y) ==
              doctest::Approx(num / std::sqrt(dx * dy)).epsilon(1e-12));
    }
    SUBCASE("correlate flags zero-variance columns instead of NaN") {
        std::vector<sp::PairMetrics> table(5);
        for (int i = 0; i < 5; ++i) {
            table[i].valid = true;
            table[i].S = i + 1.0;
            table[i].D = 10.0 - i;
            table[i].M = 0.5;  // constant
        }
        auto corr = sp::correlate(table);
        CHECK(corr.spearman_SD.defined);
        CHECK(corr.spearman_SD.value == doctest::Approx(-1.0));
        CHECK(!corr.spearman_SM.defined);
        CHECK(!corr.pearson_SM.defined);
    }
    SUBCASE("fewer than 3 valid rows is an input error") {
        std::vector<sp::PairMetrics> table(2);
        table[0].valid = table[1].valid = true;
        CHECK_THROWS_AS(sp::correlate(table), Error);
    }
}
