#include "vitscope/superpos.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "vitscope/error.hpp"
#include "vitscope/text.hpp"

namespace vitscope::superpos {

namespace {

void check_pair(int f1, int f2) {
    if (f1 == f2)
        raise(ErrorCategory::Input,
              "feature pair must be distinct, got " + feature_name(f1) + " twice");
    feature_from_index(f1);
    feature_from_index(f2);
}

void check_n(std::span<const int> ranked, int n) {
    if (n < 1) raise(ErrorCategory::Input, "n must be >= 1");
    if (n > static_cast<int>(ranked.size()))
        raise(ErrorCategory::Input,
              "n = " + std::to_string(n) + " exceeds the " +
                  std::to_string(ranked.size()) + " ranked neurons");
}

}  // namespace

double superposition_S(int f1, int f2,
                       std::span<const lab::NeuronProfile> profiles,
                       std::span<const int> ranked, int n) {
    check_pair(f1, f2);
    check_n(ranked, n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& a = profiles[ranked[i]].affinities;
        double denom = 0.0;
        for (int j = 0; j < kNumFeatures; ++j) denom += a[j];
        s += (a[f1] + a[f2]) / denom;
    }
    return s;
}

double superposition_S_simplified(int f1, int f2,
                                  std::span<const lab::NeuronProfile> profiles,
                                  std::span<const int> ranked, int n) {
    check_pair(f1, f2);
    check_n(ranked, n);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& a = profiles[ranked[i]].affinities;
        s += a[f1] + a[f2];
    }
    return s;
}

std::pair<FeatureCluster, FeatureCluster> build_clusters(
    const ProbeEmbeddings& probes, int f1, int f2) {
    check_pair(f1, f2);
    FeatureCluster c1, c2;
    c1.feature = f1;
    c2.feature = f2;
    for (size_t i = 0; i < probes.size(); ++i) {
        const bool has1 = probes.present[i][f1] != 0;
        const bool has2 = probes.present[i][f2] != 0;
        if (has1 && has2) continue;  // ambiguous under this pair
        if (has1) c1.members.push_back(static_cast<int>(i));
        if (has2) c2.members.push_back(static_cast<int>(i));
    }
    if (c1.members.empty() || c2.members.empty())
        raise(ErrorCategory::Metric,
              "empty cluster for pair {" + feature_name(f1) + "," +
                  feature_name(f2) + "}");
    auto centroid = [&](FeatureCluster& c) {
        c.centroid.assign(probes.dim, 0.0);
        for (int m : c.members) {
            const auto& v = probes.vectors[m];
            for (int d = 0; d < probes.dim; ++d) c.centroid[d] += v[d];
        }
        const double inv = 1.0 / static_cast<double>(c.members.size());
        for (auto& x : c.centroid) x *= inv;
    };
    centroid(c1);
    centroid(c2);
    return {std::move(c1), std::move(c2)};
}

double distance_D(const FeatureCluster& c1, const FeatureCluster& c2) {
    if (c1.centroid.size() != c2.centroid.size())
        raise(ErrorCategory::Dimension,
              "centroid dimensions disagree: " + std::to_string(c1.centroid.size()) +
                  " vs " + std::to_string(c2.centroid.size()));
    double s = 0.0;
    for (size_t d = 0; d < c1.centroid.size(); ++d) {
        const double diff = c1.centroid[d] - c2.centroid[d];
        s += diff * diff;
    }
    return std::sqrt(s);
}

namespace {

double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

// Centroid of the cluster with one member removed.
std::vector<double> centroid_without(const ProbeEmbeddings& probes,
                                     const FeatureCluster& c, int member) {
    const size_t n = c.members.size();
    std::vector<double> out(probes.dim, 0.0);
    if (n <= 1) return c.centroid;  // nothing left to recompute against
    for (int m : c.members) {
        if (m == member) continue;
        const auto& v = probes.vectors[m];
        for (int d = 0; d < probes.dim; ++d) out[d] += v[d];
    }
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (auto& x : out) x *= inv;
    return out;
}

}  // namespace

double misclassification_M(const ProbeEmbeddings& probes,
                           const FeatureCluster& c1, const FeatureCluster& c2,
                           bool leave_one_out) {
    if (c1.members.empty() || c2.members.empty())
        raise(ErrorCategory::Metric, "misclassification over an empty cluster");
    int64_t wrong = 0, total = 0;
    auto run_side = [&](const FeatureCluster& own, const FeatureCluster& other) {
        for (int m : own.members) {
            const auto& v = probes.vectors[m];
            const std::vector<double> own_centroid =
                leave_one_out ? centroid_without(probes, own, m) : own.centroid;
            const double d_own = dist2(v, own_centroid);
            const double d_other = dist2(v, other.centroid);
            if (d_other < d_own) ++wrong;  // ties stay with the member's cluster
            ++total;
        }
    };
    run_side(c1, c2);
    run_side(c2, c1);
    return static_cast<double>(wrong) / static_cast<double>(total);
}

std::vector<PairMetrics> pairwise_sweep(
    std::span<const lab::NeuronProfile> profiles, std::span<const int> ranked,
    const ProbeEmbeddings& probes, int n, bool leave_one_out) {
    std::vector<PairMetrics> table;
    table.reserve(kNumFeatures * (kNumFeatures - 1) / 2);
    for (int f1 = 0; f1 < kNumFeatures; ++f1)
        for (int f2 = f1 + 1; f2 < kNumFeatures; ++f2) {
            PairMetrics row;
            row.f1 = f1;
            row.f2 = f2;
            row.S = superposition_S(f1, f2, profiles, ranked, n);
            try {
                auto [c1, c2] = build_clusters(probes, f1, f2);
                row.D = distance_D(c1, c2);
                row.M = misclassification_M(probes, c1, c2, leave_one_out);
                row.count1 = static_cast<int>(c1.members.size());
                row.count2 = static_cast<int>(c2.members.size());
                row.valid = true;
            } catch (const Error& e) {
                row.valid = false;
                row.flag = e.what();
            }
            table.push_back(std::move(row));
        }
    return table;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        raise(ErrorCategory::Input, "pearson needs two equal-length series");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        raise(ErrorCategory::Metric, "zero-variance series in correlation");
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> x) {
    const size_t n = x.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return x[a] < x[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        // ranks are 1-based; ties share the average of their positions
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t p = i; p <= j; ++p) ranks[order[p]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

Correlations correlate(std::span<const PairMetrics> table) {
    std::vector<double> s, d, m;
    for (const auto& row : table) {
        if (!row.valid) continue;
        s.push_back(row.S);
        d.push_back(row.D);
        m.push_back(row.M);
    }
    if (s.size() < 3)
        raise(ErrorCategory::Input,
              "correlate needs at least 3 valid rows, got " +
                  std::to_string(s.size()));
    Correlations out;
    auto compute = [](CorrResult& dst, auto&& fn) {
        try {
            dst.value = fn();
            dst.defined = true;
        } catch (const Error&) {
            dst = {0.0, false};
        }
    };
    compute(out.spearman_SD, [&] { return spearman(s, d); });
    compute(out.pearson_SD, [&] { return pearson(s, d); });
    compute(out.spearman_SM, [&] { return spearman(s, m); });
    compute(out.pearson_SM, [&] { return pearson(s, m); });
    return out;
}

void write_pairs_csv(std::span<const PairMetrics> table,
                     const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    f << "f1,f2,S,D,M,count1,count2,flag\n";
    for (const auto& row : table) {
        f << feature_name(row.f1) << "," << feature_name(row.f2) << ","
          << fmt_double(row.S) << ",";
        if (row.valid) {
            f << fmt_double(row.D) << "," << fmt_double(row.M) << "," << row.count1
              << "," << row.count2 << ",";
        } else {
            std::string flag = row.flag;  // keep the flag a single CSV field
            std::replace(flag.begin(), flag.end(), ',', ';');
            f << ",,,," << flag;
        }
        f << "\n";
    }
}

void write_scatter_csv(std::span<const PairMetrics> table, bool distance,
                       const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    f << (distance ? "f1,f2,S,D\n" : "f1,f2,S,M\n");
    for (const auto& row : table) {
        if (!row.valid) continue;
        f << feature_name(row.f1) << "," << feature_name(row.f2) << ","
          << fmt_double(row.S) << "," << fmt_double(distance ? row.D : row.M)
          << "\n";
    }
}

std::string correlations_json(const Correlations& c) {
    nlohmann::ordered_json j;
    auto put = [&](const char* key, const CorrResult& r) {
        j[key] = {{"value", r.defined ? r.value : 0.0}, {"defined", r.defined}};
    };
    put("spearman_SD", c.spearman_SD);
    put("pearson_SD", c.pearson_SD);
    put("spearman_SM", c.spearman_SM);
    put("pearson_SM", c.pearson_SM);
    return j.dump(2) + "\n";
}

}  // namespace vitscope::superpos
