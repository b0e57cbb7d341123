#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vitscope/features.hpp"
#include "vitscope/neuron_lab.hpp"

namespace vitscope::superpos {

// Probe-set embeddings with each image's feature-presence vector.
struct ProbeEmbeddings {
    int dim = 0;
    std::vector<std::vector<double>> vectors;
    std::vector<std::array<uint8_t, kNumFeatures>> present;

    size_t size() const { return vectors.size(); }
};

struct FeatureCluster {
    int feature = -1;
    std::vector<int> members;  // indices into the probe embeddings
    std::vector<double> centroid;
};

struct PairMetrics {
    int f1 = 0;
    int f2 = 0;
    double S = 0.0;
    double D = 0.0;
    double M = 0.0;
    int count1 = 0;
    int count2 = 0;
    bool valid = false;  // false when cluster construction failed
    std::string flag;
};

// S(f1,f2) = sum over the n lowest-entropy neurons of
// (a_f1 + a_f2) / sum_j a_j, evaluated exactly as written. `ranked` are
// profile indices in ascending-entropy order.
double superposition_S(int f1, int f2,
                       std::span<const lab::NeuronProfile> profiles,
                       std::span<const int> ranked, int n);
// Simplified form valid for normalized affinities: sum of (a_f1 + a_f2).
double superposition_S_simplified(int f1, int f2,
                                  std::span<const lab::NeuronProfile> profiles,
                                  std::span<const int> ranked, int n);

// Cluster f1 = probe images with f1 and not f2 (and symmetrically); images
// showing both features are excluded from both sides.
std::pair<FeatureCluster, FeatureCluster> build_clusters(
    const ProbeEmbeddings& probes, int f1, int f2);

double distance_D(const FeatureCluster& c1, const FeatureCluster& c2);

// Plain nearest-centroid error over the members of both clusters; ties go to
// the member's own cluster. With leave_one_out each member is scored against
// its own centroid recomputed without it.
double misclassification_M(const ProbeEmbeddings& probes,
                           const FeatureCluster& c1, const FeatureCluster& c2,
                           bool leave_one_out = false);

std::vector<PairMetrics> pairwise_sweep(
    std::span<const lab::NeuronProfile> profiles, std::span<const int> ranked,
    const ProbeEmbeddings& probes, int n, bool leave_one_out = false);

struct CorrResult {
    double value = 0.0;
    bool defined = false;
};

struct Correlations {
    CorrResult spearman_SD, pearson_SD, spearman_SM, pearson_SM;
};

double pearson(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> x);
double spearman(std::span<const double> x, std::span<const double> y);

// Uses valid rows only; requires at least 3. A zero-variance column yields an
// undefined coefficient instead of NaN.
Correlations correlate(std::span<const PairMetrics> table);

void write_pairs_csv(std::span<const PairMetrics> table,
                     const std::filesystem::path& path);
void write_scatter_csv(std::span<const PairMetrics> table, bool distance,
                       const std::filesystem::path& path);
std::string correlations_json(const Correlations& c);

}  // namespace vitscope::superpos
