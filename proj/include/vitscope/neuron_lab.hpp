#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vitscope/dataset.hpp"
#include "vitscope/vit.hpp"

namespace vitscope::lab {

enum class Aggregator { MeanPatches, MaxPatches, Cls };

const char* to_string(Aggregator a);
Aggregator aggregator_from_string(const std::string& s);

// Per-image scalar activation of every monitored neuron (fc2 output units of
// every block). Row r = layer * d_model + unit; column = image index.
struct ActivationMatrix {
    int layers = 0;
    int d_model = 0;
    int64_t images = 0;
    Aggregator aggregator = Aggregator::MeanPatches;
    std::vector<double> data;  // row-major (rows, images)

    int64_t rows() const { return static_cast<int64_t>(layers) * d_model; }
    double at(int64_t row, int64_t image) const { return data[row * images + image]; }
    std::span<const double> row(int64_t r) const {
        return {data.data() + r * images, static_cast<size_t>(images)};
    }
};

double image_activation(const ActivationRecord& record, Aggregator agg);

ActivationMatrix build_activation_matrix(const VitModel& model,
                                         const DatasetManifest& manifest,
                                         std::span<const RasterImage> images,
                                         Aggregator agg, int threads = 0);

struct NeuronProfile {
    int layer = 0;
    int unit = 0;
    int k = 0;
    std::array<double, kNumFeatures> occurrences{};  // o_i, per-image averages
    std::array<double, kNumFeatures> affinities{};   // a_i = o_i / sum(o)
    double entropy_bits = 0.0;                       // H = sum -a_i log2 a_i
    double percentile = 0.0;  // rank/total*100 among ranked neurons
    std::vector<int> top_images;  // k ids, activation desc, id asc on ties
    // sum(o) == 0 or the activation row is constant; excluded from ranking.
    bool degenerate = false;
};

// H in bits with 0*log(0) treated as 0. Input need not be normalized; it is
// treated as an affinity vector (entropy of a / sum(a) is NOT recomputed --
// the caller passes affinities).
double shannon_entropy_bits(std::span<const double> affinities);

NeuronProfile profile_neuron(const ActivationMatrix& matrix,
                             const DatasetManifest& manifest, int layer, int unit,
                             int k);

std::vector<NeuronProfile> profile_all(const ActivationMatrix& matrix,
                                       const DatasetManifest& manifest, int k,
                                       int threads = 0);

struct Ranking {
    // Indices into the profile vector, ascending (entropy, layer, unit);
    // degenerate profiles are listed separately and carry no percentile.
    std::vector<int> ranked;
    std::vector<int> degenerate;
};

// Sorts, writes percentiles into the profiles, and leaves degenerate neurons
// out of the ranking.
Ranking rank_neurons(std::vector<NeuronProfile>& profiles);

// The neuron's fc2 activation at each patch token, reshaped to the grid.
std::vector<double> patchwise_map(const VitModel& model, const RasterImage& image,
                                  int layer, int unit);

// Signed normalization: min -> blue end of the ramp, max -> red end; a
// constant field renders mid-ramp.
RasterImage render_patchwise(std::span<const double> values, int grid,
                             int image_size);

struct HistBin {
    double lo = 0.0;
    double hi = 0.0;
    int count = 0;
};

// Bins over [0,4] bits, right-open except the last.
std::vector<HistBin> entropy_histogram(std::span<const NeuronProfile> profiles,
                                       int bins);

void save_matrix(const ActivationMatrix& m, const std::filesystem::path& path);
ActivationMatrix load_matrix(const std::filesystem::path& path);

// profiles.csv rows for the ranked neurons, ascending entropy.
void write_profiles_csv(std::span<const NeuronProfile> profiles,
                        const Ranking& ranking, const std::filesystem::path& path);
void write_degenerate_csv(std::span<const NeuronProfile> profiles,
                          const Ranking& ranking, const std::filesystem::path& path);
void write_histogram_csv(std::span<const HistBin> bins,
                         const std::filesystem::path& path);

}  // namespace vitscope::lab
