#include "vitscope/neuron_lab.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "vitscope/error.hpp"
#include "vitscope/gradcam.hpp"
#include "vitscope/parallel.hpp"
#include "vitscope/text.hpp"

namespace vitscope::lab {

const char* to_string(Aggregator a) {
    switch (a) {
        case Aggregator::MeanPatches: return "mean_patches";
        case Aggregator::MaxPatches: return "max_patches";
        case Aggregator::Cls: return "cls";
    }
    return "mean_patches";
}

Aggregator aggregator_from_string(const std::string& s) {
    if (s == "mean_patches") return Aggregator::MeanPatches;
    if (s == "max_patches") return Aggregator::MaxPatches;
    if (s == "cls") return Aggregator::Cls;
    raise(ErrorCategory::Config, "unknown aggregator: " + s);
}

double image_activation(const ActivationRecord& record, Aggregator agg) {
    if (record.per_token.empty())
        raise(ErrorCategory::Input, "empty activation record");
    switch (agg) {
        case Aggregator::Cls:
            return record.per_token[0];
        case Aggregator::MaxPatches: {
            double mx = record.per_token[1];
            for (size_t t = 2; t < record.per_token.size(); ++t)
                mx = std::max(mx, record.per_token[t]);
            return mx;
        }
        case Aggregator::MeanPatches: {
            double s = 0.0;
            for (size_t t = 1; t < record.per_token.size(); ++t)
                s += record.per_token[t];
            return s / static_cast<double>(record.per_token.size() - 1);
        }
    }
    raise(ErrorCategory::Internal, "bad aggregator");
}

ActivationMatrix build_activation_matrix(const VitModel& model,
                                         const DatasetManifest& manifest,
                                         std::span<const RasterImage> images,
                                         Aggregator agg, int threads) {
    if (images.size() != manifest.annotations.size())
        raise(ErrorCategory::Input,
              "activation matrix: " + std::to_string(images.size()) +
                  " images for " + std::to_string(manifest.annotations.size()) +
                  " annotations");
    const ViTConfig& cfg = model.config();
    ActivationMatrix m;
    m.layers = cfg.layers;
    m.d_model = cfg.d_model;
    m.images = static_cast<int64_t>(images.size());
    m.aggregator = agg;
    m.data.assign(static_cast<size_t>(m.rows()) * m.images, 0.0);

    parallel_for(m.images, threads, [&](int64_t img) {
        ForwardResult fr = model.forward(images[img], TapSpec::All(), false);
        for (const auto& rec : fr.records) {
            const int64_t row = static_cast<int64_t>(rec.layer) * cfg.d_model + rec.unit;
            m.data[row * m.images + img] = image_activation(rec, agg);
        }
    });
    return m;
}

double shannon_entropy_bits(std::span<const double> affinities) {
    double h = 0.0;
    for (double a : affinities)
        if (a > 0.0) h -= a * std::log2(a);
    return h;
}

NeuronProfile profile_neuron(const ActivationMatrix& matrix,
                             const DatasetManifest& manifest, int layer, int unit,
                             int k) {
    if (layer < 0 || layer >= matrix.layers || unit < 0 || unit >= matrix.d_model)
        raise(ErrorCategory::Input,
              "neuron (" + std::to_string(layer) + "," + std::to_string(unit) +
                  ") out of range");
    if (k < 1 || k > matrix.images)
        raise(ErrorCategory::Input,
              "k = " + std::to_string(k) + " must lie in [1, " +
                  std::to_string(matrix.images) + "]");
    if (static_cast<int64_t>(manifest.annotations.size()) != matrix.images)
        raise(ErrorCategory::Input, "manifest does not match activation matrix");

    NeuronProfile p;
    p.layer = layer;
    p.unit = unit;
    p.k = k;

    const auto row = matrix.row(static_cast<int64_t>(layer) * matrix.d_model + unit);
    std::vector<int> order(matrix.images);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (row[a] != row[b]) return row[a] > row[b];
        return a < b;
    });
    p.top_images.assign(order.begin(), order.begin() + k);

    for (int img : p.top_images)
        for (int f = 0; f < kNumFeatures; ++f)
            p.occurrences[f] += manifest.annotations[img].feature_counts[f];
    double total = 0.0;
    for (int f = 0; f < kNumFeatures; ++f) {
        p.occurrences[f] /= k;
        total += p.occurrences[f];
    }
    const bool constant_row =
        *std::max_element(row.begin(), row.end()) ==
        *std::min_element(row.begin(), row.end());
    if (total <= 0.0 || constant_row) {
        p.degenerate = true;
        p.affinities.fill(0.0);
        p.entropy_bits = 0.0;
        return p;
    }
    for (int f = 0; f < kNumFeatures; ++f) p.affinities[f] = p.occurrences[f] / total;
    p.entropy_bits = shannon_entropy_bits(p.affinities);
    return p;
}

std::vector<NeuronProfile> profile_all(const ActivationMatrix& matrix,
                                       const DatasetManifest& manifest, int k,
                                       int threads) {
    std::vector<NeuronProfile> profiles(static_cast<size_t>(matrix.rows()));
    parallel_for(matrix.rows(), threads, [&](int64_t r) {
        profiles[r] = profile_neuron(matrix, manifest,
                                     static_cast<int>(r / matrix.d_model),
                                     static_cast<int>(r % matrix.d_model), k);
    });
    return profiles;
}

Ranking rank_neurons(std::vector<NeuronProfile>& profiles) {
    Ranking rank;
    for (size_t i = 0; i < profiles.size(); ++i)
        (profiles[i].degenerate ? rank.degenerate : rank.ranked)
            .push_back(static_cast<int>(i));
    std::sort(rank.ranked.begin(), rank.ranked.end(), [&](int a, int b) {
        const auto& pa = profiles[a];
        const auto& pb = profiles[b];
        if (pa.entropy_bits != pb.entropy_bits)
            return pa.entropy_bits < pb.entropy_bits;
        if (pa.layer != pb.layer) return pa.layer < pb.layer;
        return pa.unit < pb.unit;
    });
    const double total = static_cast<double>(rank.ranked.size());
    for (size_t pos = 0; pos < rank.ranked.size(); ++pos)
        profiles[rank.ranked[pos]].percentile =
            100.0 * static_cast<double>(pos + 1) / total;
    return rank;
}

std::vector<double> patchwise_map(const VitModel& model, const RasterImage& image,
                                  int layer, int unit) {
    TapSpec taps;
    taps.neurons.push_back({layer, unit});
    ForwardResult fr = model.forward(image, taps, false);
    const auto& rec = fr.records.at(0);
    return {rec.per_token.begin() + 1, rec.per_token.end()};
}

RasterImage render_patchwise(std::span<const double> values, int grid,
                             int image_size) {
    if (values.size() != static_cast<size_t>(grid) * grid)
        raise(ErrorCategory::Dimension, "patchwise map does not match grid");
    const double mn = *std::min_element(values.begin(), values.end());
    const double mx = *std::max_element(values.begin(), values.end());
    RasterImage img(image_size, image_size);
    for (int y = 0; y < image_size; ++y) {
        const int gy = y * grid / image_size;
        for (int x = 0; x < image_size; ++x) {
            const int gx = x * grid / image_size;
            const double v = values[static_cast<size_t>(gy) * grid + gx];
            const double t = mx > mn ? (v - mn) / (mx - mn) : 0.5;
            img.set(x, y, gradcam::ramp(t));
        }
    }
    return img;
}

std::vector<HistBin> entropy_histogram(std::span<const NeuronProfile> profiles,
                                       int bins) {
    if (bins < 1) raise(ErrorCategory::Input, "bins must be >= 1");
    const double max_h = std::log2(static_cast<double>(kNumFeatures));
    std::vector<HistBin> out(bins);
    const double width = max_h / bins;
    for (int b = 0; b < bins; ++b) {
        out[b].lo = b * width;
        out[b].hi = (b + 1) * width;
    }
    out.back().hi = max_h;
    for (const auto& p : profiles) {
        // right-open bins; the final one also takes H == 4 exactly
        const int b = std::clamp(static_cast<int>(p.entropy_bits / width), 0, bins - 1);
        out[b].count++;
    }
    return out;
}

// --- persistence -------------------------------------------------------------

namespace {
constexpr char kMatrixMagic[8] = {'V', 'S', 'A', 'C', 'T', 'M', 'X', '1'};
}

void save_matrix(const ActivationMatrix& m, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    auto put_u32 = [&](uint32_t v) {
        uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
        f.write(reinterpret_cast<char*>(b), 4);
    };
    auto put_u64 = [&](uint64_t v) {
        uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
        f.write(reinterpret_cast<char*>(b), 8);
    };
    f.write(kMatrixMagic, sizeof(kMatrixMagic));
    put_u32(static_cast<uint32_t>(m.layers));
    put_u32(static_cast<uint32_t>(m.d_model));
    put_u64(static_cast<uint64_t>(m.images));
    put_u32(static_cast<uint32_t>(m.aggregator));
    for (double v : m.data) put_u64(std::bit_cast<uint64_t>(v));
    if (!f) raise(ErrorCategory::Io, "write failed: " + path.string());
}

ActivationMatrix load_matrix(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorCategory::Io, "cannot open: " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    size_t pos = 0;
    auto need = [&](size_t n) {
        if (pos + n > bytes.size())
            raise(ErrorCategory::Format, "activation matrix file truncated");
    };
    need(sizeof(kMatrixMagic));
    if (std::memcmp(bytes.data(), kMatrixMagic, sizeof(kMatrixMagic)) != 0)
        raise(ErrorCategory::Format, "bad activation matrix magic");
    pos += sizeof(kMatrixMagic);
    auto get_u32 = [&] {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    };
    auto get_u64 = [&] {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    };
    ActivationMatrix m;
    m.layers = static_cast<int>(get_u32());
    m.d_model = static_cast<int>(get_u32());
    m.images = static_cast<int64_t>(get_u64());
    m.aggregator = static_cast<Aggregator>(get_u32());
    if (m.layers < 1 || m.d_model < 1 || m.images < 0)
        raise(ErrorCategory::Format, "bad activation matrix header");
    m.data.resize(static_cast<size_t>(m.rows()) * m.images);
    for (auto& v : m.data) v = std::bit_cast<double>(get_u64());
    return m;
}

void write_profiles_csv(std::span<const NeuronProfile> profiles,
                        const Ranking& ranking, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    f << "neuron,layer,unit,entropy_bits,percentile";
    for (int i = 0; i < kNumFeatures; ++i) f << ",a_" << feature_name(i);
    for (int i = 0; i < kNumFeatures; ++i) f << ",o_" << feature_name(i);
    f << ",top_images\n";
    for (int idx : ranking.ranked) {
        const auto& p = profiles[idx];
        f << idx << "," << p.layer << "," << p.unit << ","
          << fmt_double(p.entropy_bits) << "," << fmt_double(p.percentile);
        for (double a : p.affinities) f << "," << fmt_double(a);
        for (double o : p.occurrences) f << "," << fmt_double(o);
        f << ",";
        for (size_t i = 0; i < p.top_images.size(); ++i) {
            if (i) f << " ";
            f << p.top_images[i];
        }
        f << "\n";
    }
}

void write_degenerate_csv(std::span<const NeuronProfile> profiles,
                          const Ranking& ranking,
                          const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    f << "neuron,layer,unit,reason\n";
    for (int idx : ranking.degenerate) {
        const auto& p = profiles[idx];
        double total = 0.0;
        for (double o : p.occurrences) total += o;
        f << idx << "," << p.layer << "," << p.unit << ","
          << (total <= 0.0 ? "zero_occurrences" : "constant_activation") << "\n";
    }
}

void write_histogram_csv(std::span<const HistBin> bins,
                         const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    f << "bin_lo,bin_hi,count\n";
    for (const auto& b : bins)
        f << fmt_double(b.lo) << "," << fmt_double(b.hi) << "," << b.count << "\n";
}

}  // namespace vitscope::lab
