#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vitscope/dataset.hpp"
#include "vitscope/raster.hpp"
#include "vitscope/tensor.hpp"

namespace vitscope {

struct ViTConfig {
    int image_size = 64;
    int patch_size = 8;
    int layers = 4;
    int d_model = 128;
    int heads = 4;
    int mlp_hidden = 256;
    int embed_dim = 64;  // 0 disables the output projection
    double eps = 1e-5;

    int head_dim() const { return d_model / heads; }
    int patches_per_side() const { return image_size / patch_size; }
    int n_patches() const { return patches_per_side() * patches_per_side(); }
    int n_tokens() const { return n_patches() + 1; }
    int patch_dim() const { return patch_size * patch_size * 3; }
    // One monitored unit per MLP output-layer neuron per block.
    int monitored_neurons() const { return layers * d_model; }
    int output_dim() const { return embed_dim > 0 ? embed_dim : d_model; }

    void validate() const;
    friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct BlockWeights {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

struct ModelWeights {
    ViTConfig config;
    Tensor patch_w, patch_b;  // (patch_dim, d_model), (d_model)
    Tensor cls;               // (1, d_model)
    Tensor pos;               // (n_tokens, d_model)
    std::vector<BlockWeights> blocks;
    Tensor lnf_gain, lnf_bias;
    Tensor head_w, head_b;  // (d_model, 16), (16)
    Tensor proj_w;          // (d_model, embed_dim); undefined when embed_dim == 0

    // Fixed enumeration order; names are stable and used by the weight file.
    std::vector<NamedParam> parameters();
    std::vector<NamedParam> parameters() const;
    void set_requires_grad(bool v);
    // Leaves sharing this model's value buffers, each with a fresh grad
    // buffer. Lets concurrent episodes accumulate gradients independently.
    ModelWeights alias_for_grad() const;
};

// Seeded init: projection matrices ~ N(0, 1/sqrt(fan_in)), positional
// embeddings and CLS ~ N(0, 0.02), biases 0, layernorm gain 1 / bias 0.
ModelWeights init_weights(const ViTConfig& config, uint64_t seed);

struct ActivationRecord {
    int layer = 0;
    int unit = 0;
    std::vector<double> per_token;  // CLS first, then patches in raster order
};

struct TapSpec {
    bool all = false;
    std::vector<std::pair<int, int>> neurons;  // (layer, unit)

    static TapSpec All() { return {true, {}}; }
    static TapSpec None() { return {false, {}}; }
};

struct ForwardResult {
    std::vector<double> logits;     // 16 feature logits
    std::vector<double> embedding;  // output_dim
    std::vector<ActivationRecord> records;

    // Graph handles, valid while the episode's tape is alive.
    Tensor pixels_t;                // (H,W,3) input in [0,1]
    Tensor logits_t;                // (16)
    Tensor embedding_t;             // (output_dim)
    std::vector<Tensor> mlp_out;    // per block (n_tokens, d_model), pre-residual
};

class VitModel {
public:
    VitModel(const ViTConfig& config, uint64_t init_seed);
    explicit VitModel(ModelWeights weights);

    const ViTConfig& config() const { return weights_.config; }
    ModelWeights& weights() { return weights_; }
    const ModelWeights& weights() const { return weights_; }

    // Pixels normalized to [0,1] then standardized with mean 0.5 / std 0.5
    // per channel before patch projection.
    Tensor patch_embed(const RasterImage& image) const;

    ForwardResult forward(const RasterImage& image,
                          const TapSpec& taps = TapSpec::None(),
                          bool retain_mlp = false) const;
    // Same pass starting from a [0,1] pixel tensor (gradient checks, Grad-CAM).
    ForwardResult forward_pixels(const Tensor& pixels01, const TapSpec& taps,
                                 bool retain_mlp) const;
    // Runs the blocks + final layernorm on an embedded token sequence.
    Tensor encode_tokens(const Tensor& tokens, std::vector<Tensor>* mlp_out) const;

private:
    ForwardResult forward_impl(const Tensor& pixels01, const TapSpec& taps,
                               bool retain_mlp, const ModelWeights& w) const;
    ModelWeights weights_;
    friend struct TrainDriver;
};

Tensor pixels_from_image(const RasterImage& image);  // (H,W,3) in [0,1]

struct TrainHyper {
    int epochs = 30;
    int batch = 16;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    double val_fraction = 0.1;
    int threads = 0;  // 0 = hardware concurrency
};

struct TrainLogRow {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_macro_f1 = 0.0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
};

// Multi-label training: sigmoid BCE between the 16 logits and
// feature_present. images[i] must be the render of manifest.annotations[i].
// Deterministic for fixed (weights, hyper.seed), independent of thread count.
TrainResult train_model(VitModel& model, const DatasetManifest& manifest,
                        std::span<const RasterImage> images,
                        const TrainHyper& hyper);

// Macro-averaged F1 of thresholded sigmoid predictions; a feature with no
// positives and no predicted positives scores 1.
double macro_f1(std::span<const std::array<uint8_t, kNumFeatures>> truth,
                std::span<const std::array<uint8_t, kNumFeatures>> pred);

void save_weights(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

void write_train_log(const TrainResult& result, const std::filesystem::path& path);

}  // namespace vitscope
