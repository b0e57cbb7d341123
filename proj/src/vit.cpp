#include "vitscope/vit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "vitscope/adam.hpp"
#include "vitscope/error.hpp"
#include "vitscope/parallel.hpp"
#include "vitscope/rng.hpp"
#include "vitscope/text.hpp"

namespace vitscope {

void ViTConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
        raise(ErrorCategory::Config,
              "image_size (" + std::to_string(image_size) +
                  ") must be a positive multiple of patch_size (" +
                  std::to_string(patch_size) + ")");
    if (layers < 1) raise(ErrorCategory::Config, "layers must be >= 1");
    if (d_model < 1 || heads < 1 || d_model % heads != 0)
        raise(ErrorCategory::Config,
              "d_model (" + std::to_string(d_model) +
                  ") must be a positive multiple of heads (" +
                  std::to_string(heads) + ")");
    if (mlp_hidden < 1) raise(ErrorCategory::Config, "mlp_hidden must be >= 1");
    if (embed_dim < 0) raise(ErrorCategory::Config, "embed_dim must be >= 0");
    if (!(eps > 0)) raise(ErrorCategory::Config, "eps must be positive");
}

namespace {

template <typename Weights, typename Fn>
void for_each_param(Weights& w, Fn&& fn) {
    fn("patch_w", w.patch_w);
    fn("patch_b", w.patch_b);
    fn("cls", w.cls);
    fn("pos", w.pos);
    for (size_t i = 0; i < w.blocks.size(); ++i) {
        auto& b = w.blocks[i];
        const std::string p = "blocks." + std::to_string(i) + ".";
        fn(p + "ln1_gain", b.ln1_gain);
        fn(p + "ln1_bias", b.ln1_bias);
        fn(p + "wq", b.wq);
        fn(p + "bq", b.bq);
        fn(p + "wk", b.wk);
        fn(p + "bk", b.bk);
        fn(p + "wv", b.wv);
        fn(p + "bv", b.bv);
        fn(p + "wo", b.wo);
        fn(p + "bo", b.bo);
        fn(p + "ln2_gain", b.ln2_gain);
        fn(p + "ln2_bias", b.ln2_bias);
        fn(p + "fc1_w", b.fc1_w);
        fn(p + "fc1_b", b.fc1_b);
        fn(p + "fc2_w", b.fc2_w);
        fn(p + "fc2_b", b.fc2_b);
    }
    fn("lnf_gain", w.lnf_gain);
    fn("lnf_bias", w.lnf_bias);
    fn("head_w", w.head_w);
    fn("head_b", w.head_b);
    if (w.config.embed_dim > 0) fn("proj_w", w.proj_w);
}

ModelWeights make_weights(const ViTConfig& cfg) {
    cfg.validate();
    ModelWeights w;
    w.config = cfg;
    const int d = cfg.d_model;
    w.patch_w = Tensor::zeros({cfg.patch_dim(), d});
    w.patch_b = Tensor::zeros({d});
    w.cls = Tensor::zeros({1, d});
    w.pos = Tensor::zeros({cfg.n_tokens(), d});
    w.blocks.resize(cfg.layers);
    for (auto& b : w.blocks) {
        b.ln1_gain = Tensor::zeros({d});
        b.ln1_bias = Tensor::zeros({d});
        b.wq = Tensor::zeros({d, d});
        b.bq = Tensor::zeros({d});
        b.wk = Tensor::zeros({d, d});
        b.bk = Tensor::zeros({d});
        b.wv = Tensor::zeros({d, d});
        b.bv = Tensor::zeros({d});
        b.wo = Tensor::zeros({d, d});
        b.bo = Tensor::zeros({d});
        b.ln2_gain = Tensor::zeros({d});
        b.ln2_bias = Tensor::zeros({d});
        b.fc1_w = Tensor::zeros({d, cfg.mlp_hidden});
        b.fc1_b = Tensor::zeros({cfg.mlp_hidden});
        b.fc2_w = Tensor::zeros({cfg.mlp_hidden, d});
        b.fc2_b = Tensor::zeros({d});
    }
    w.lnf_gain = Tensor::zeros({d});
    w.lnf_bias = Tensor::zeros({d});
    w.head_w = Tensor::zeros({d, kNumFeatures});
    w.head_b = Tensor::zeros({kNumFeatures});
    if (cfg.embed_dim > 0) w.proj_w = Tensor::zeros({d, cfg.embed_dim});
    return w;
}

}  // namespace

std::vector<NamedParam> ModelWeights::parameters() {
    std::vector<NamedParam> out;
    for_each_param(*this, [&](const std::string& name, Tensor& t) {
        out.push_back({name, t});
    });
    return out;
}

std::vector<NamedParam> ModelWeights::parameters() const {
    std::vector<NamedParam> out;
    for_each_param(*this, [&](const std::string& name, const Tensor& t) {
        out.push_back({name, t});
    });
    return out;
}

void ModelWeights::set_requires_grad(bool v) {
    for_each_param(*this, [&](const std::string&, Tensor& t) {
        t.set_requires_grad(v);
    });
}

ModelWeights ModelWeights::alias_for_grad() const {
    ModelWeights copy = *this;  // shares nodes
    for_each_param(copy, [&](const std::string&, Tensor& t) {
        t = t.alias();
        t.set_requires_grad(true);
    });
    return copy;
}

ModelWeights init_weights(const ViTConfig& config, uint64_t seed) {
    ModelWeights w = make_weights(config);
    Rng rng(seed);
    for_each_param(w, [&](const std::string& name, Tensor& t) {
        double* v = t.mutable_data();
        const int64_t n = t.numel();
        if (name == "cls" || name == "pos") {
            for (int64_t i = 0; i < n; ++i) v[i] = 0.02 * rng.normal();
        } else if (t.rank() == 2) {
            const double s = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
            for (int64_t i = 0; i < n; ++i) v[i] = s * rng.normal();
        } else if (name.ends_with("gain")) {
            std::fill(v, v + n, 1.0);
        }
        // biases stay zero
    });
    return w;
}

// --- forward ----------------------------------------------------------------

Tensor pixels_from_image(const RasterImage& image) {
    std::vector<double> data(image.pixels.size());
    for (size_t i = 0; i < image.pixels.size(); ++i)
        data[i] = image.pixels[i] / 255.0;
    return Tensor::from_data({image.height, image.width, 3}, std::move(data));
}

VitModel::VitModel(const ViTConfig& config, uint64_t init_seed)
    : weights_(init_weights(config, init_seed)) {}

VitModel::VitModel(ModelWeights weights) : weights_(std::move(weights)) {
    weights_.config.validate();
    if (!weights_.patch_w.defined())
        raise(ErrorCategory::State, "model weights are not loaded");
}

namespace {

Tensor encode_impl(const Tensor& tokens, std::vector<Tensor>* mlp_out,
                   const ModelWeights& w) {
    const ViTConfig& cfg = w.config;
    const int dh = cfg.head_dim();
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor x = tokens;
    for (const auto& b : w.blocks) {
        Tensor h = layernorm(x, b.ln1_gain, b.ln1_bias, cfg.eps);
        Tensor q = add_rowwise(matmul(h, b.wq), b.bq);
        Tensor k = add_rowwise(matmul(h, b.wk), b.bk);
        Tensor v = add_rowwise(matmul(h, b.wv), b.bv);
        std::vector<Tensor> ctx;
        ctx.reserve(cfg.heads);
        for (int hd = 0; hd < cfg.heads; ++hd) {
            Tensor qh = slice(q, 1, hd * dh, (hd + 1) * dh);
            Tensor kh = slice(k, 1, hd * dh, (hd + 1) * dh);
            Tensor vh = slice(v, 1, hd * dh, (hd + 1) * dh);
            Tensor scores = scale(matmul(qh, transpose(kh)), attn_scale);
            Tensor attn = softmax(scores, 1);
            ctx.push_back(matmul(attn, vh));
        }
        Tensor merged = concat(ctx, 1);
        Tensor attn_out = add_rowwise(matmul(merged, b.wo), b.bo);
        x = add(x, attn_out);

        Tensor h2 = layernorm(x, b.ln2_gain, b.ln2_bias, cfg.eps);
        Tensor a1 = gelu(add_rowwise(matmul(h2, b.fc1_w), b.fc1_b));
        // fc2 output before the residual addition: the monitored activations.
        Tensor m = add_rowwise(matmul(a1, b.fc2_w), b.fc2_b);
        if (mlp_out) mlp_out->push_back(m);
        x = add(x, m);
    }
    return layernorm(x, w.lnf_gain, w.lnf_bias, cfg.eps);
}

}  // namespace

Tensor VitModel::encode_tokens(const Tensor& tokens,
                               std::vector<Tensor>* mlp_out) const {
    return encode_impl(tokens, mlp_out, weights_);
}

Tensor VitModel::patch_embed(const RasterImage& image) const {
    const ViTConfig& cfg = config();
    if (image.width != cfg.image_size || image.height != cfg.image_size)
        raise(ErrorCategory::Input,
              "image is " + std::to_string(image.width) + "x" +
                  std::to_string(image.height) + " but the model expects " +
                  std::to_string(cfg.image_size) + "x" +
                  std::to_string(cfg.image_size));
    Tensor pixels = pixels_from_image(image);
    // standardize with mean 0.5, std 0.5 per channel
    Tensor stdized = add(scale(pixels, 2.0), Tensor::full(pixels.shape(), -1.0));
    Tensor patches = extract_patches(stdized, cfg.patch_size);
    Tensor tok = add_rowwise(matmul(patches, weights_.patch_w), weights_.patch_b);
    const Tensor parts[] = {weights_.cls, tok};
    return add(concat(parts, 0), weights_.pos);
}

ForwardResult VitModel::forward_impl(const Tensor& pixels01, const TapSpec& taps,
                                     bool retain_mlp, const ModelWeights& w) const {
    const ViTConfig& cfg = w.config;
    if (!w.patch_w.defined())
        raise(ErrorCategory::State, "model weights are not loaded");
    if (pixels01.rank() != 3 || pixels01.dim(0) != cfg.image_size ||
        pixels01.dim(1) != cfg.image_size || pixels01.dim(2) != 3)
        raise(ErrorCategory::Input,
              "pixel tensor is " + shape_string(pixels01.shape()) +
                  " but the model expects (" + std::to_string(cfg.image_size) +
                  "," + std::to_string(cfg.image_size) + ",3)");
    for (const auto& [layer, unit] : taps.neurons)
        if (layer < 0 || layer >= cfg.layers || unit < 0 || unit >= cfg.d_model)
            raise(ErrorCategory::Input,
                  "tap (" + std::to_string(layer) + "," + std::to_string(unit) +
                      ") out of range for " + std::to_string(cfg.layers) + "x" +
                      std::to_string(cfg.d_model) + " monitored neurons");

    Tensor stdized = add(scale(pixels01, 2.0), Tensor::full(pixels01.shape(), -1.0));
    Tensor patches = extract_patches(stdized, cfg.patch_size);
    Tensor tok = add_rowwise(matmul(patches, w.patch_w), w.patch_b);
    const Tensor parts[] = {w.cls, tok};
    Tensor seq = add(concat(parts, 0), w.pos);

    std::vector<Tensor> mlp_out;
    Tensor encoded = encode_impl(seq, &mlp_out, w);

    Tensor cls_row = slice(encoded, 0, 0, 1);
    Tensor logits_t =
        reshape(add_rowwise(matmul(cls_row, w.head_w), w.head_b), {kNumFeatures});
    Tensor embedding_t = w.proj_w.defined()
                             ? reshape(matmul(cls_row, w.proj_w), {cfg.embed_dim})
                             : reshape(cls_row, {cfg.d_model});

    ForwardResult r;
    r.pixels_t = pixels01;
    r.logits_t = logits_t;
    r.embedding_t = embedding_t;
    r.logits.assign(logits_t.data(), logits_t.data() + kNumFeatures);
    r.embedding.assign(embedding_t.data(), embedding_t.data() + embedding_t.numel());

    const int nt = cfg.n_tokens();
    auto record_tap = [&](int layer, int unit) {
        ActivationRecord rec;
        rec.layer = layer;
        rec.unit = unit;
        rec.per_token.resize(nt);
        const double* mv = mlp_out[layer].data();
        for (int t = 0; t < nt; ++t)
            rec.per_token[t] = mv[static_cast<size_t>(t) * cfg.d_model + unit];
        r.records.push_back(std::move(rec));
    };
    if (taps.all) {
        for (int layer = 0; layer < cfg.layers; ++layer)
            for (int unit = 0; unit < cfg.d_model; ++unit) record_tap(layer, unit);
    } else {
        for (const auto& [layer, unit] : taps.neurons) record_tap(layer, unit);
    }
    if (retain_mlp) r.mlp_out = std::move(mlp_out);
    return r;
}

ForwardResult VitModel::forward(const RasterImage& image, const TapSpec& taps,
                                bool retain_mlp) const {
    const ViTConfig& cfg = config();
    if (image.width != cfg.image_size || image.height != cfg.image_size)
        raise(ErrorCategory::Input,
              "image is " + std::to_string(image.width) + "x" +
                  std::to_string(image.height) + " but the model expects " +
                  std::to_string(cfg.image_size) + "x" +
                  std::to_string(cfg.image_size));
    return forward_impl(pixels_from_image(image), taps, retain_mlp, weights_);
}

ForwardResult VitModel::forward_pixels(const Tensor& pixels01, const TapSpec& taps,
                                       bool retain_mlp) const {
    return forward_impl(pixels01, taps, retain_mlp, weights_);
}

// --- training ---------------------------------------------------------------

double macro_f1(std::span<const std::array<uint8_t, kNumFeatures>> truth,
                std::span<const std::array<uint8_t, kNumFeatures>> pred) {
    if (truth.size() != pred.size())
        raise(ErrorCategory::Contract, "macro_f1: size mismatch");
    double total = 0.0;
    for (int f = 0; f < kNumFeatures; ++f) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i][f] != 0;
            const bool p = pred[i][f] != 0;
            tp += t && p;
            fp += !t && p;
            fn += t && !p;
        }
        const int64_t denom = 2 * tp + fp + fn;
        total += denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / denom;
    }
    return total / kNumFeatures;
}

struct TrainDriver {
    static ForwardResult run(const VitModel& model, const Tensor& pixels,
                             const TapSpec& taps, const ModelWeights& w) {
        return model.forward_impl(pixels, taps, false, w);
    }
};

TrainResult train_model(VitModel& model, const DatasetManifest& manifest,
                        std::span<const RasterImage> images,
                        const TrainHyper& hyper) {
    const size_t n = manifest.annotations.size();
    if (n == 0) raise(ErrorCategory::Input, "train: dataset is empty");
    if (images.size() != n)
        raise(ErrorCategory::Input,
              "train: " + std::to_string(images.size()) + " images for " +
                  std::to_string(n) + " annotations");
    if (hyper.epochs < 0) raise(ErrorCategory::Config, "epochs must be >= 0");
    if (hyper.batch < 1) raise(ErrorCategory::Config, "batch must be >= 1");
    if (!(hyper.val_fraction >= 0.0) || hyper.val_fraction >= 1.0)
        raise(ErrorCategory::Config, "val_fraction must lie in [0,1)");

    // Pixel tensors and targets are read-only across the whole run.
    std::vector<Tensor> pixels(n);
    std::vector<Tensor> targets(n);
    for (size_t i = 0; i < n; ++i) {
        pixels[i] = pixels_from_image(images[i]);
        std::vector<double> t(kNumFeatures);
        for (int f = 0; f < kNumFeatures; ++f)
            t[f] = manifest.annotations[i].feature_present[f];
        targets[i] = Tensor::from_data({kNumFeatures}, std::move(t));
    }

    // Deterministic split, then per-epoch shuffles from an independent stream.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng split_rng(derive_seed(hyper.seed, 0));
    for (size_t i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[split_rng.bounded(i + 1)]);
    const size_t val_count =
        static_cast<size_t>(std::llround(static_cast<double>(n) * hyper.val_fraction));
    const size_t train_count = n - val_count;
    std::vector<int> train_idx(perm.begin(), perm.begin() + train_count);
    std::vector<int> val_idx(perm.begin() + train_count, perm.end());

    std::vector<int> slot_of_image(n, -1);
    for (size_t s = 0; s < train_idx.size(); ++s) slot_of_image[train_idx[s]] = static_cast<int>(s);

    auto params = model.weights().parameters();
    std::vector<Tensor> tensors;
    std::vector<std::string> names;
    for (auto& p : params) {
        tensors.push_back(p.tensor);
        names.push_back(p.name);
    }
    AdamState state;
    state.init(tensors);
    AdamHyper ah{hyper.lr, hyper.beta1, hyper.beta2, hyper.adam_eps};

    const int threads = hyper.threads > 0 ? hyper.threads : default_threads();
    Rng shuffle_rng(derive_seed(hyper.seed, 1));

    TrainResult result;
    std::vector<int> order = train_idx;
    std::vector<double> slot_loss(train_count, 0.0);
    std::vector<std::vector<double>> acc(params.size());

    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        for (size_t i = train_count > 0 ? train_count - 1 : 0; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.bounded(i + 1)]);

        for (size_t offset = 0; offset < train_count; offset += hyper.batch) {
            const size_t bsz = std::min<size_t>(hyper.batch, train_count - offset);
            std::vector<std::vector<std::vector<double>>> item_grads(bsz);
            std::vector<double> item_loss(bsz, 0.0);

            parallel_for(static_cast<int64_t>(bsz), threads, [&](int64_t b) {
                const int img = order[offset + b];
                ModelWeights aw = model.weights().alias_for_grad();
                Tape tape;
                ForwardResult fr = TrainDriver::run(model, pixels[img],
                                                    TapSpec::None(), aw);
                Tensor loss = sigmoid_bce(fr.logits_t, targets[img]);
                const double lv = loss.item();
                if (!std::isfinite(lv))
                    raise(ErrorCategory::Training,
                          "non-finite loss at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(offset / hyper.batch) +
                              " (image " + std::to_string(img) + ")");
                tape.backward(loss);
                item_loss[b] = lv;
                auto aparams = aw.parameters();
                auto& dst = item_grads[b];
                dst.reserve(aparams.size());
                for (auto& p : aparams) dst.push_back(p.tensor.grad_vector());
            });

            // Gradients summed in item order: bytes never depend on threads.
            for (size_t p = 0; p < params.size(); ++p)
                acc[p].assign(static_cast<size_t>(tensors[p].numel()), 0.0);
            for (size_t b = 0; b < bsz; ++b)
                for (size_t p = 0; p < params.size(); ++p) {
                    const auto& g = item_grads[b][p];
                    auto& a = acc[p];
                    for (size_t i = 0; i < g.size(); ++i) a[i] += g[i];
                }
            const double inv_b = 1.0 / static_cast<double>(bsz);
            for (auto& a : acc)
                for (auto& v : a) v *= inv_b;
            adam_step(tensors, acc, state, ah, names);

            for (size_t b = 0; b < bsz; ++b)
                slot_loss[slot_of_image[order[offset + b]]] = item_loss[b];
        }

        double loss_sum = 0.0;
        for (size_t s = 0; s < train_count; ++s) loss_sum += slot_loss[s];
        TrainLogRow row;
        row.epoch = epoch;
        row.train_loss = train_count > 0 ? loss_sum / static_cast<double>(train_count) : 0.0;

        // Held-out macro-F1 at threshold 0.5.
        std::vector<std::array<uint8_t, kNumFeatures>> truth(val_idx.size());
        std::vector<std::array<uint8_t, kNumFeatures>> pred(val_idx.size());
        parallel_for(static_cast<int64_t>(val_idx.size()), threads, [&](int64_t i) {
            const int img = val_idx[i];
            ForwardResult fr = model.forward_pixels(pixels[img], TapSpec::None(), false);
            for (int f = 0; f < kNumFeatures; ++f) {
                truth[i][f] = manifest.annotations[img].feature_present[f];
                pred[i][f] = fr.logits[f] > 0.0 ? 1 : 0;  // sigmoid(z) > 0.5
            }
        });
        row.val_macro_f1 = val_idx.empty() ? 0.0 : macro_f1(truth, pred);
        result.log.push_back(row);
    }
    return result;
}

// --- persistence -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'V', 'S', 'C', 'P', 'W', 'T', 'S', '1'};
constexpr uint32_t kVersion = 1;

struct ByteWriter {
    std::vector<uint8_t> bytes;

    void put_bytes(const void* p, size_t len) {
        const auto* b = static_cast<const uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + len);
    }
    void put_u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void put_i32(int32_t v) { put_u32(static_cast<uint32_t>(v)); }
    void put_u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void put_f64(double v) { put_u64(std::bit_cast<uint64_t>(v)); }
    void put_string(const std::string& s) {
        put_u32(static_cast<uint32_t>(s.size()));
        put_bytes(s.data(), s.size());
    }
};

struct ByteReader {
    const uint8_t* p;
    size_t len;
    size_t pos = 0;

    void need(size_t n) {
        if (pos + n > len)
            raise(ErrorCategory::Format, "weight file truncated");
    }
    void get_bytes(void* dst, size_t n) {
        need(n);
        std::memcpy(dst, p + pos, n);
        pos += n;
    }
    uint32_t get_u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    int32_t get_i32() { return static_cast<int32_t>(get_u32()); }
    uint64_t get_u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double get_f64() { return std::bit_cast<double>(get_u64()); }
    std::string get_string() {
        const uint32_t n = get_u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(p + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_weights(const ModelWeights& weights, const std::filesystem::path& path) {
    ByteWriter w;
    w.put_bytes(kMagic, sizeof(kMagic));
    w.put_u32(kVersion);
    const ViTConfig& c = weights.config;
    w.put_i32(c.image_size);
    w.put_i32(c.patch_size);
    w.put_i32(c.layers);
    w.put_i32(c.d_model);
    w.put_i32(c.heads);
    w.put_i32(c.mlp_hidden);
    w.put_i32(c.embed_dim);
    w.put_f64(c.eps);
    auto params = weights.parameters();
    w.put_u32(static_cast<uint32_t>(params.size()));
    for (const auto& p : params) {
        w.put_string(p.name);
        w.put_u32(static_cast<uint32_t>(p.tensor.rank()));
        for (int d = 0; d < p.tensor.rank(); ++d) w.put_i32(p.tensor.dim(d));
        const double* v = p.tensor.data();
        for (int64_t i = 0; i < p.tensor.numel(); ++i) w.put_f64(v[i]);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
    if (!f) raise(ErrorCategory::Io, "write failed: " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorCategory::Io, "cannot open: " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    ByteReader r{bytes.data(), bytes.size()};

    char magic[8];
    r.get_bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        raise(ErrorCategory::Format,
              "bad weight file magic: expected '" +
                  std::string(kMagic, sizeof(kMagic)) + "', found '" +
                  std::string(magic, sizeof(magic)) + "'");
    const uint32_t version = r.get_u32();
    if (version != kVersion)
        raise(ErrorCategory::Format,
              "unsupported weight file version " + std::to_string(version));
    ViTConfig c;
    c.image_size = r.get_i32();
    c.patch_size = r.get_i32();
    c.layers = r.get_i32();
    c.d_model = r.get_i32();
    c.heads = r.get_i32();
    c.mlp_hidden = r.get_i32();
    c.embed_dim = r.get_i32();
    c.eps = r.get_f64();
    c.validate();

    ModelWeights weights = make_weights(c);
    std::map<std::string, Tensor> by_name;
    for (auto& p : weights.parameters()) by_name.emplace(p.name, p.tensor);

    const uint32_t count = r.get_u32();
    if (count != by_name.size())
        raise(ErrorCategory::Format,
              "weight file has " + std::to_string(count) + " tensors, config needs " +
                  std::to_string(by_name.size()));
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = r.get_string();
        auto it = by_name.find(name);
        if (it == by_name.end())
            raise(ErrorCategory::Format, "unexpected tensor '" + name + "' in weight file");
        const uint32_t rank = r.get_u32();
        std::vector<int> dims(rank);
        for (auto& d : dims) d = r.get_i32();
        if (dims != it->second.shape())
            raise(ErrorCategory::Format,
                  "tensor '" + name + "' has shape " + shape_string(dims) +
                      ", config needs " + shape_string(it->second.shape()));
        double* v = it->second.mutable_data();
        for (int64_t j = 0; j < it->second.numel(); ++j) v[j] = r.get_f64();
    }
    return weights;
}

void write_train_log(const TrainResult& result, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    f << "epoch,train_loss,val_macro_f1\n";
    for (const auto& row : result.log)
        f << row.epoch << "," << fmt_double(row.train_loss) << ","
          << fmt_double(row.val_macro_f1) << "\n";
}

}  // namespace vitscope
