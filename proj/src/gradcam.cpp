#include "vitscope/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "vitscope/error.hpp"
#include "vitscope/features.hpp"

namespace vitscope::gradcam {

void ScoreSelector::validate() const {
    if (features.empty())
        raise(ErrorCategory::Input, "score selector needs at least one feature");
    for (int f : features)
        if (f < 0 || f >= kNumFeatures)
            raise(ErrorCategory::Input,
                  "feature index " + std::to_string(f) + " out of range");
}

std::string ScoreSelector::label() const {
    std::string s;
    for (size_t i = 0; i < features.size(); ++i) {
        if (i) s += "+";
        s += feature_name(features[i]);
    }
    return s;
}

Capture capture(const VitModel& model, const RasterImage& image,
                const ScoreSelector& selector, int layer) {
    selector.validate();
    const ViTConfig& cfg = model.config();
    if (layer == -1) layer = cfg.layers - 1;
    if (layer < 0 || layer >= cfg.layers)
        raise(ErrorCategory::Input,
              "layer " + std::to_string(layer) + " out of range for " +
                  std::to_string(cfg.layers) + " blocks");

    Tensor pixels = pixels_from_image(image);
    pixels.set_requires_grad(true);  // pulls gradients through every block
    Tape tape;
    ForwardResult fr = model.forward_pixels(pixels, TapSpec::None(), true);

    std::vector<double> mask(kNumFeatures, 0.0);
    for (int f : selector.features) mask[f] = 1.0;
    Tensor mask_t = Tensor::from_data({kNumFeatures}, std::move(mask));
    Tensor scored = selector.softmax_scores ? softmax(fr.logits_t, 0) : fr.logits_t;
    Tensor score = sum_all(mul(scored, mask_t));
    tape.backward(score);

    const Tensor& act = fr.mlp_out[layer];  // (n_tokens, d_model)
    const int g = cfg.patches_per_side();
    const int c = cfg.d_model;

    Capture cap;
    cap.grid = g;
    cap.channels = c;
    cap.layer = layer;
    cap.score = score.item();
    cap.activations.resize(static_cast<size_t>(g) * g * c);
    cap.gradients.resize(static_cast<size_t>(g) * g * c);
    const double* av = act.data();
    const double* gv = act.grad();
    // token t = 1 + (i*g + j): CLS has no spatial cell and is dropped.
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            const size_t tok = 1 + static_cast<size_t>(i) * g + j;
            const size_t dst = (static_cast<size_t>(i) * g + j) * c;
            std::copy_n(av + tok * c, c, cap.activations.begin() + dst);
            std::copy_n(gv + tok * c, c, cap.gradients.begin() + dst);
        }
    return cap;
}

std::vector<double> channel_weights(std::span<const double> gradients, int h,
                                    int w, int channels) {
    if (gradients.size() != static_cast<size_t>(h) * w * channels)
        raise(ErrorCategory::Dimension,
              "channel_weights: gradient buffer does not match " +
                  std::to_string(h) + "x" + std::to_string(w) + "x" +
                  std::to_string(channels));
    std::vector<double> alpha(channels, 0.0);
    for (int64_t cell = 0; cell < static_cast<int64_t>(h) * w; ++cell)
        for (int c = 0; c < channels; ++c)
            alpha[c] += gradients[cell * channels + c];
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (auto& a : alpha) a *= inv;
    return alpha;
}

HeatMap heatmap(std::span<const double> activations, int h, int w, int channels,
                std::span<const double> alpha) {
    if (static_cast<int>(alpha.size()) != channels)
        raise(ErrorCategory::Dimension,
              "heatmap: " + std::to_string(alpha.size()) + " channel weights for " +
                  std::to_string(channels) + " channels");
    if (activations.size() != static_cast<size_t>(h) * w * channels)
        raise(ErrorCategory::Dimension,
              "heatmap: activation buffer does not match grid");
    HeatMap map;
    map.grid_h = h;
    map.grid_w = w;
    map.values.resize(static_cast<size_t>(h) * w);
    for (int64_t cell = 0; cell < static_cast<int64_t>(h) * w; ++cell) {
        double s = 0.0;
        for (int c = 0; c < channels; ++c)
            s += alpha[c] * activations[cell * channels + c];
        map.values[cell] = s > 0.0 ? s : 0.0;
    }
    map.normalized = map.values;
    const double mx = *std::max_element(map.values.begin(), map.values.end());
    if (mx > 0.0)
        for (auto& v : map.normalized) v /= mx;
    else
        std::fill(map.normalized.begin(), map.normalized.end(), 0.0);
    return map;
}

Rgb ramp(double v) {
    v = std::clamp(v, 0.0, 1.0);
    const auto lerp = [](double a, double b, double t) {
        return static_cast<uint8_t>(std::floor(a + (b - a) * t + 0.5));
    };
    if (v < 1.0 / 3.0) {
        const double t = v * 3.0;  // blue -> green
        return {0, lerp(0, 255, t), lerp(255, 0, t)};
    }
    if (v < 2.0 / 3.0) {
        const double t = (v - 1.0 / 3.0) * 3.0;  // green -> yellow
        return {lerp(0, 255, t), 255, 0};
    }
    const double t = (v - 2.0 / 3.0) * 3.0;  // yellow -> red
    return {255, lerp(255, 0, t), 0};
}

RasterImage colorize(const HeatMap& map, int image_size) {
    RasterImage img(image_size, image_size);
    for (int y = 0; y < image_size; ++y) {
        const int gy = y * map.grid_h / image_size;
        for (int x = 0; x < image_size; ++x) {
            const int gx = x * map.grid_w / image_size;
            img.set(x, y, ramp(map.normalized[static_cast<size_t>(gy) * map.grid_w + gx]));
        }
    }
    return img;
}

RasterImage blend_overlay(const RasterImage& colored, const RasterImage& image) {
    if (colored.width != image.width || colored.height != image.height)
        raise(ErrorCategory::Dimension, "overlay: image sizes differ");
    RasterImage out(image.width, image.height);
    for (size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = static_cast<uint8_t>(
            std::floor(0.5 * image.pixels[i] + 0.5 * colored.pixels[i] + 0.5));
    return out;
}

std::string sidecar_json(const Capture& cap, const ScoreSelector& selector,
                         std::span<const double> alpha) {
    double mn = alpha.empty() ? 0.0 : alpha[0];
    double mx = mn, sum = 0.0, abs_sum = 0.0;
    for (double a : alpha) {
        mn = std::min(mn, a);
        mx = std::max(mx, a);
        sum += a;
        abs_sum += std::abs(a);
    }
    nlohmann::ordered_json j;
    j["selector"] = nlohmann::ordered_json::array();
    for (int f : selector.features) j["selector"].push_back(feature_name(f));
    j["softmax_scores"] = selector.softmax_scores;
    j["layer"] = cap.layer;
    j["score"] = cap.score;
    j["alpha"] = {
        {"channels", alpha.size()},
        {"min", mn},
        {"max", mx},
        {"mean", alpha.empty() ? 0.0 : sum / static_cast<double>(alpha.size())},
        {"abs_mean", alpha.empty() ? 0.0 : abs_sum / static_cast<double>(alpha.size())},
    };
    return j.dump(2) + "\n";
}

}  // namespace vitscope::gradcam
