#pragma once

#include <span>
#include <string>
#include <vector>

#include "vitscope/raster.hpp"
#include "vitscope/vit.hpp"

namespace vitscope::gradcam {

// The attribution score is a sum of feature logits over this set; a pair such
// as {green, square} stands in for the compositional prompt "a green square".
// With softmax_scores the logits are pushed through a softmax over all 16
// features first and the selected probabilities are summed.
struct ScoreSelector {
    std::vector<int> features;  // global feature indices, nonempty
    bool softmax_scores = false;

    void validate() const;
    std::string label() const;  // e.g. "green+square", used in file names
};

struct Capture {
    int grid = 0;      // patches per side
    int channels = 0;  // d_model
    std::vector<double> activations;  // (grid, grid, channels), CLS excluded
    std::vector<double> gradients;    // same layout, d(score)/d(activation)
    double score = 0.0;
    int layer = 0;
};

struct HeatMap {
    int grid_h = 0;
    int grid_w = 0;
    std::vector<double> values;      // >= 0 after the ReLU
    std::vector<double> normalized;  // values / max, or all zero
};

// One forward + one backward pass; layer -1 selects the last block.
Capture capture(const VitModel& model, const RasterImage& image,
                const ScoreSelector& selector, int layer = -1);

// alpha_c = mean over the spatial grid of the channel's gradients.
std::vector<double> channel_weights(std::span<const double> gradients, int h,
                                    int w, int channels);

HeatMap heatmap(std::span<const double> activations, int h, int w, int channels,
                std::span<const double> alpha);

// Fixed color ramp blue -> green -> yellow -> red over [0,1].
Rgb ramp(double v);

// Nearest-neighbor upsample of the normalized grid, through the ramp.
RasterImage colorize(const HeatMap& map, int image_size);

// 0.5*image + 0.5*colored, rounded half-up per channel.
RasterImage blend_overlay(const RasterImage& colored, const RasterImage& image);

// JSON sidecar text: score, layer, selector, alpha summary statistics.
std::string sidecar_json(const Capture& cap, const ScoreSelector& selector,
                         std::span<const double> alpha);

}  // namespace vitscope::gradcam
