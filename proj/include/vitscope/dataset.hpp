#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vitscope/features.hpp"
#include "vitscope/raster.hpp"

namespace vitscope {

// One rendered object. scale is the circumradius as a fraction of the canvas
// side (radius = scale * canvas / 2); jitter is the pixel offset of the object
// center from its position cell anchor.
struct ObjectSpec {
    FeatureId shape;
    FeatureId color;
    FeatureId position;
    double scale = 0.2;
    double jitter_x = 0.0;
    double jitter_y = 0.0;
};

struct ImageAnnotation {
    int image_id = 0;
    std::vector<ObjectSpec> objects;
    std::array<int, kNumFeatures> feature_counts{};
    std::array<uint8_t, kNumFeatures> feature_present{};

    void refresh_features();  // recomputes counts/present from objects
};

struct GenConfig {
    int image_count = 500;
    int canvas = 64;
    int object_min = 1;
    int object_max = 5;
    int probe_reps = 2;       // repetitions per (shape,color,position) combo
    double scale_min = 0.15;  // fraction of canvas side
    double scale_max = 0.30;
    double jitter_frac = 0.10;  // of the position cell (canvas/2), per axis
    int patch_size = 8;         // canvas must be divisible by this

    void validate() const;
};

struct DatasetManifest {
    uint64_t seed = 0;
    GenConfig config;
    std::vector<ImageAnnotation> annotations;
    std::vector<ImageAnnotation> probe_set;
};

// Fixed render palette.
Rgb color_rgb(int color_value);

// Anchor (cell center) of a position cell on a canvas of the given side.
void position_anchor(int position_value, int canvas, double* cx, double* cy);

std::array<int, kNumFeatures> feature_vector(const ImageAnnotation& ann);

// Draw order per image: object count, then per object shape, color, position
// (from the not-yet-used cells), scale, jitter_x, jitter_y. Image stream and
// probe stream are derived from `seed` with stream tags 0 and 1.
DatasetManifest generate_dataset(const GenConfig& config, uint64_t seed);

// One single-object image per (shape, color, position) combination per
// repetition, combination-major with the repetition index innermost.
std::vector<ImageAnnotation> generate_probe_set(const GenConfig& config, uint64_t seed);

RasterImage render_image(const ImageAnnotation& ann, int canvas);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace vitscope
