#pragma once

#include <array>
#include <string>

#include "vitscope/error.hpp"

namespace vitscope {

// The 16 dataset features: 5 shapes, 6 colors, 5 positions. The global index
// ordering (shapes 0-4, colors 5-10, positions 11-15) is fixed and used
// everywhere a feature index appears (count vectors, affinities, CSV columns).
enum class AttrKind { Shape = 0, Color = 1, Position = 2 };

inline constexpr int kNumShapes = 5;
inline constexpr int kNumColors = 6;
inline constexpr int kNumPositions = 5;
inline constexpr int kNumFeatures = kNumShapes + kNumColors + kNumPositions;

inline constexpr int kShapeBase = 0;
inline constexpr int kColorBase = kNumShapes;
inline constexpr int kPositionBase = kNumShapes + kNumColors;

inline constexpr std::array<const char*, kNumShapes> kShapeNames = {
    "circle", "triangle", "square", "pentagon", "hexagon"};
inline constexpr std::array<const char*, kNumColors> kColorNames = {
    "red", "green", "blue", "pink", "black", "yellow"};
inline constexpr std::array<const char*, kNumPositions> kPositionNames = {
    "top-left", "top-right", "bottom-left", "bottom-right", "center"};

struct FeatureId {
    AttrKind kind;
    int value;  // index within the kind

    int index() const {
        switch (kind) {
            case AttrKind::Shape: return kShapeBase + value;
            case AttrKind::Color: return kColorBase + value;
            case AttrKind::Position: return kPositionBase + value;
        }
        raise(ErrorCategory::Internal, "bad AttrKind");
    }

    friend bool operator==(const FeatureId&, const FeatureId&) = default;
};

inline FeatureId shape_feature(int v) { return {AttrKind::Shape, v}; }
inline FeatureId color_feature(int v) { return {AttrKind::Color, v}; }
inline FeatureId position_feature(int v) { return {AttrKind::Position, v}; }

inline FeatureId feature_from_index(int i) {
    if (i < 0 || i >= kNumFeatures)
        raise(ErrorCategory::Input, "feature index out of range: " + std::to_string(i));
    if (i < kColorBase) return shape_feature(i);
    if (i < kPositionBase) return color_feature(i - kColorBase);
    return position_feature(i - kPositionBase);
}

inline std::string feature_name(int i) {
    FeatureId f = feature_from_index(i);
    switch (f.kind) {
        case AttrKind::Shape: return kShapeNames[f.value];
        case AttrKind::Color: return kColorNames[f.value];
        case AttrKind::Position: return kPositionNames[f.value];
    }
    raise(ErrorCategory::Internal, "bad AttrKind");
}

// Returns -1 when the name is unknown.
inline int feature_index(const std::string& name) {
    for (int i = 0; i < kNumFeatures; ++i)
        if (feature_name(i) == name) return i;
    return -1;
}

}  // namespace vitscope
