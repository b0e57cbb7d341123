#include "vitscope/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <span>

#include "json.hpp"
#include "vitscope/error.hpp"
#include "vitscope/rng.hpp"

namespace vitscope {

namespace {

constexpr std::array<Rgb, kNumColors> kPalette = {{
    {255, 0, 0},      // red
    {0, 200, 0},      // green
    {0, 0, 255},      // blue
    {255, 105, 180},  // pink
    {0, 0, 0},        // black
    {255, 220, 0},    // yellow
}};

}  // namespace

Rgb color_rgb(int color_value) {
    if (color_value < 0 || color_value >= kNumColors)
        raise(ErrorCategory::Input, "color value out of range");
    return kPalette[color_value];
}

void position_anchor(int position_value, int canvas, double* cx, double* cy) {
    const double q = canvas / 4.0;
    switch (position_value) {
        case 0: *cx = q; *cy = q; return;              // top-left
        case 1: *cx = 3 * q; *cy = q; return;          // top-right
        case 2: *cx = q; *cy = 3 * q; return;          // bottom-left
        case 3: *cx = 3 * q; *cy = 3 * q; return;      // bottom-right
        case 4: *cx = 2 * q; *cy = 2 * q; return;      // center
        default: raise(ErrorCategory::Input, "position value out of range");
    }
}

void ImageAnnotation::refresh_features() {
    feature_counts = feature_vector(*this);
    for (int i = 0; i < kNumFeatures; ++i)
        feature_present[i] = feature_counts[i] > 0 ? 1 : 0;
}

std::array<int, kNumFeatures> feature_vector(const ImageAnnotation& ann) {
    std::array<int, kNumFeatures> counts{};
    for (const auto& obj : ann.objects) {
        counts[obj.shape.index()]++;
        counts[obj.color.index()]++;
        counts[obj.position.index()]++;
    }
    return counts;
}

void GenConfig::validate() const {
    if (image_count < 0)
        raise(ErrorCategory::Config, "image_count must be >= 0");
    if (canvas <= 0)
        raise(ErrorCategory::Config, "canvas side must be positive");
    if (patch_size <= 0 || canvas % patch_size != 0)
        raise(ErrorCategory::Config,
              "canvas side (" + std::to_string(canvas) +
                  ") must be divisible by the patch size (" +
                  std::to_string(patch_size) + ")");
    if (object_min < 1 || object_max > 5 || object_min > object_max)
        raise(ErrorCategory::Config, "object count range must lie within [1,5]");
    if (probe_reps < 1)
        raise(ErrorCategory::Config, "probe_reps must be >= 1");
    if (!(scale_min > 0.0) || scale_max < scale_min)
        raise(ErrorCategory::Config, "invalid scale range");
    if (jitter_frac < 0.0)
        raise(ErrorCategory::Config, "jitter_frac must be >= 0");
    // Objects must stay inside their quadrant cell so position labels are
    // unambiguous and every render fits the canvas:
    // radius + jitter <= canvas/4.
    if (scale_max / 2.0 + jitter_frac / 2.0 > 0.25 + 1e-12)
        raise(ErrorCategory::Config,
              "scale_max/2 + jitter_frac/2 must not exceed 1/4 of the canvas");
}

namespace {

ObjectSpec sample_object(Rng& rng, const GenConfig& cfg,
                         std::vector<int>& free_cells) {
    ObjectSpec obj;
    obj.shape = shape_feature(static_cast<int>(rng.bounded(kNumShapes)));
    obj.color = color_feature(static_cast<int>(rng.bounded(kNumColors)));
    const size_t pick = rng.bounded(free_cells.size());
    obj.position = position_feature(free_cells[pick]);
    free_cells.erase(free_cells.begin() + static_cast<ptrdiff_t>(pick));
    obj.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    const double j = cfg.jitter_frac * cfg.canvas / 2.0;
    obj.jitter_x = rng.uniform(-j, j);
    obj.jitter_y = rng.uniform(-j, j);
    return obj;
}

}  // namespace

DatasetManifest generate_dataset(const GenConfig& config, uint64_t seed) {
    config.validate();
    DatasetManifest m;
    m.seed = seed;
    m.config = config;

    Rng rng(derive_seed(seed, 0));
    m.annotations.reserve(config.image_count);
    for (int id = 0; id < config.image_count; ++id) {
        ImageAnnotation ann;
        ann.image_id = id;
        const int span = config.object_max - config.object_min + 1;
        const int count = config.object_min + static_cast<int>(rng.bounded(span));
        std::vector<int> free_cells = {0, 1, 2, 3, 4};
        for (int i = 0; i < count; ++i)
            ann.objects.push_back(sample_object(rng, config, free_cells));
        ann.refresh_features();
        m.annotations.push_back(std::move(ann));
    }
    // An empty dataset carries no probe set either.
    if (config.image_count > 0)
        m.probe_set = generate_probe_set(config, derive_seed(seed, 1));
    return m;
}

std::vector<ImageAnnotation> generate_probe_set(const GenConfig& config,
                                                uint64_t seed) {
    config.validate();
    Rng rng(seed);
    std::vector<ImageAnnotation> probes;
    probes.reserve(kNumShapes * kNumColors * kNumPositions * config.probe_reps);
    int id = 0;
    const double j = config.jitter_frac * config.canvas / 2.0;
    for (int s = 0; s < kNumShapes; ++s)
        for (int c = 0; c < kNumColors; ++c)
            for (int p = 0; p < kNumPositions; ++p)
                for (int rep = 0; rep < config.probe_reps; ++rep) {
                    ImageAnnotation ann;
                    ann.image_id = id++;
                    ObjectSpec obj;
                    obj.shape = shape_feature(s);
                    obj.color = color_feature(c);
                    obj.position = position_feature(p);
                    obj.scale = rng.uniform(config.scale_min, config.scale_max);
                    obj.jitter_x = rng.uniform(-j, j);
                    obj.jitter_y = rng.uniform(-j, j);
                    ann.objects.push_back(obj);
                    ann.refresh_features();
                    probes.push_back(std::move(ann));
                }
    return probes;
}

namespace {

// Regular polygon, first vertex pointing up (screen y grows downward); the
// square is rotated to be axis-aligned.
void draw_shape(RasterImage& img, const ObjectSpec& obj, double cx, double cy,
                double radius) {
    const Rgb color = color_rgb(obj.color.value);
    const int shape = obj.shape.value;
    if (shape == 0) {
        fill_circle(img, cx, cy, radius, color);
        return;
    }
    int sides = 0;
    double offset = -std::numbers::pi / 2.0;
    switch (shape) {
        case 1: sides = 3; break;
        case 2: sides = 4; offset = -std::numbers::pi / 4.0; break;
        case 3: sides = 5; break;
        case 4: sides = 6; break;
        default: raise(ErrorCategory::Input, "shape value out of range");
    }
    std::vector<double> xs(sides), ys(sides);
    for (int i = 0; i < sides; ++i) {
        const double a = offset + 2.0 * std::numbers::pi * i / sides;
        xs[i] = cx + radius * std::cos(a);
        ys[i] = cy + radius * std::sin(a);
    }
    fill_polygon(img, xs, ys, color);
}

}  // namespace

RasterImage render_image(const ImageAnnotation& ann, int canvas) {
    RasterImage img(canvas, canvas, {255, 255, 255});
    for (const auto& obj : ann.objects) {
        const double radius = obj.scale * canvas / 2.0;
        if (radius <= 0.0)
            raise(ErrorCategory::Render,
                  "degenerate object with non-positive radius in image " +
                      std::to_string(ann.image_id));
        double cx = 0, cy = 0;
        position_anchor(obj.position.value, canvas, &cx, &cy);
        cx += obj.jitter_x;
        cy += obj.jitter_y;
        if (cx - radius < 0 || cy - radius < 0 || cx + radius > canvas ||
            cy + radius > canvas)
            raise(ErrorCategory::Render,
                  "object outside canvas in image " + std::to_string(ann.image_id));
        draw_shape(img, obj, cx, cy, radius);
    }
    return img;
}

namespace {

using json = nlohmann::ordered_json;

json annotation_to_json(const ImageAnnotation& ann) {
    json objects = json::array();
    for (const auto& obj : ann.objects) {
        objects.push_back({
            {"shape", kShapeNames[obj.shape.value]},
            {"color", kColorNames[obj.color.value]},
            {"position", kPositionNames[obj.position.value]},
            {"scale", obj.scale},
            {"jitter", {obj.jitter_x, obj.jitter_y}},
        });
    }
    return json{
        {"image_id", ann.image_id},
        {"objects", std::move(objects)},
        {"feature_counts", ann.feature_counts},
        {"feature_present", ann.feature_present},
    };
}

int name_lookup(std::span<const char* const> names, const std::string& v,
                const char* what) {
    for (size_t i = 0; i < names.size(); ++i)
        if (v == names[i]) return static_cast<int>(i);
    raise(ErrorCategory::Format, std::string("unknown ") + what + ": " + v);
}

ImageAnnotation annotation_from_json(const json& j) {
    ImageAnnotation ann;
    ann.image_id = j.at("image_id").get<int>();
    for (const auto& o : j.at("objects")) {
        ObjectSpec obj;
        obj.shape = shape_feature(
            name_lookup(kShapeNames, o.at("shape").get<std::string>(), "shape"));
        obj.color = color_feature(
            name_lookup(kColorNames, o.at("color").get<std::string>(), "color"));
        obj.position = position_feature(name_lookup(
            kPositionNames, o.at("position").get<std::string>(), "position"));
        obj.scale = o.at("scale").get<double>();
        obj.jitter_x = o.at("jitter").at(0).get<double>();
        obj.jitter_y = o.at("jitter").at(1).get<double>();
        ann.objects.push_back(obj);
    }
    ann.refresh_features();
    const auto stored = j.at("feature_counts").get<std::vector<int>>();
    if (stored.size() != kNumFeatures ||
        !std::equal(stored.begin(), stored.end(), ann.feature_counts.begin()))
        raise(ErrorCategory::Format,
              "stored feature_counts disagree with objects for image " +
                  std::to_string(ann.image_id));
    return ann;
}

json config_to_json(const GenConfig& c) {
    return json{
        {"image_count", c.image_count},   {"canvas", c.canvas},
        {"object_min", c.object_min},     {"object_max", c.object_max},
        {"probe_reps", c.probe_reps},     {"scale_min", c.scale_min},
        {"scale_max", c.scale_max},       {"jitter_frac", c.jitter_frac},
        {"patch_size", c.patch_size},
    };
}

GenConfig config_from_json(const json& j) {
    GenConfig c;
    c.image_count = j.at("image_count").get<int>();
    c.canvas = j.at("canvas").get<int>();
    c.object_min = j.at("object_min").get<int>();
    c.object_max = j.at("object_max").get<int>();
    c.probe_reps = j.at("probe_reps").get<int>();
    c.scale_min = j.at("scale_min").get<double>();
    c.scale_max = j.at("scale_max").get<double>();
    c.jitter_frac = j.at("jitter_frac").get<double>();
    c.patch_size = j.at("patch_size").get<int>();
    return c;
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& m) {
    json doc;
    doc["format"] = "vitscope-dataset";
    doc["version"] = 1;
    doc["seed"] = m.seed;
    doc["config"] = config_to_json(m.config);
    json anns = json::array();
    for (const auto& a : m.annotations) anns.push_back(annotation_to_json(a));
    doc["annotations"] = std::move(anns);
    json probes = json::array();
    for (const auto& a : m.probe_set) probes.push_back(annotation_to_json(a));
    doc["probe_set"] = std::move(probes);
    return doc.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        raise(ErrorCategory::Format, std::string("manifest parse error: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "vitscope-dataset")
            raise(ErrorCategory::Format, "not a vitscope dataset manifest");
        DatasetManifest m;
        m.seed = doc.at("seed").get<uint64_t>();
        m.config = config_from_json(doc.at("config"));
        for (const auto& a : doc.at("annotations"))
            m.annotations.push_back(annotation_from_json(a));
        for (const auto& a : doc.at("probe_set"))
            m.probe_set.push_back(annotation_from_json(a));
        return m;
    } catch (const json::exception& e) {
        raise(ErrorCategory::Format, std::string("bad manifest: ") + e.what());
    }
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    const std::string text = manifest_to_json(m);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) raise(ErrorCategory::Io, "write failed: " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorCategory::Io, "cannot open: " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    return manifest_from_json(text);
}

}  // namespace vitscope
