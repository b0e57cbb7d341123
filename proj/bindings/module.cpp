#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vitscope/dataset.hpp"
#include "vitscope/error.hpp"
#include "vitscope/gradcam.hpp"
#include "vitscope/neuron_lab.hpp"
#include "vitscope/superpos.hpp"
#include "vitscope/vit.hpp"
#include "vitscope/workspace.hpp"

namespace py = pybind11;
using namespace vitscope;

namespace {

ViTConfig config_from_dict(const py::dict& d) {
    ViTConfig c;
    if (d.contains("image_size")) c.image_size = d["image_size"].cast<int>();
    if (d.contains("patch_size")) c.patch_size = d["patch_size"].cast<int>();
    if (d.contains("layers")) c.layers = d["layers"].cast<int>();
    if (d.contains("d_model")) c.d_model = d["d_model"].cast<int>();
    if (d.contains("heads")) c.heads = d["heads"].cast<int>();
    if (d.contains("mlp_hidden")) c.mlp_hidden = d["mlp_hidden"].cast<int>();
    if (d.contains("embed_dim")) c.embed_dim = d["embed_dim"].cast<int>();
    if (d.contains("eps")) c.eps = d["eps"].cast<double>();
    c.validate();
    return c;
}

GenConfig gen_config_from_dict(const py::dict& d) {
    GenConfig c;
    if (d.contains("image_count")) c.image_count = d["image_count"].cast<int>();
    if (d.contains("canvas")) c.canvas = d["canvas"].cast<int>();
    if (d.contains("object_min")) c.object_min = d["object_min"].cast<int>();
    if (d.contains("object_max")) c.object_max = d["object_max"].cast<int>();
    if (d.contains("probe_reps")) c.probe_reps = d["probe_reps"].cast<int>();
    if (d.contains("scale_min")) c.scale_min = d["scale_min"].cast<double>();
    if (d.contains("scale_max")) c.scale_max = d["scale_max"].cast<double>();
    if (d.contains("jitter_frac")) c.jitter_frac = d["jitter_frac"].cast<double>();
    if (d.contains("patch_size")) c.patch_size = d["patch_size"].cast<int>();
    return c;
}

py::array_t<uint8_t> image_to_array(const RasterImage& img) {
    py::array_t<uint8_t> out({img.height, img.width, 3});
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
    return out;
}

RasterImage image_from_array(const py::array_t<uint8_t>& a) {
    const auto buf = a.request();
    if (buf.ndim != 3 || buf.shape[2] != 3)
        raise(ErrorCategory::Input, "expected an (H, W, 3) uint8 array");
    RasterImage img(static_cast<int>(buf.shape[1]), static_cast<int>(buf.shape[0]));
    const auto* src = static_cast<const uint8_t*>(buf.ptr);
    // honors strides so sliced arrays work
    const auto s0 = buf.strides[0], s1 = buf.strides[1], s2 = buf.strides[2];
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            img.set(x, y,
                    {src[y * s0 + x * s1], src[y * s0 + x * s1 + s2],
                     src[y * s0 + x * s1 + 2 * s2]});
    return img;
}

py::dict annotation_to_dict(const ImageAnnotation& ann) {
    py::dict d;
    d["image_id"] = ann.image_id;
    py::list objs;
    for (const auto& o : ann.objects) {
        py::dict od;
        od["shape"] = std::string(kShapeNames[o.shape.value]);
        od["color"] = std::string(kColorNames[o.color.value]);
        od["position"] = std::string(kPositionNames[o.position.value]);
        od["scale"] = o.scale;
        od["jitter"] = py::make_tuple(o.jitter_x, o.jitter_y);
        objs.append(od);
    }
    d["objects"] = objs;
    d["feature_counts"] =
        std::vector<int>(ann.feature_counts.begin(), ann.feature_counts.end());
    d["feature_present"] =
        std::vector<int>(ann.feature_present.begin(), ann.feature_present.end());
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "vitscope core: shapes dataset, ViT encoder, Grad-CAM, neuron "
              "entropy analysis, superposition metrics";

    static py::exception<Error> exc(m, "VitscopeError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(exc, e.what());
        }
    });

    m.def("feature_names", [] {
        std::vector<std::string> names;
        for (int i = 0; i < kNumFeatures; ++i) names.push_back(feature_name(i));
        return names;
    });
    m.def("feature_index", &feature_index, py::arg("name"));

    py::class_<DatasetManifest>(m, "Manifest")
        .def_property_readonly("seed", [](const DatasetManifest& m) { return m.seed; })
        .def_property_readonly(
            "image_count",
            [](const DatasetManifest& m) { return m.annotations.size(); })
        .def_property_readonly(
            "probe_count",
            [](const DatasetManifest& m) { return m.probe_set.size(); })
        .def("annotation",
             [](const DatasetManifest& m, size_t i) {
                 return annotation_to_dict(m.annotations.at(i));
             })
        .def("probe",
             [](const DatasetManifest& m, size_t i) {
                 return annotation_to_dict(m.probe_set.at(i));
             })
        .def("to_json", &manifest_to_json)
        .def("render",
             [](const DatasetManifest& m, size_t i, bool probe) {
                 const auto& ann = probe ? m.probe_set.at(i) : m.annotations.at(i);
                 return image_to_array(render_image(ann, m.config.canvas));
             },
             py::arg("index"), py::arg("probe") = false);

    m.def("generate_dataset",
          [](const py::dict& config, uint64_t seed) {
              return generate_dataset(gen_config_from_dict(config), seed);
          },
          py::arg("config"), py::arg("seed"));

    m.def("shannon_entropy_bits", [](const std::vector<double>& a) {
        return lab::shannon_entropy_bits(a);
    });
    m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) {
        return superpos::pearson(x, y);
    });
    m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) {
        return superpos::spearman(x, y);
    });

    py::class_<TrainLogRow>(m, "TrainLogRow")
        .def_readonly("epoch", &TrainLogRow::epoch)
        .def_readonly("train_loss", &TrainLogRow::train_loss)
        .def_readonly("val_macro_f1", &TrainLogRow::val_macro_f1);

    py::class_<VitModel>(m, "Model")
        .def(py::init([](const py::dict& config, uint64_t seed) {
                 return VitModel(config_from_dict(config), seed);
             }),
             py::arg("config"), py::arg("seed") = 0)
        .def_property_readonly("monitored_neurons",
                               [](const VitModel& m) {
                                   return m.config().monitored_neurons();
                               })
        .def("forward",
             [](const VitModel& model, const py::array_t<uint8_t>& image) {
                 ForwardResult r = model.forward(image_from_array(image));
                 return py::make_tuple(py::array_t<double>(r.logits.size(),
                                                           r.logits.data()),
                                       py::array_t<double>(r.embedding.size(),
                                                           r.embedding.data()));
             },
             py::arg("image"))
        .def("activations",
             [](const VitModel& model, const py::array_t<uint8_t>& image) {
                 ForwardResult r =
                     model.forward(image_from_array(image), TapSpec::All());
                 const auto& cfg = model.config();
                 py::array_t<double> out(
                     {cfg.layers, cfg.d_model, cfg.n_tokens()});
                 double* dst = out.mutable_data();
                 for (const auto& rec : r.records) {
                     const size_t base =
                         (static_cast<size_t>(rec.layer) * cfg.d_model + rec.unit) *
                         cfg.n_tokens();
                     std::copy(rec.per_token.begin(), rec.per_token.end(), dst + base);
                 }
                 return out;
             },
             py::arg("image"))
        .def("train",
             [](VitModel& model, const DatasetManifest& manifest,
                const py::dict& hyper) {
                 TrainHyper h;
                 if (hyper.contains("epochs")) h.epochs = hyper["epochs"].cast<int>();
                 if (hyper.contains("batch")) h.batch = hyper["batch"].cast<int>();
                 if (hyper.contains("lr")) h.lr = hyper["lr"].cast<double>();
                 if (hyper.contains("seed")) h.seed = hyper["seed"].cast<uint64_t>();
                 if (hyper.contains("val_fraction"))
                     h.val_fraction = hyper["val_fraction"].cast<double>();
                 if (hyper.contains("threads")) h.threads = hyper["threads"].cast<int>();
                 std::vector<RasterImage> images;
                 images.reserve(manifest.annotations.size());
                 for (const auto& ann : manifest.annotations)
                     images.push_back(render_image(ann, manifest.config.canvas));
                 return train_model(model, manifest, images, h).log;
             },
             py::arg("manifest"), py::arg("hyper") = py::dict())
        .def("gradcam",
             [](const VitModel& model, const py::array_t<uint8_t>& image,
                const std::vector<std::string>& features, int layer,
                bool softmax_scores) {
                 gradcam::ScoreSelector sel;
                 sel.softmax_scores = softmax_scores;
                 for (const auto& name : features) {
                     const int f = feature_index(name);
                     if (f < 0)
                         raise(ErrorCategory::Input, "unknown feature '" + name + "'");
                     sel.features.push_back(f);
                 }
                 gradcam::Capture cap =
                     gradcam::capture(model, image_from_array(image), sel, layer);
                 const auto alpha = gradcam::channel_weights(
                     cap.gradients, cap.grid, cap.grid, cap.channels);
                 const auto map = gradcam::heatmap(cap.activations, cap.grid,
                                                   cap.grid, cap.channels, alpha);
                 py::dict out;
                 py::array_t<double> values({cap.grid, cap.grid});
                 std::copy(map.values.begin(), map.values.end(),
                           values.mutable_data());
                 py::array_t<double> normalized({cap.grid, cap.grid});
                 std::copy(map.normalized.begin(), map.normalized.end(),
                           normalized.mutable_data());
                 out["heatmap"] = values;
                 out["normalized"] = normalized;
                 out["score"] = cap.score;
                 out["layer"] = cap.layer;
                 out["alpha"] = py::array_t<double>(alpha.size(), alpha.data());
                 return out;
             },
             py::arg("image"), py::arg("features"), py::arg("layer") = -1,
             py::arg("softmax_scores") = false)
        .def("patchwise_map",
             [](const VitModel& model, const py::array_t<uint8_t>& image, int layer,
                int unit) {
                 const auto values =
                     lab::patchwise_map(model, image_from_array(image), layer, unit);
                 const int g = model.config().patches_per_side();
                 py::array_t<double> out({g, g});
                 std::copy(values.begin(), values.end(), out.mutable_data());
                 return out;
             },
             py::arg("image"), py::arg("layer"), py::arg("unit"))
        .def("save",
             [](const VitModel& model, const std::string& path) {
                 save_weights(model.weights(), path);
             })
        .def_static("load", [](const std::string& path) {
            return VitModel(load_weights(path));
        });

    m.def("default_config_json",
          [] { return ws::config_to_json(ws::default_config()); });
    m.def("run_pipeline",
          [](const std::string& config_json, bool force) {
              ws::run_pipeline(ws::config_from_json(config_json), force);
          },
          py::arg("config_json"), py::arg("force") = false);
    m.def("run_stage", [](const std::string& stage, const std::string& config_json) {
        const ws::RunConfig c = ws::config_from_json(config_json);
        if (stage == "gen") return ws::cmd_gen(c).up_to_date;
        if (stage == "train") return ws::cmd_train(c).up_to_date;
        if (stage == "neurons") return ws::cmd_neurons(c).up_to_date;
        if (stage == "superpos") return ws::cmd_superpos(c).up_to_date;
        if (stage == "gradcam") {
            ws::cmd_gradcam(c);
            return false;
        }
        if (stage == "report") {
            ws::cmd_report(c);
            return false;
        }
        raise(ErrorCategory::Input, "unknown stage '" + stage + "'");
    });
}
