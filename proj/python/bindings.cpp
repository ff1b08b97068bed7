#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aeforge/error.hpp"
#include "aeforge/jpeg.hpp"
#include "aeforge/pipeline.hpp"
#include "aeforge/util.hpp"

namespace py = pybind11;
using namespace aeforge;

namespace {

using ImageArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// Images cross the boundary as uint8 arrays of shape (height, width, 3).
ImageRGB8 to_image(const ImageArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected a (height, width, 3) uint8 array");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  std::vector<Rgb> px(static_cast<std::size_t>(w) * h);
  const std::uint8_t* d = a.data();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = {d[3 * i], d[3 * i + 1], d[3 * i + 2]};
  return ImageRGB8(w, h, std::move(px));
}

ImageArray to_array(const ImageRGB8& img) {
  ImageArray a({img.height(), img.width(), 3});
  std::uint8_t* d = a.mutable_data();
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    d[3 * i] = px[i].r;
    d[3 * i + 1] = px[i].g;
    d[3 * i + 2] = px[i].b;
  }
  return a;
}

py::object opt(const std::optional<double>& v) { return v ? py::object(py::float_(*v)) : py::object(py::none()); }

py::dict verdict_dict(const Verdict& v) {
  py::list crops;
  for (const auto& c : v.crops) {
    py::dict d;
    d["x"] = c.corner.x;
    d["y"] = c.corner.y;
    d["prob"] = c.prob;
    crops.append(d);
  }
  py::dict out;
  out["decision"] = v.decision;
  out["aggregate"] = v.aggregate;
  out["crops"] = crops;
  out["seed"] = v.seed;
  out["upscaled"] = v.upscaled;
  return out;
}

RunConfig config_for(const std::optional<std::string>& path, const std::string& profile, const std::string& workdir) {
  std::optional<std::filesystem::path> file;
  if (path) file = *path;
  RunConfig cfg = load_run_config(file, profile);
  cfg.workdir = workdir;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_aeforge, m) {
  m.doc() = "aeforge core: autoencoder-artifact detection of generated images";

  py::register_exception<Error>(m, "Error");
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // Imaging.
  m.def("load_ppm", [](const std::string& p) { return to_array(load_ppm(p)); });
  m.def("save_ppm", [](const ImageArray& a, const std::string& p) { save_ppm(to_image(a), p); });
  m.def("encode_ppm", [](const ImageArray& a) {
    const auto bytes = encode_ppm(to_image(a));
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("jpeg_degrade", [](const ImageArray& a, int q) { return to_array(jpeg_degrade(to_image(a), q)); },
        py::arg("image"), py::arg("quality"));
  m.def("resize_bilinear", [](const ImageArray& a, double s) { return to_array(resize_bilinear(to_image(a), s)); },
        py::arg("image"), py::arg("scale"));
  m.def("unique_colors", [](const ImageArray& a) { return unique_colors(to_image(a)); });
  m.def("bw_fraction", [](const ImageArray& a) { return bw_fraction(to_image(a)); });
  m.def("color_randomize", [](const ImageArray& a, std::uint64_t seed) {
    return to_array(color_randomize(to_image(a), seed));
  });
  m.def(
      "random_crops",
      [](const ImageArray& a, int size, int count, std::uint64_t seed) {
        py::list out;
        for (const auto& c : random_crops(to_image(a), {size, count, seed})) out.append(to_array(c));
        return out;
      },
      py::arg("image"), py::arg("size"), py::arg("count"), py::arg("seed"));
  m.def("quality_tables", [](int q) {
    const auto t = quality_tables(q);
    py::dict d;
    d["luma"] = std::vector<int>(t.luma.begin(), t.luma.end());
    d["chroma"] = std::vector<int>(t.chroma.begin(), t.chroma.end());
    d["quality"] = t.quality;
    return d;
  });

  // Data generation.
  m.def(
      "generate_scene",
      [](std::uint64_t seed, int width, int height, int palette_size, int shape_count, const std::string& texture) {
        SceneSpec s;
        s.seed = seed;
        s.width = width;
        s.height = height;
        s.palette_size = palette_size;
        s.shape_count = shape_count;
        if (texture == "flat") s.texture = Texture::flat;
        else if (texture == "gradient") s.texture = Texture::gradient;
        else if (texture == "noise-speckle") s.texture = Texture::noise_speckle;
        else if (texture == "stripes") s.texture = Texture::stripes;
        else throw ValidationError("unknown texture '" + texture + "'");
        return to_array(generate_scene(s));
      },
      py::arg("seed"), py::arg("width") = 64, py::arg("height") = 64, py::arg("palette_size") = 4,
      py::arg("shape_count") = 4, py::arg("texture") = "flat");
  m.def(
      "generate_test_card",
      [](std::uint64_t seed, int w, int h) { return to_array(generate_test_card(seed, w, h)); }, py::arg("seed"),
      py::arg("width") = 256, py::arg("height") = 256);

  // Metrics and calibration.
  m.def("metrics", [](std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
    const auto r = metrics({tp, fp, fn, tn});
    py::dict d;
    d["precision"] = opt(r.precision);
    d["recall"] = opt(r.recall);
    d["f1"] = opt(r.f1);
    d["tpr"] = opt(r.tpr);
    d["fpr"] = opt(r.fpr);
    return d;
  });
  m.def("roc_auc", [](const std::vector<double>& pos, const std::vector<double>& neg) {
    const auto r = roc_auc(pos, neg);
    py::list pts;
    for (const auto& p : r.curve.points) pts.append(py::make_tuple(p.fpr, p.tpr, p.threshold));
    return py::make_tuple(r.auc, pts);
  });
  m.def("tpr_at_fpr", [](const std::vector<double>& pos, const std::vector<double>& neg, double cap) {
    return tpr_at_fpr(pos, neg, cap);
  });
  m.def(
      "calibrate_threshold",
      [](const std::vector<double>& orig, const std::vector<double>& recon, double target) {
        const auto c = calibrate_threshold(orig, recon, target);
        py::dict d;
        d["threshold"] = c.threshold;
        d["achieved_fpr"] = c.achieved_fpr;
        d["achieved_recall"] = c.achieved_recall;
        d["target_met"] = c.target_met;
        return d;
      },
      py::arg("original"), py::arg("reconstructed"), py::arg("fpr_target") = 0.001);

  // Models.
  py::class_<Autoencoder<float>>(m, "Autoencoder")
      .def(py::init([](int latent, const std::string& act, std::uint64_t seed) {
             return Autoencoder<float>(AutoencoderConfig{latent, parse_activation(act), seed});
           }),
           py::arg("latent_channels") = 4, py::arg("activation") = "silu", py::arg("seed") = 1)
      .def_static("load", [](const std::string& p) { return Autoencoder<float>::from_checkpoint(load_checkpoint(p)); })
      .def("save", [](const Autoencoder<float>& ae, const std::string& p) { save_checkpoint(ae.to_checkpoint(), p); })
      .def("reconstruct", [](const Autoencoder<float>& ae, const ImageArray& a) {
        return to_array(ae_reconstruct(ae, to_image(a)));
      })
      .def_property_readonly("parameter_count", &Autoencoder<float>::parameter_count)
      .def_property_readonly("latent_channels", [](const Autoencoder<float>& ae) { return ae.config().latent_channels; });

  py::class_<Detector<float>>(m, "Detector")
      .def(py::init([](int crop, std::uint64_t seed) { return Detector<float>(DetectorConfig{crop, seed}); }),
           py::arg("crop_size") = 32, py::arg("seed") = 1)
      .def_static("load", [](const std::string& p) { return Detector<float>::from_checkpoint(load_checkpoint(p)); })
      .def("probabilities",
           [](const Detector<float>& d, const std::vector<ImageArray>& crops) {
             std::vector<ImageRGB8> imgs;
             for (const auto& c : crops) imgs.push_back(to_image(c));
             return detector_probabilities(d, imgs);
           })
      .def(
          "decide",
          [](const Detector<float>& d, const ImageArray& a, int tries, double threshold, std::uint64_t seed,
             bool upscale) {
            DecisionConfig c{tries, threshold, d.config().crop_size, seed, upscale};
            return verdict_dict(decide(to_image(a), d, c));
          },
          py::arg("image"), py::arg("tries") = 1, py::arg("threshold") = 0.5, py::arg("seed") = 0,
          py::arg("upscale_small") = false)
      .def_property_readonly("crop_size", [](const Detector<float>& d) { return d.config().crop_size; })
      .def_property_readonly("parameter_count", &Detector<float>::parameter_count);

  m.def("checkpoint_hash", [](const std::string& p) { return checkpoint_hash(load_checkpoint(p)); });

  // Pipeline.
  m.def(
      "run_stage",
      [](const std::string& stage, const std::optional<std::string>& config, const std::string& profile,
         const std::string& workdir) {
        const RunConfig cfg = config_for(config, profile, workdir);
        py::gil_scoped_release release;
        if (stage == "gen-data") stage_gen_data(cfg);
        else if (stage == "train-ae") stage_train_ae(cfg);
        else if (stage == "build-corpus") stage_build_corpus(cfg);
        else if (stage == "train-detector") stage_train_detector(cfg);
        else if (stage == "calibrate") stage_calibrate(cfg);
        else if (stage == "eval") stage_eval(cfg);
        else if (stage == "robustness") stage_robustness(cfg);
        else if (stage == "artifacts") stage_artifacts(cfg);
        else if (stage == "run") run_all(cfg);
        else throw ValidationError("unknown stage '" + stage + "'");
      },
      py::arg("stage"), py::arg("config") = py::none(), py::arg("profile") = "desk", py::arg("workdir") = ".");
  m.def("profile_config", [](const std::string& name) { return profile_json(name).dump(); });
}
