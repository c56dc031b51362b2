#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "terra/ckpt/checkpoint.hpp"
#include "terra/core/version.hpp"
#include "terra/diffusion/schedule.hpp"
#include "terra/geomorph/sketch.hpp"
#include "terra/metrics/metrics.hpp"
#include "terra/pipeline/commands.hpp"
#include "terra/raster/normalize.hpp"
#include "terra/raster/quantize.hpp"
#include "terra/synthterra/synth.hpp"

namespace py = pybind11;
using namespace terra;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

raster::Heightmap to_heightmap(const F32& a, double resolution_m) {
  if (a.ndim() != 2) throw InvalidArgument("heightmap must be a 2-D array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return raster::Heightmap(w, h, std::vector<float>(a.data(), a.data() + a.size()), resolution_m);
}

py::array_t<float> from_heightmap(const raster::Heightmap& hm) {
  py::array_t<float> out({hm.height, hm.width});
  std::memcpy(out.mutable_data(), hm.elevations.data(), hm.size() * sizeof(float));
  return out;
}

raster::Texture to_texture(const U8& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw InvalidArgument("texture must be an (H, W, 3) array");
  return raster::Texture(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                         std::vector<uint8_t>(a.data(), a.data() + a.size()));
}

py::array_t<uint8_t> from_texture(const raster::Texture& t) {
  py::array_t<uint8_t> out({t.height, t.width, 3});
  std::memcpy(out.mutable_data(), t.rgb.data(), t.rgb.size());
  return out;
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<std::vector<double>> rows(const F64& a) {
  if (a.ndim() != 2) throw InvalidArgument("features must be a 2-D array");
  std::vector<std::vector<double>> out(static_cast<size_t>(a.shape(0)));
  for (size_t i = 0; i < out.size(); ++i) out[i].assign(a.data() + i * a.shape(1), a.data() + (i + 1) * a.shape(1));
  return out;
}

class PyGenerator {
 public:
  explicit PyGenerator(const std::filesystem::path& dir)
      : g_(std::make_shared<const pipeline::Generator>(pipeline::load_generator(dir))) {}

  py::list generate(int count, uint64_t seed, int steps, const std::string& sampler, const std::optional<U8>& condition,
                    uint64_t first_index) const {
    std::optional<raster::Texture> cond;
    if (condition) cond = to_texture(*condition);
    std::vector<raster::TerrainPair> pairs;
    {
      py::gil_scoped_release release;
      pairs = pipeline::generate(*g_, count, seed, {steps, sampler, 8}, cond, first_index);
    }
    py::list out;
    for (const auto& p : pairs) out.append(py::make_tuple(from_heightmap(p.height), from_texture(p.texture)));
    return out;
  }

  int resolution() const { return g_->resolution(); }
  std::string checkpoint_hash() const { return g_->checkpoint_hash; }
  bool conditional() const { return g_->control.has_value(); }

 private:
  std::shared_ptr<const pipeline::Generator> g_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "C++ core of terrafusion";
  m.attr("__version__") = kVersion;

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "generate_pair",
      [](uint64_t seed, uint64_t index, int size_px, double correlation_strength) {
        synth::SynthConfig c;
        c.seed = seed;
        c.size_px = size_px;
        c.correlation_strength = correlation_strength;
        c.validate();
        const auto p = synth::generate_pair(c, index);
        return py::make_tuple(from_heightmap(p.height), from_texture(p.texture));
      },
      py::arg("seed"), py::arg("index"), py::arg("size_px") = 64, py::arg("correlation_strength") = 0.9,
      "Synthetic (heightmap [m], texture RGB) pair.");

  m.def(
      "extract_sketch",
      [](const F32& h, double resolution_m, double valley_percentile, double ridge_percentile) {
        geomorph::SketchConfig c;
        c.valley_percentile = valley_percentile;
        c.ridge_percentile = ridge_percentile;
        return from_texture(geomorph::extract_sketch(to_heightmap(h, resolution_m), c).sketch);
      },
      py::arg("heightmap"), py::arg("resolution_m") = 25.0, py::arg("valley_percentile") = 98.0,
      py::arg("ridge_percentile") = 98.0, "RGB sketch: red valleys, green ridges, blue cliffs.");

  m.def(
      "fill_depressions",
      [](const F64& h, double epsilon) {
        if (h.ndim() != 2) throw InvalidArgument("grid must be 2-D");
        geomorph::ElevationGrid g(static_cast<int>(h.shape(1)), static_cast<int>(h.shape(0)),
                                  std::vector<double>(h.data(), h.data() + h.size()));
        const auto f = geomorph::fill_depressions(g, epsilon);
        py::array_t<double> out({f.height, f.width});
        std::memcpy(out.mutable_data(), f.v.data(), f.size() * sizeof(double));
        return out;
      },
      py::arg("grid"), py::arg("epsilon") = geomorph::kFillEpsilon);

  m.def(
      "flow_accumulation_d8",
      [](const F64& h) {
        if (h.ndim() != 2) throw InvalidArgument("grid must be 2-D");
        geomorph::ElevationGrid g(static_cast<int>(h.shape(1)), static_cast<int>(h.shape(0)),
                                  std::vector<double>(h.data(), h.data() + h.size()));
        const auto r = geomorph::flow_accumulation_d8(g);
        py::array_t<int64_t> out({g.height, g.width});
        std::memcpy(out.mutable_data(), r.accumulation.v.data(), r.accumulation.size() * sizeof(int64_t));
        return out;
      },
      py::arg("filled"));

  m.def(
      "normalize_height",
      [](const F32& h, double h_max) {
        const auto v = raster::normalize_height(to_heightmap(h, 25.0), {h_max});
        py::array_t<float> out({h.shape(0), h.shape(1)});
        std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(float));
        return out;
      },
      py::arg("heightmap"), py::arg("h_max") = 2000.0);

  m.def(
      "denormalize_height",
      [](const F32& v, double h_max) {
        if (v.ndim() != 2) throw InvalidArgument("values must be 2-D");
        return from_heightmap(raster::denormalize_height(std::span<const float>(v.data(), v.size()),
                                                         static_cast<int>(v.shape(1)), static_cast<int>(v.shape(0)),
                                                         {h_max}));
      },
      py::arg("values"), py::arg("h_max") = 2000.0);

  m.def(
      "quantize_two_color",
      [](const U8& t) {
        const auto r = raster::quantize_two_color(to_texture(t));
        return py::make_tuple(from_texture(r.image), r.colors);
      },
      py::arg("texture"));

  m.def(
      "pearson_corr_pair",
      [](const F32& h, const U8& t) { return metrics::pearson_corr_pair(to_heightmap(h, 25.0), to_texture(t)); },
      py::arg("heightmap"), py::arg("texture"), "Mean Pearson correlation of elevation with each RGB channel.");

  m.def(
      "corr_stats", [](const std::vector<double>& r) { return to_py(metrics::to_json(metrics::corr_stats(r))); },
      py::arg("correlations"));

  m.def(
      "frechet_distance", [](const F64& a, const F64& b) { return metrics::frechet_distance(rows(a), rows(b)); },
      py::arg("a"), py::arg("b"), "Frechet distance between Gaussian fits of two (n, d) feature sets.");

  m.def(
      "schedule_alpha_bar",
      [](int T, double beta_start, double beta_end) { return diffusion::make_schedule(T, beta_start, beta_end).alpha_bar; },
      py::arg("T") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02);

  m.def(
      "checkpoint_info",
      [](const std::filesystem::path& path) {
        const auto ck = ckpt::load(path);
        py::dict d;
        d["kind"] = ck.kind;
        d["config"] = to_py(ck.config);
        d["metadata"] = to_py(ck.metadata);
        d["parameters"] = ck.params.element_count();
        d["params_hash"] = ckpt::params_hash(ck.params);
        d["file_hash"] = ckpt::file_hash(path);
        return d;
      },
      py::arg("path"));

  m.def(
      "run_command",
      [](const std::string& command, const py::object& config) {
        const auto c = pipeline::pipeline_config_from_json(config.is_none() ? nlohmann::json::object() : from_py(config));
        py::gil_scoped_release release;
        if (command == "dataset-build") pipeline::dataset_build(c);
        else if (command == "sketch-extract") pipeline::sketch_extract(c);
        else if (command == "train-vae") pipeline::train_vaes(c);
        else if (command == "train-ldm") pipeline::train_joint(c);
        else if (command == "train-control") pipeline::train_adapter(c);
        else if (command == "sample") pipeline::sample(c);
        else if (command == "evaluate") pipeline::evaluate(c);
        else throw InvalidArgument("unknown command \"" + command + "\"");
      },
      py::arg("command"), py::arg("config") = py::none(),
      "Runs a pipeline command with a config dict shaped like the CLI's JSON config.");

  py::class_<PyGenerator>(m, "Generator")
      .def(py::init<const std::filesystem::path&>(), py::arg("models_dir"))
      .def("generate", &PyGenerator::generate, py::arg("count"), py::arg("seed"), py::arg("steps") = 20,
           py::arg("sampler") = "ddim", py::arg("condition") = py::none(), py::arg("first_index") = 0)
      .def_property_readonly("resolution", &PyGenerator::resolution)
      .def_property_readonly("checkpoint_hash", &PyGenerator::checkpoint_hash)
      .def_property_readonly("conditional", &PyGenerator::conditional);
}
