#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sert/adam.hpp"
#include "sert/degradation.hpp"
#include "sert/errors.hpp"
#include "sert/io.hpp"
#include "sert/metrics.hpp"
#include "sert/model.hpp"
#include "sert/ops.hpp"
#include "sert/rect_attention.hpp"
#include "sert/train.hpp"

namespace py = pybind11;
using namespace sert;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict breakdown_dict(const CountBreakdown& b) {
  py::dict items;
  py::list assumed;
  for (const auto& i : b.items) {
    items[py::str(i.name)] = i.count;
    if (i.assumed) assumed.append(i.name);
  }
  py::dict out;
  out["items"] = items;
  out["assumed"] = assumed;
  out["total"] = b.total();
  out["assumed_total"] = b.assumed_total();
  return out;
}

// Model plus its optimizer state, so Python can drive training step by step.
struct PyModel {
  SertModel model;
  AdamState adam;
};

}  // namespace

PYBIND11_MODULE(sert, m) {
  m.doc() = "Hyperspectral denoising with rectangle self-attention and spectral enhancement";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  py::class_<LayerSpec>(m, "LayerSpec")
      .def(py::init([](std::size_t h, std::size_t w, std::size_t blocks) { return LayerSpec{h, w, blocks}; }),
           py::arg("rect_h"), py::arg("rect_w"), py::arg("blocks"))
      .def_readwrite("rect_h", &LayerSpec::rect_h)
      .def_readwrite("rect_w", &LayerSpec::rect_w)
      .def_readwrite("blocks", &LayerSpec::blocks);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("toy", &ModelConfig::toy)
      .def_static("parse", &parse_config, py::arg("text"))
      .def("to_text", &format_config)
      .def("validate", &ModelConfig::validate)
      .def_readwrite("bands", &ModelConfig::bands)
      .def_readwrite("channels", &ModelConfig::channels)
      .def_readwrite("rank", &ModelConfig::rank)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("memory_entries", &ModelConfig::memory_entries)
      .def_readwrite("mlp_ratio", &ModelConfig::mlp_ratio)
      .def_readwrite("layers", &ModelConfig::layers)
      .def_readwrite("use_ra", &ModelConfig::use_ra)
      .def_readwrite("use_se", &ModelConfig::use_se)
      .def_readwrite("use_shuffle", &ModelConfig::use_shuffle)
      .def_readwrite("use_mu", &ModelConfig::use_mu)
      .def_readwrite("use_mlp", &ModelConfig::use_mlp)
      .def_readwrite("use_norm", &ModelConfig::use_norm)
      .def_readwrite("layer_conv", &ModelConfig::layer_conv)
      .def_readwrite("body_conv", &ModelConfig::body_conv)
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; });

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const ModelConfig& c, std::uint64_t seed) { return PyModel{init_weights(c, seed), {}}; }),
           py::arg("config"), py::arg("seed"))
      .def_static(
          "load",
          [](const std::string& path) {
            PyModel pm{SertModel(read_checkpoint_info(path).config), {}};
            load_checkpoint(path, pm.model, pm.adam);
            return pm;
          },
          py::arg("path"))
      .def(
          "save",
          [](const PyModel& pm, const std::string& path, std::uint64_t seed) {
            CheckpointInfo info;
            info.step = pm.adam.step;
            info.seed = seed;
            save_checkpoint(path, pm.model, pm.adam, info);
          },
          py::arg("path"), py::arg("seed"))
      .def_property_readonly("config", [](const PyModel& pm) { return pm.model.config(); })
      .def_property_readonly("step", [](const PyModel& pm) { return pm.adam.step; })
      .def("parameter_count", [](const PyModel& pm) { return pm.model.parameter_count(); })
      .def("checksum", [](const PyModel& pm) { return parameter_checksum(pm.model); })
      .def("parameter_names",
           [](const PyModel& pm) {
             std::vector<std::string> names;
             for (const auto& nt : pm.model.named_parameters()) names.push_back(nt.name);
             return names;
           })
      .def("forward", [](const PyModel& pm, const Array& y) { return to_array(pm.model.forward(to_tensor(y))); },
           py::arg("y"), "Denoise an [H, W, B] or [N, H, W, B] array.")
      .def(
          "train_step",
          [](PyModel& pm, const std::vector<Array>& data, double sigma, std::size_t batch, double lr,
             std::uint64_t seed) {
            std::vector<Tensor> set;
            for (const auto& a : data) set.push_back(to_tensor(a));
            TrainOptions o;
            o.batch = batch;
            o.noise.sigma = sigma;
            o.adam.lr = lr;
            o.seed = seed;
            return train_step(pm.model, pm.adam, set, o);
          },
          py::arg("data"), py::arg("sigma"), py::arg("batch") = 4, py::arg("lr") = 1e-4, py::arg("seed") = 0);

  m.def("param_count", [](const ModelConfig& c) { return breakdown_dict(param_count(c)); }, py::arg("config"));
  m.def("flops_estimate", [](const ModelConfig& c, std::size_t h, std::size_t w) {
    return breakdown_dict(flops_estimate(c, h, w));
  }, py::arg("config"), py::arg("height"), py::arg("width"), "Multiply-accumulate counts (1 MAC = 2 FLOPs).");

  m.def(
      "gradcheck",
      [](const ModelConfig& c, std::uint64_t seed, std::size_t h, std::size_t w, std::size_t samples) {
        SertModel model = init_weights(c, seed);
        randomize_tail(model, seed);
        py::dict out;
        for (const auto& e : gradcheck_model(model, h, w, seed, samples)) out[py::str(e.name)] = e.max_rel_error;
        return out;
      },
      py::arg("config"), py::arg("seed"), py::arg("height") = 8, py::arg("width") = 8, py::arg("samples") = 0);

  // noise
  m.def("gaussian_iid", [](const Array& x, double sigma, std::uint64_t seed) {
    return to_array(gaussian_iid(to_tensor(x), sigma, seed));
  }, py::arg("x"), py::arg("sigma"), py::arg("seed"));
  m.def("gaussian_noniid", [](const Array& x, double lo, double hi, std::uint64_t seed) {
    return to_array(gaussian_noniid(to_tensor(x), lo, hi, seed));
  }, py::arg("x"), py::arg("sigma_min"), py::arg("sigma_max"), py::arg("seed"));
  m.def("stripe", [](const Array& x, std::uint64_t seed) { return to_array(stripe(to_tensor(x), {}, seed)); },
        py::arg("x"), py::arg("seed"));
  m.def("deadline", [](const Array& x, std::uint64_t seed) { return to_array(deadline(to_tensor(x), {}, seed)); },
        py::arg("x"), py::arg("seed"));
  m.def("impulse", [](const Array& x, std::uint64_t seed) { return to_array(impulse(to_tensor(x), {}, seed)); },
        py::arg("x"), py::arg("seed"));
  m.def("mixture", [](const Array& x, std::uint64_t seed) { return to_array(mixture(to_tensor(x), {}, seed)); },
        py::arg("x"), py::arg("seed"));
  m.def("apply_recipe", [](const Array& x, const std::string& recipe, std::uint64_t seed) {
    return to_array(apply_noise(to_tensor(x), parse_recipe(recipe), seed));
  }, py::arg("x"), py::arg("recipe"), py::arg("seed"), "Apply a key = value noise recipe.");
  m.def("synth_texture", [](std::size_t h, std::size_t w, std::size_t b, std::uint64_t seed) {
    return to_array(synth_texture(h, w, b, seed));
  }, py::arg("height"), py::arg("width"), py::arg("bands"), py::arg("seed"));

  // metrics
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_tensor(a), to_tensor(b)); });
  m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_tensor(a), to_tensor(b)); });
  m.def("sam", [](const Array& a, const Array& b) { return sam(to_tensor(a), to_tensor(b)); });
  m.def("evaluate", [](const Array& estimate, const Array& reference) {
    const MetricReport r = evaluate(to_tensor(estimate), to_tensor(reference));
    py::dict d;
    d["psnr_db"] = r.psnr_db;
    d["ssim"] = r.ssim;
    d["sam_degrees"] = r.sam_degrees;
    d["band_psnr"] = r.band_psnr;
    return d;
  }, py::arg("estimate"), py::arg("reference"));

  // building blocks
  m.def("softmax", [](const Array& x, std::size_t axis) { return to_array(ops::softmax(to_tensor(x), axis)); });
  m.def("shuffle_spectral", [](const Array& z) { return to_array(shuffle_spectral(to_tensor(z))); });
  m.def("inverse_shuffle_spectral", [](const Array& z) { return to_array(inverse_shuffle_spectral(to_tensor(z))); });
  m.def("partition_rect", [](const Array& z, std::size_t rows, std::size_t cols) {
    return to_array(partition_rect(to_tensor(z), rows, cols));
  }, py::arg("z"), py::arg("rows"), py::arg("cols"));
  m.def("merge_rect", [](const Array& tiles, std::size_t rows, std::size_t cols, std::size_t n, std::size_t h,
                         std::size_t w) { return to_array(merge_rect(to_tensor(tiles), rows, cols, n, h, w)); },
        py::arg("tiles"), py::arg("rows"), py::arg("cols"), py::arg("batch"), py::arg("height"), py::arg("width"));

  // files
  m.def("save_hsi", [](const Array& x, const std::string& path, std::optional<std::uint64_t> seed) {
    HsiImage img;
    img.data = to_tensor(x);
    img.seed = seed;
    save_hsi(img, path);
  }, py::arg("x"), py::arg("path"), py::arg("seed") = py::none());
  m.def("load_hsi", [](const std::string& path) { return to_array(load_hsi(path).data); }, py::arg("path"));

  m.attr("__version__") = "0.1.0";
}
