// Copyright 2026 The FusionSort Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <string>
#include <vector>

#include "fusionsort/data_io.hpp"
#include "fusionsort/errors.hpp"
#include "fusionsort/attention.hpp"
#include "fusionsort/fusion.hpp"
#include "fusionsort/loss.hpp"
#include "fusionsort/metrics.hpp"
#include "fusionsort/network.hpp"
#include "fusionsort/suite.hpp"

namespace py = pybind11;
namespace fs = fusionsort;
namespace io = fusionsort::io;
namespace net = fusionsort::net;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

fs::Tensor to_tensor(const F64Array& a) {
  fs::Shape shape(a.shape(), a.shape() + a.ndim());
  return fs::Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> from_tensor(const fs::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

io::HyperCube to_cube(const F32Array& a) {
  if (a.ndim() != 3) throw fs::ShapeError("cube array must be [bands, height, width]");
  io::HyperCube cube(a.shape(0), a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), cube.data.begin());
  return cube;
}

py::array_t<float> from_cube(const io::HyperCube& cube) {
  py::array_t<float> out({cube.bands, cube.height, cube.width});
  std::copy(cube.data.begin(), cube.data.end(), out.mutable_data());
  return out;
}

io::LabelMask to_mask(const U8Array& a) {
  if (a.ndim() != 2) throw fs::ShapeError("mask array must be [height, width]");
  io::LabelMask mask(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), mask.labels.begin());
  return mask;
}

py::array_t<std::uint8_t> from_mask(const io::LabelMask& mask) {
  py::array_t<std::uint8_t> out({mask.height, mask.width});
  std::copy(mask.labels.begin(), mask.labels.end(), out.mutable_data());
  return out;
}

// RGB crosses the boundary as [3, H, W]; the library keeps a batch axis.
fs::Tensor to_rgb(const F64Array& a) {
  if (a.ndim() != 3 || a.shape(0) != 3) throw fs::ShapeError("rgb array must be [3, height, width]");
  return to_tensor(a).reshaped({1, 3, static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(2))});
}

py::array_t<double> drop_batch(const fs::Tensor& t) {
  return from_tensor(t.reshaped({t.dim(1), t.dim(2), t.dim(3)}));
}

py::dict report_dict(const fs::metrics::SegmentationReport& r) {
  py::list iou;
  for (const auto& v : r.iou) iou.append(v ? py::cast(*v) : py::none());
  py::dict d;
  d["iou"] = iou;
  d["miou"] = r.miou;
  d["pixel_accuracy"] = r.pixel_accuracy;
  d["pixels"] = r.pixels;
  return d;
}

double loss_value(const std::string& which, const F64Array& logits, const std::vector<U8Array>& masks, double alpha,
                  double beta) {
  std::vector<io::LabelMask> targets;
  for (const auto& m : masks) targets.push_back(to_mask(m));
  fs::Tape tape;
  const fs::Var z = tape.constant(to_tensor(logits));
  if (which == "dice") return fs::metrics::dice_loss(z, targets).value()[0];
  if (which == "ce") return fs::metrics::cross_entropy_loss(z, targets).value()[0];
  return fs::metrics::combined_loss(z, targets, fs::metrics::LossWeights(alpha, beta)).value()[0];
}

net::NetworkConfig make_config(std::size_t num_classes, const std::string& ablation, const std::string& modality,
                               std::size_t bands, std::uint64_t seed) {
  net::NetworkConfig c;
  c.modality = net::parse_modality(modality);
  c.in_channels = net::modality_channels(c.modality, bands);
  c.num_classes = num_classes;
  c.seed = seed;
  c = c.with_ablation(net::parse_ablation(ablation));
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hyperspectral + RGB fusion segmentation core";

  auto base = py::register_exception<fs::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<fs::ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<fs::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<fs::LabelError>(m, "LabelError", base.ptr());
  py::register_exception<fs::NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<fs::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<fs::IoError>(m, "IoError", base.ptr());

  // Raster IO.
  m.def("read_cube", [](const std::filesystem::path& p) { return from_cube(io::read_cube(p)); }, py::arg("path"));
  m.def("write_cube", [](const F32Array& a, const std::filesystem::path& p) { io::write_cube(to_cube(a), p); },
        py::arg("cube"), py::arg("path"));
  m.def("read_ppm", [](const std::filesystem::path& p) { return drop_batch(io::read_ppm(p)); }, py::arg("path"));
  m.def("write_ppm", [](const F64Array& a, const std::filesystem::path& p) { io::write_ppm(to_rgb(a), p); },
        py::arg("rgb"), py::arg("path"));
  m.def("read_pgm", [](const std::filesystem::path& p, std::size_t k) { return from_mask(io::read_pgm(p, k)); },
        py::arg("path"), py::arg("num_classes"));
  m.def("write_pgm", [](const U8Array& a, const std::filesystem::path& p) { io::write_pgm(to_mask(a), p); },
        py::arg("mask"), py::arg("path"));

  m.def(
      "synthetic_dataset",
      [](std::uint64_t seed, std::size_t count, std::size_t size, std::size_t bands, std::size_t num_classes) {
        io::SyntheticOptions o;
        o.seed = seed;
        o.count = count;
        o.height = o.width = size;
        o.bands = bands;
        o.num_classes = num_classes;
        py::list out;
        for (const auto& s : io::generate_synthetic_dataset(o)) {
          out.append(py::make_tuple(from_cube(s.cube), drop_batch(s.rgb), from_mask(s.mask)));
        }
        return out;
      },
      py::arg("seed") = 0, py::arg("count") = 1, py::arg("size") = 32, py::arg("bands") = 9,
      py::arg("num_classes") = 3, "List of (cube, rgb, mask) triples.");

  // Spectral fusion.
  m.def(
      "jacobi_eigen",
      [](const F64Array& a) {
        if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw fs::ShapeError("matrix must be square");
        const auto n = static_cast<std::size_t>(a.shape(0));
        const auto e = fs::fusion::jacobi_eigen(std::vector<double>(a.data(), a.data() + a.size()), n);
        return py::make_tuple(from_tensor(fs::Tensor({n}, e.values)), from_tensor(fs::Tensor({n, n}, e.vectors)));
      },
      py::arg("matrix"), "Eigenvalues (descending) and eigenvectors as columns.");
  m.def(
      "fit_pca",
      [](const F32Array& cube) {
        const auto model = fs::fusion::fit_pca(to_cube(cube));
        std::vector<double> comps;
        for (const auto& c : model.components) comps.insert(comps.end(), c.begin(), c.end());
        py::dict d;
        d["mean"] = from_tensor(fs::Tensor({model.bands()}, model.mean));
        d["components"] = from_tensor(fs::Tensor({fs::fusion::kHyperComponents, model.bands()}, comps));
        d["eigenvalues"] = from_tensor(fs::Tensor({model.bands()}, model.eigenvalues));
        d["variance_retained"] = model.variance_retained;
        return d;
      },
      py::arg("cube"));
  m.def(
      "project_hyper3",
      [](const F32Array& a) {
        const io::HyperCube cube = to_cube(a);
        return drop_batch(fs::fusion::project_hyper3(cube, fs::fusion::fit_pca(cube)));
      },
      py::arg("cube"), "Top-3 PCA scores, min-max normalized per channel, as [3, H, W].");
  m.def(
      "fuse",
      [](const F64Array& rgb, const F32Array& a) {
        const io::HyperCube cube = to_cube(a);
        return drop_batch(fs::fusion::fuse(to_rgb(rgb), fs::fusion::project_hyper3(cube, fs::fusion::fit_pca(cube))));
      },
      py::arg("rgb"), py::arg("cube"), "Six-channel fused image [6, H, W].");

  m.def(
      "ssm_scan",
      [](const F64Array& u, const F64Array& delta, const F64Array& a, const F64Array& b, const F64Array& c,
         const F64Array& d_skip) {
        return from_tensor(fs::attention::ssm_scan(
            {to_tensor(u), to_tensor(delta), to_tensor(a), to_tensor(b), to_tensor(c), to_tensor(d_skip)}));
      },
      py::arg("u"), py::arg("delta"), py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d_skip"));

  // Losses and metrics.
  m.def(
      "dice_loss",
      [](const F64Array& z, const std::vector<U8Array>& t) { return loss_value("dice", z, t, 1.0, 1.0); },
      py::arg("logits"), py::arg("targets"));
  m.def(
      "cross_entropy_loss",
      [](const F64Array& z, const std::vector<U8Array>& t) { return loss_value("ce", z, t, 1.0, 1.0); },
      py::arg("logits"), py::arg("targets"));
  m.def(
      "combined_loss",
      [](const F64Array& z, const std::vector<U8Array>& t, double alpha, double beta) {
        return loss_value("combined", z, t, alpha, beta);
      },
      py::arg("logits"), py::arg("targets"), py::arg("alpha") = 1.0, py::arg("beta") = 1.0);
  m.def(
      "evaluate",
      [](const U8Array& pred, const U8Array& gt, std::size_t k) {
        return report_dict(fs::metrics::evaluate(to_mask(pred), to_mask(gt), k));
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"));

  py::class_<net::Network>(m, "Network")
      .def(py::init([](std::size_t num_classes, const std::string& ablation, const std::string& modality,
                       std::size_t bands, std::uint64_t seed) {
             return net::Network(make_config(num_classes, ablation, modality, bands, seed));
           }),
           py::arg("num_classes") = 3, py::arg("ablation") = "all", py::arg("modality") = "fused",
           py::arg("bands") = 9, py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return net::load_network(p); }, py::arg("path"))
      .def("save", [](const net::Network& n, const std::filesystem::path& p) { net::save_checkpoint(n, p); },
           py::arg("path"))
      .def_property_readonly("parameter_count", &net::Network::parameter_count)
      .def_property_readonly("config", [](const net::Network& n) { return n.config().serialize(); })
      .def(
          "logits",
          [](const net::Network& n, const F32Array& cube, const F64Array& rgb) {
            const fs::Tensor x = net::make_input(n.config().modality, to_cube(cube), to_rgb(rgb));
            return drop_batch(n.predict_logits(x));
          },
          py::arg("cube"), py::arg("rgb"))
      .def(
          "predict",
          [](const net::Network& n, const F32Array& cube, const F64Array& rgb) {
            const fs::Tensor x = net::make_input(n.config().modality, to_cube(cube), to_rgb(rgb));
            return from_mask(fs::metrics::argmax_labels(n.predict_logits(x)));
          },
          py::arg("cube"), py::arg("rgb"))
      .def(
          "train",
          [](net::Network& n, const py::list& samples, std::size_t iterations, double learning_rate) {
            std::vector<net::TrainingExample> data;
            for (const auto& item : samples) {
              const auto t = item.cast<py::tuple>();
              data.push_back({net::make_input(n.config().modality, to_cube(t[0].cast<F32Array>()),
                                              to_rgb(t[1].cast<F64Array>())),
                              to_mask(t[2].cast<U8Array>())});
            }
            net::TrainConfig tc;
            tc.iterations = iterations;
            tc.learning_rate = learning_rate;
            net::TrainResult r;
            {
              py::gil_scoped_release release;
              r = net::train_toy(n, data, tc);
            }
            py::dict d = report_dict(r.train_report);
            d["loss_history"] = r.loss_history;
            return d;
          },
          py::arg("samples"), py::arg("iterations") = 300, py::arg("learning_rate") = 1e-3,
          "Per-image AdamW steps over (cube, rgb, mask) triples; returns the loss history and train metrics.");

  m.def(
      "gradcheck",
      [](const std::string& ablation, double eps, std::uint64_t seed) {
        net::NetworkConfig config;
        config = config.with_ablation(net::parse_ablation(ablation));
        std::vector<net::BlockCheck> checks;
        {
          py::gil_scoped_release release;
          checks = net::run_gradcheck_suite(config, eps, seed);
        }
        py::list out;
        for (const auto& c : checks) {
          py::dict d;
          d["block"] = c.block;
          d["max_rel_error"] = c.max_rel_error;
          d["tolerance"] = c.tolerance;
          d["coordinates"] = c.coordinates;
          d["worst_parameter"] = c.worst_parameter;
          d["passed"] = c.passed();
          out.append(d);
        }
        return out;
      },
      py::arg("ablation") = "all", py::arg("eps") = 1e-5, py::arg("seed") = 0);
}
