// Python bindings. Arrays cross the boundary as float64 numpy copies.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gdwct/benchmark.hpp"
#include "gdwct/checkpoint.hpp"
#include "gdwct/data_io.hpp"
#include "gdwct/gdwct.hpp"
#include "gdwct/linalg.hpp"
#include "gdwct/trainer.hpp"

namespace py = pybind11;
using namespace gdwct;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

linalg::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  return linalg::Matrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const linalg::Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

Array stack(const std::vector<ImageSample>& samples) {
  std::vector<Tensor> images;
  for (const auto& s : samples) images.push_back(reshape(s.pixels, {1, s.pixels.dim(0), s.pixels.dim(1), s.pixels.dim(2)}));
  return to_array(concat(images));
}

Array translate(const std::string& checkpoint, const Array& content, const Array& style,
                const std::string& direction) {
  if (direction != "a2b" && direction != "b2a" && direction != "a2a" && direction != "b2b")
    throw ArgumentError("direction must be a2b, b2a, a2a or b2b");
  const TranslationModel m = load_model(read_checkpoint(checkpoint));
  const bool from_a = direction[0] == 'a';
  const bool to_a = direction[2] == 'a';
  const DomainModel& src = from_a ? m.a : m.b;
  const DomainModel& dst = to_a ? m.a : m.b;
  NoGradGuard guard;
  const Tensor c = src.content_encode(to_tensor(content));
  return to_array(dst.generate(c, dst.style_code(dst.style_encode(to_tensor(style)))));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Group-wise deep whitening-and-coloring core";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<DegenerateSampleError>(m, "DegenerateSampleError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_ArithmeticError);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("covariance", [](const Array& f) { return to_array(linalg::covariance(to_matrix(f))); }, py::arg("features"));
  m.def(
      "eig_symmetric",
      [](const Array& s) {
        const linalg::EigenPair e = linalg::eig_symmetric(to_matrix(s));
        return py::make_tuple(to_array(e.q), e.lambdas);
      },
      py::arg("matrix"), "Eigenvectors (columns) and descending eigenvalues of a symmetric matrix.");
  m.def("whiten_classical", [](const Array& c) { return to_array(linalg::whiten_classical(to_matrix(c))); },
        py::arg("content"));
  m.def(
      "color_classical",
      [](const Array& w, const Array& s) { return to_array(linalg::color_classical(to_matrix(w), to_matrix(s))); },
      py::arg("whitened"), py::arg("style"));

  m.def("style_representation_size", &style_representation_size, py::arg("channels"), py::arg("groups"));
  m.def(
      "whitening_regularizer",
      [](const Array& c, std::size_t groups) {
        const Tensor t = to_tensor(c);
        return whitening_regularizer(t, GroupSpec::make(t.dim(0), groups)).item();
      },
      py::arg("features"), py::arg("groups"));
  m.def("coloring_regularizer", [](const Array& u) { return coloring_regularizer(to_tensor(u)).item(); },
        py::arg("u"));
  m.def(
      "build_coloring",
      [](const Array& s_ct) {
        const StyleSummary s = build_coloring(to_tensor(s_ct));
        return py::make_tuple(to_array(s.per_group_ct), to_array(s.x));
      },
      py::arg("s_ct"), "Per-group coloring blocks and the assembled block-diagonal matrix.");
  m.def(
      "gdwct_forward",
      [](const Array& content, const Array& s_ct, const Array& s_mu, double alpha_raw) {
        StyleSummary style = build_coloring(to_tensor(s_ct));
        style.s_mu = to_tensor(s_mu);
        return to_array(gdwct_forward(to_tensor(content), style, AlphaBlend{Tensor::scalar(alpha_raw)}));
      },
      py::arg("content"), py::arg("s_ct"), py::arg("s_mu"), py::arg("alpha_raw") = 0.0);

  m.def(
      "synth_dataset",
      [](std::uint64_t seed, std::size_t n, std::size_t size) {
        const DatasetPair d = synth_dataset(seed, n, size);
        return py::make_tuple(stack(d.domain_a), stack(d.domain_b));
      },
      py::arg("seed") = 0, py::arg("n") = 8, py::arg("size") = 32);

  m.def(
      "gradient_check",
      [](const std::string& scope, std::size_t trials, double tolerance, std::uint64_t seed) {
        const GradCheckReport r = gradient_check(scope, trials, tolerance, seed);
        py::dict errors;
        for (const auto& e : r.entries) errors[py::str(e.name)] = e.max_rel_error;
        return py::make_tuple(r.passed(), errors);
      },
      py::arg("scope"), py::arg("trials") = 1, py::arg("tolerance") = 1e-4, py::arg("seed") = 0);

  m.def(
      "benchmark_transform",
      [](std::size_t channels, std::size_t groups, std::size_t trials, std::size_t pixels, std::uint64_t seed) {
        const BenchmarkRow r = benchmark_transform(channels, groups, trials, pixels, seed);
        return py::make_tuple(r.classical_seconds, r.gdwct_seconds);
      },
      py::arg("channels"), py::arg("groups"), py::arg("trials") = 10, py::arg("pixels") = 1024,
      py::arg("seed") = 0);

  m.def(
      "train",
      [](const std::string& config_text, std::size_t iters, const std::string& checkpoint) {
        TrainConfig config = parse_config(config_text);
        config.total_iters = iters;
        Trainer trainer(config, synth_dataset(config.seed, config.synth_per_domain, config.net.image_size));
        std::vector<std::string> lines;
        {
          py::gil_scoped_release release;
          for (std::size_t it = 0; it < iters; ++it) {
            const double lr = lr_at(it, config);
            lines.push_back(trainer.metrics_line(it, lr, trainer.step()));
          }
          if (!checkpoint.empty()) trainer.save(checkpoint);
        }
        return lines;
      },
      py::arg("config_text"), py::arg("iters"), py::arg("checkpoint") = "",
      "Trains on the synthetic dataset; returns one metrics JSON line per iteration.");

  m.def("translate", &translate, py::arg("checkpoint"), py::arg("content"), py::arg("style"),
        py::arg("direction") = "a2b", "Batches are [B, 3, H, W] in [-1, 1].");
}
