#pragma once

// Test-only numerical oracles. Nothing here goes through the autodiff tape:
// gradients are central differences of plain forward evaluations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gdwct/tensor.hpp"

namespace gdwct::testing {

inline constexpr double kFdStep = 1e-6;
// Gradients smaller than this are compared absolutely.
inline constexpr double kRelFloor = 1e-3;

inline double rel_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max({std::fabs(analytic), std::fabs(numeric), kRelFloor});
}

// d f / d x[i] for every entry of `x`, by central differences of `f`.
inline std::vector<double> central_difference(Tensor& x, const std::function<double()>& f,
                                              double h = kFdStep) {
  NoGradGuard guard;
  auto data = x.mutable_data();
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double up = f();
    data[i] = saved - h;
    const double down = f();
    data[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

// Builds sum(op(inputs) * weights) with fixed random weights, runs backward and
// returns the worst relative error against central differences over all inputs.
inline double max_grad_error(std::vector<Tensor>& inputs,
                             const std::function<Tensor(const std::vector<Tensor>&)>& op,
                             std::mt19937_64& rng) {
  Tensor probe = op(inputs);
  const Tensor weights = Tensor::uniform(probe.shape(), -1.0, 1.0, rng);
  auto scalar = [&] { return sum_all(op(inputs) * weights); };

  for (auto& t : inputs) t.zero_grad();
  backward(scalar());

  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    const auto numeric = central_difference(t, [&] { return scalar().item(); });
    for (std::size_t i = 0; i < numeric.size(); ++i)
      worst = std::max(worst, rel_err(analytic[i], numeric[i]));
  }
  return worst;
}

inline std::vector<double> copy_grad(const Tensor& t) {
  return {t.grad().begin(), t.grad().end()};
}

}  // namespace gdwct::testing
