#include "gdwct/benchmark.hpp"

#include <chrono>
#include <random>

#include "gdwct/gdwct.hpp"
#include "gdwct/linalg.hpp"

namespace gdwct {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

linalg::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = u(rng);
  return linalg::Matrix(rows, cols, std::move(v));
}

}  // namespace

BenchmarkRow benchmark_transform(std::size_t channels, std::size_t groups, std::size_t trials,
                                 std::size_t pixels, std::uint64_t seed) {
  if (trials < 10) throw ArgumentError("benchmark needs at least 10 trials, got " + std::to_string(trials));
  if (pixels < 2) throw ArgumentError("benchmark needs at least 2 pixels");
  const GroupSpec spec = GroupSpec::make(channels, groups);
  const std::size_t d = spec.group_dim();
  std::mt19937_64 rng(seed);
  NoGradGuard guard;

  BenchmarkRow row{channels, groups};
  double classical = 0.0, grouped = 0.0;
  // Side length of a roughly square feature map with `pixels` entries.
  std::size_t side = 1;
  while ((side + 1) * (side + 1) <= pixels) ++side;
  for (std::size_t t = 0; t < trials; ++t) {
    const linalg::Matrix content = random_matrix(channels, pixels, rng);
    const linalg::Matrix style = random_matrix(channels, pixels, rng);
    auto start = Clock::now();
    const linalg::Matrix out = linalg::color_classical(linalg::whiten_classical(content), style);
    classical += seconds_since(start);

    const Tensor c = Tensor::uniform({channels, side, side}, -1.0, 1.0, rng);
    const Tensor s_ct = Tensor::uniform({groups, d, d}, -1.0, 1.0, rng);
    AlphaBlend blend;
    start = Clock::now();
    const Tensor y = gdwct_forward(c, build_coloring(s_ct), blend);
    grouped += seconds_since(start);
    (void)out;
    (void)y;
  }
  row.classical_seconds = classical / static_cast<double>(trials);
  row.gdwct_seconds = grouped / static_cast<double>(trials);
  row.ordering_checked = channels >= 64;
  row.ordering_holds = row.gdwct_seconds < row.classical_seconds;
  return row;
}

}  // namespace gdwct
