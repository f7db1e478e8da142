// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// The CLI binary path comes in as GDWCT_CLI_PATH; scratch files go under the
// system temp directory.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gdwct/benchmark.hpp"
#include "gdwct/checkpoint.hpp"
#include "gdwct/data_io.hpp"
#include "gdwct/gdwct.hpp"
#include "gdwct/linalg.hpp"
#include "gdwct/trainer.hpp"

namespace fs = std::filesystem;
using namespace gdwct;
using linalg::Matrix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (double& v : m.values()) v = normal(rng);
  return m;
}

double identity_distance(const Matrix& cov) {
  return linalg::frobenius_norm(cov - Matrix::identity(cov.rows()));
}

Outcome oracle_whitening() {
  std::mt19937_64 rng(101);
  std::vector<Matrix> inputs;
  for (int i = 0; i < 100; ++i) {
    // Correlated channels with uneven scales.
    inputs.push_back(random_matrix(8, 8, rng) * random_matrix(8, 512, rng));
  }
  double worst = 0.0;
  const auto start = Clock::now();
  std::vector<Matrix> white;
  for (const Matrix& f : inputs) white.push_back(linalg::whiten_classical(f));
  const double elapsed = seconds_since(start);
  for (const Matrix& w : white) worst = std::max(worst, identity_distance(linalg::covariance(w)));
  return {worst < 1e-6 && elapsed < 1.0, fmt("max |cov - I|_F = %.3g, %.3f s", worst, elapsed)};
}

Outcome oracle_coloring() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Matrix content = random_matrix(8, 8, rng) * random_matrix(8, 512, rng);
    const Matrix style = random_matrix(8, 8, rng) * random_matrix(8, 512, rng);
    const Matrix colored = linalg::color_classical(linalg::whiten_classical(content), style);
    worst = std::max(worst, linalg::frobenius_norm(linalg::covariance(colored) - linalg::covariance(style)));
  }
  return {worst < 1e-5, fmt("max |cov(colored) - cov(style)|_F = %.3g", worst)};
}

// Rows 1..d of the 8x8 Sylvester-Hadamard matrix plus a zero sample. Rows are
// zero-mean, orthogonal, squared norm 8 = N - 1: covariance exactly I.
Tensor exactly_white(std::size_t groups, std::size_t d) {
  std::vector<double> v;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t r = 1; r <= d; ++r) {
      for (std::size_t c = 0; c < 8; ++c) v.push_back(__builtin_popcountll(r & c) % 2 ? -1.0 : 1.0);
      v.push_back(0.0);
    }
  }
  return Tensor({groups * d, 9}, std::move(v));
}

// Signed permutation matrices: orthogonal with exact arithmetic.
Tensor signed_permutations(std::size_t count, std::size_t d, std::mt19937_64& rng) {
  std::vector<double> v(count * d * d, 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<std::size_t> perm(d);
    for (std::size_t i = 0; i < d; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < d; ++i) v[k * d * d + i * d + perm[i]] = rng() % 2 ? 1.0 : -1.0;
  }
  return Tensor({count, d, d}, std::move(v));
}

Outcome regularizer_optima() {
  std::mt19937_64 rng(103);
  NoGradGuard guard;
  double rw_opt = 0.0, rc_opt = 0.0;
  for (std::size_t groups : {1u, 2u, 4u}) {
    rw_opt = std::max(rw_opt, whitening_regularizer(exactly_white(groups, 7), GroupSpec::make(7 * groups, groups)).item());
  }
  for (std::size_t d : {1u, 2u, 4u, 8u}) rc_opt = std::max(rc_opt, coloring_regularizer(signed_permutations(6, d, rng)).item());

  double rw_min = INFINITY, rc_min = INFINITY;
  for (int i = 0; i < 100; ++i) {
    rw_min = std::min(rw_min, whitening_regularizer(Tensor::uniform({8, 64}, -1, 1, rng), GroupSpec::make(8, 2)).item());
    rc_min = std::min(rc_min, coloring_regularizer(Tensor::uniform({4, 4, 4}, -1, 1, rng)).item());
  }
  return {rw_opt == 0.0 && rc_opt == 0.0 && rw_min > 0.0 && rc_min > 0.0,
          fmt("R_w at optimum %g, R_c at optimum %g, random minima %.3g / %.3g", rw_opt, rc_opt, rw_min, rc_min)};
}

Outcome block_diagonal_equivalence() {
  std::mt19937_64 rng(104);
  NoGradGuard guard;
  const std::size_t group_counts[] = {1, 2, 4, 8, 16, 32, 64};
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t g = group_counts[rng() % 7];
    const std::size_t c = g * (1 + rng() % (64 / g));
    const StyleSummary s = build_coloring(Tensor::uniform({g, c / g, c / g}, -1, 1, rng));
    const Tensor cw = deep_whiten(Tensor::uniform({c, 33}, -1, 1, rng));
    const Tensor full = matmul(s.x, cw);
    const Tensor grouped = apply_groupwise(s.per_group_ct, cw);
    for (std::size_t i = 0; i < full.numel(); ++i)
      worst = std::max(worst, std::fabs(full.data()[i] - grouped.data()[i]));
  }
  return {worst <= 1e-12, fmt("max |X c_w - groupwise| = %.3g over 50 configs", worst)};
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  bool ok = true;
  std::string detail;
  for (const char* scope : {"gdwct", "losses", "networks-small"}) {
    const GradCheckReport report = gradient_check(scope, 3, 1e-4, 105);
    ok = ok && report.passed();
    detail += fmt("%s worst %.2g (%s); ", scope, report.worst().max_rel_error, report.worst().name.c_str());
  }
  const double elapsed = seconds_since(start);
  return {ok && elapsed < 60.0, detail + fmt("%.1f s", elapsed)};
}

Outcome parameter_count() {
  struct Case {
    std::size_t c, g;
  };
  const Case cases[] = {{256, 16}, {16, 4}, {64, 8}, {32, 32}, {12, 3}, {8, 1}};
  bool ok = style_representation_size(256, 16) == 4096;
  std::mt19937_64 rng(106);
  std::string detail = fmt("C=256 G=16 -> %zu", style_representation_size(256, 16));
  for (const Case& k : cases) {
    NetworkConfig config;
    config.base_channels = k.c;
    config.groups = k.g;
    config.n_hops = 2;
    config.n_res_blocks = 2;
    config.mlp_hidden = 8;
    config.mlp_depth = 2;
    config.image_size = 16;
    const DomainModel m = DomainModel::make(config, rng);
    NoGradGuard guard;
    const Tensor s = Tensor::uniform({1, k.c}, -1, 1, rng);
    for (std::size_t hop = 0; hop < config.n_hops; ++hop) {
      const std::size_t produced = m.style_heads(s, hop).s_ct.numel();
      ok = ok && produced == k.c * k.c / k.g && produced == style_representation_size(k.c, k.g);
    }
  }
  return {ok, detail + fmt(", heads match C^2/G on %zu configs", std::size(cases))};
}

struct DescentRun {
  double rw0, rw, rc0, rc, style0, style, cycle0, cycle, seconds;
};

// Initial = the untrained model at iteration 0. Final = mean over the last
// 50 iterations, which smooths minibatch noise.
DescentRun descent_run(std::uint64_t seed) {
  TrainConfig config;
  config.seed = seed;
  Trainer trainer(config, synth_dataset(seed, config.synth_per_domain, config.net.image_size));
  DescentRun run{};
  const std::size_t tail = 50;
  const auto start = Clock::now();
  for (std::size_t it = 0; it < config.total_iters; ++it) {
    const LossReport r = trainer.step();
    if (it == 0) {
      run.rw0 = r.r_w;
      run.rc0 = r.r_c;
      run.style0 = r.style;
      run.cycle0 = r.cycle;
    }
    if (it + tail >= config.total_iters) {
      run.rw += r.r_w / tail;
      run.rc += r.r_c / tail;
      run.style += r.style / tail;
      run.cycle += r.cycle / tail;
    }
  }
  run.seconds = seconds_since(start);
  return run;
}

double median3(double a, double b, double c) { return std::max(std::min(a, b), std::min(std::max(a, b), c)); }

Outcome training_descent() {
  std::vector<DescentRun> runs;
  for (std::uint64_t seed : {0, 1, 2}) runs.push_back(descent_run(seed));
  auto med = [&](double DescentRun::*field) {
    return median3(runs[0].*field, runs[1].*field, runs[2].*field);
  };
  // Ratios are formed per seed, then the median is taken.
  std::vector<double> rw, rc, style, cycle;
  double slowest = 0.0;
  for (const auto& r : runs) {
    rw.push_back(r.rw / r.rw0);
    rc.push_back(r.rc / r.rc0);
    style.push_back(r.style / r.style0);
    cycle.push_back(r.cycle / r.cycle0);
    slowest = std::max(slowest, r.seconds);
  }
  const double rw_ratio = median3(rw[0], rw[1], rw[2]);
  const double rc_ratio = median3(rc[0], rc[1], rc[2]);
  const double style_ratio = median3(style[0], style[1], style[2]);
  const double cycle_ratio = median3(cycle[0], cycle[1], cycle[2]);
  const bool ok = rw_ratio < 0.5 && rc_ratio < 0.5 && style_ratio < 1.0 && cycle_ratio < 1.0 && slowest < 1800.0;
  return {ok, fmt("median final/initial: R_w %.3f (%.1f -> %.1f), R_c %.3f, style %.3f, cycle %.3f; "
                  "slowest run %.0f s",
                  rw_ratio, med(&DescentRun::rw0), med(&DescentRun::rw), rc_ratio, style_ratio, cycle_ratio,
                  slowest)};
}

Outcome benchmark_ordering() {
  const BenchmarkRow row = benchmark_transform(256, 16, 100, 1024, 108);
  return {row.gdwct_seconds < row.classical_seconds,
          fmt("C=256 G=16, 100 trials: classical %.4f s, gdwct %.4f s", row.classical_seconds, row.gdwct_seconds)};
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig config;
  config.seed = seed;
  config.total_iters = 40;
  config.synth_per_domain = 16;
  return config;
}

std::string metrics_text(std::uint64_t seed, std::size_t iters) {
  const TrainConfig config = small_config(seed);
  Trainer trainer(config, synth_dataset(seed, config.synth_per_domain, config.net.image_size));
  std::string out;
  for (std::size_t it = 0; it < iters; ++it) {
    const double lr = lr_at(it, config);
    out += trainer.metrics_line(it, lr, trainer.step()) + "\n";
  }
  return out;
}

bool same_parameters(const Trainer& a, const Trainer& b) {
  const ParameterList pa = a.model().all_parameters(), pb = b.model().all_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto x = pa[i].second.data(), y = pb[i].second.data();
    if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

Outcome determinism(const fs::path& scratch) {
  const std::string first = metrics_text(7, 30), second = metrics_text(7, 30);
  const bool metrics_same = first == second && !first.empty();

  const TrainConfig config = small_config(8);
  const DatasetPair data = synth_dataset(8, config.synth_per_domain, config.net.image_size);
  Trainer original(config, data);
  for (int i = 0; i < 10; ++i) original.step();
  const fs::path ckpt = scratch / "resume.gdwct";
  original.save(ckpt);
  Trainer resumed(config, data);
  resumed.restore(read_checkpoint(ckpt));
  const std::string next_a = original.metrics_line(10, lr_at(10, config), original.step());
  const std::string next_b = resumed.metrics_line(10, lr_at(10, config), resumed.step());
  const bool resume_same = next_a == next_b && same_parameters(original, resumed);
  return {metrics_same && resume_same,
          fmt("metrics %s (%zu bytes), resumed next step %s", metrics_same ? "identical" : "differ", first.size(),
              resume_same ? "identical" : "differs")};
}

int run(const std::string& command) {
  const int status = std::system((command + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome whitening_path(const fs::path& scratch) {
  const std::string cli = GDWCT_CLI_PATH;
  const fs::path run_dir = scratch / "toy";
  const fs::path config = scratch / "toy.cfg";
  std::ofstream(config) << "total_iters = 200\nsynth_per_domain = 16\ncheckpoint_every = 0\nsample_every = 0\n";
  if (run(cli + " train --synthetic --seed 3 --config " + config.string() + " --out " + run_dir.string()) != 0)
    return {false, "training the toy checkpoint failed"};
  if (run(cli + " synth-data --out " + (scratch / "images").string() + " --seed 3 --n 1") != 0)
    return {false, "synth-data failed"};

  const fs::path content = scratch / "images" / "domainA" / "0000.png";
  const fs::path ckpt = run_dir / "checkpoint.gdwct";
  const fs::path whitened = scratch / "whitened.png", recon = scratch / "recon.png";
  if (run(cli + " whiten --checkpoint " + ckpt.string() + " --content " + content.string() + " --direction a2a --out " +
          whitened.string()) != 0)
    return {false, "whiten command failed"};
  if (run(cli + " translate --checkpoint " + ckpt.string() + " --content " + content.string() + " --style " +
          content.string() + " --direction a2a --out " + recon.string()) != 0)
    return {false, "reconstruction command failed"};

  const Tensor a = load_image(whitened, 32, false).pixels, b = load_image(recon, 32, false).pixels;
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::fabs(a.data()[i] - b.data()[i]) * 127.5;
  diff /= static_cast<double>(a.numel());
  return {diff > 0.0, fmt("mean |whitened - reconstruction| = %.2f levels of 255", diff)};
}

}  // namespace

int main() {
  const fs::path scratch = fs::temp_directory_path() / ("gdwct_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(scratch);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle whitening", oracle_whitening},
      {"oracle coloring", oracle_coloring},
      {"regularizer optima", regularizer_optima},
      {"block-diagonal equivalence", block_diagonal_equivalence},
      {"gradient suite", gradient_suite},
      {"parameter count C^2/G", parameter_count},
      {"training descent", training_descent},
      {"benchmark ordering", benchmark_ordering},
      {"determinism", [&] { return determinism(scratch); }},
      {"whitening visualization", [&] { return whitening_path(scratch); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, check] = criteria[i];
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += outcome.pass ? 0 : 1;
    std::printf("%s %2zu %s: %s\n", outcome.pass ? "PASS" : "FAIL", i + 1, name.c_str(), outcome.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(scratch);
  return failures == 0 ? 0 : 1;
}
