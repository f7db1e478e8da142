#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gdwct/checkpoint.hpp"
#include "gdwct/config.hpp"
#include "gdwct/data_io.hpp"
#include "gdwct/losses.hpp"
#include "gdwct/networks.hpp"

namespace gdwct {

struct OptimizerState {
  std::vector<std::vector<double>> m;  // one per parameter
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

struct AdamHyper {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update using each parameter's current gradient.
// All gradients are checked first; a non-finite entry throws NonFiniteError
// naming the parameter and leaves parameters and state untouched.
// Parameters without a gradient are skipped.
void adam_step(const ParameterList& params, OptimizerState& state, double lr, const AdamHyper& hyper);

// lr * decay_rate^k, k = 0 before decay_start_iter, else
// 1 + (iter - decay_start_iter) / decay_every.
double lr_at(std::size_t iter, const TrainConfig& config);

class Trainer {
 public:
  Trainer(TrainConfig config, DatasetPair data);

  // One bidirectional step on the next batches: a discriminator update, then
  // a generator/encoder update against the updated discriminators.
  LossReport step();
  LossReport step(const Tensor& x_a, const Tensor& x_b);

  std::size_t iteration() const { return iteration_; }
  const TrainConfig& config() const { return config_; }
  const TranslationModel& model() const { return model_; }
  const DatasetPair& data() const { return data_; }

  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;
  // Restores parameters, optimizer state and the iteration counter. Throws
  // ConfigError if the checkpoint's configuration differs in anything but
  // total_iters.
  void restore(const Checkpoint& ckpt);

  // One ndjson object: iter, lr, every LossReport field, alpha_a, alpha_b.
  std::string metrics_line(std::size_t iter, double lr, const LossReport& report) const;

 private:
  TrainConfig config_;
  DatasetPair data_;
  TranslationModel model_;
  ParameterList gen_params_;
  ParameterList disc_params_;
  OptimizerState gen_state_;
  OptimizerState disc_state_;
  std::size_t iteration_ = 0;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::string scope;
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  const GradCheckEntry& worst() const;
  bool passed() const;
};

// Analytic vs central-difference gradients (h = 1e-6) on random small
// instances. Scopes: "gdwct", "losses", "networks-small". Unknown scope
// throws ArgumentError; numerical failures are reported, not thrown.
GradCheckReport gradient_check(const std::string& scope, std::size_t trials, double tolerance,
                               std::uint64_t seed);

}  // namespace gdwct
