#pragma once

// Training configuration and its plain-text form: UTF-8 `key = value` lines,
// `#` starts a comment, unknown keys are rejected, missing keys keep their
// defaults. The same text is embedded in checkpoints.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "gdwct/losses.hpp"
#include "gdwct/networks.hpp"

namespace gdwct {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 2;
  std::size_t total_iters = 2000;
  std::size_t decay_start_iter = 1000;
  std::size_t decay_every = 500;
  double decay_rate = 0.5;
  std::uint64_t seed = 0;
  LossWeights weights;
  NetworkConfig net;

  // Data and output cadence.
  std::size_t synth_per_domain = 64;
  bool center_crop = false;
  std::size_t checkpoint_every = 500;
  std::size_t sample_every = 500;

  // Throws ConfigError (line 0) on violated invariants.
  void validate() const;
};

TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);
// Round-trips through parse_config exactly (shortest round-trip form).
std::string format_config(const TrainConfig& config);

}  // namespace gdwct
