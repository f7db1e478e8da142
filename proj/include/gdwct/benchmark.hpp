#pragma once

#include <cstdint>
#include <vector>

namespace gdwct {

struct BenchmarkRow {
  std::size_t channels = 0;
  std::size_t groups = 0;
  double classical_seconds = 0.0;  // mean per trial
  double gdwct_seconds = 0.0;
  // Ordering is only asserted from 64 channels up.
  bool ordering_checked = false;
  bool ordering_holds = false;
};

// Times the transformation alone on random [C, pixels] features:
//   classical: whiten_classical + color_classical (two eigendecompositions)
//   gdwct:     build the grouped coloring from random CT blocks, then gdwct_forward
// Throws ArgumentError if trials < 10 or a channel count is not divisible by
// its group count.
BenchmarkRow benchmark_transform(std::size_t channels, std::size_t groups, std::size_t trials,
                                 std::size_t pixels, std::uint64_t seed);

}  // namespace gdwct
