#pragma once

// PNG images as [3, S, S] tensors in [-1, 1], two-domain datasets and the
// procedural desk dataset.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "gdwct/tensor.hpp"

namespace gdwct {

struct ImageSample {
  Tensor pixels;  // [3, S, S], values in [-1, 1]
  std::optional<std::filesystem::path> source_path;
};

enum class Domain { A = 0, B = 1 };

struct DatasetPair {
  std::vector<ImageSample> domain_a;
  std::vector<ImageSample> domain_b;
  std::uint64_t shuffle_seed = 0;

  const std::vector<ImageSample>& samples(Domain d) const;
  // Visiting order of one epoch; a pure function of (shuffle_seed, epoch, domain).
  std::vector<std::size_t> epoch_order(Domain d, std::size_t epoch) const;
  // Batch `iteration` of a stream that walks consecutive epochs: [B, 3, S, S].
  Tensor batch(Domain d, std::size_t iteration, std::size_t batch_size) const;
};

// 8-bit RGB PNG only. Missing/unreadable file -> IoError, anything else -> FormatError.
// Optionally crops the central square, then resizes bilinearly to size x size.
ImageSample load_image(const std::filesystem::path& path, std::size_t size,
                       bool center_crop = false);
// Clamps to [-1, 1] and quantizes to 8 bits. Accepts [3, H, W].
void save_image(const Tensor& image, const std::filesystem::path& path);

std::vector<std::uint8_t> quantize(const Tensor& image);
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);
// Tiles equally sized [3, H, W] images row-major into a single image.
Tensor image_grid(const std::vector<Tensor>& images, std::size_t cols);

// Domain A: bright ellipses on dark noise. Domain B: dark diagonal stripes on
// bright noise. Deterministic per seed.
DatasetPair synth_dataset(std::uint64_t seed, std::size_t n_per_domain, std::size_t size);

// Reads <root>/domainA/*.png and <root>/domainB/*.png (sorted by name).
// Decoding runs on worker_threads() threads; results keep file order.
DatasetPair load_dataset(const std::filesystem::path& root, std::size_t size, bool center_crop,
                         std::uint64_t shuffle_seed);

// GDWCT_THREADS if set to a positive integer, else the hardware concurrency.
std::size_t worker_threads();

}  // namespace gdwct
