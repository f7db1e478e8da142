#include "gdwct/data_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>
#include <thread>

namespace gdwct {

namespace fs = std::filesystem;

namespace {

Tensor from_rgb8(const std::vector<std::uint8_t>& rgb, std::size_t h, std::size_t w) {
  std::vector<double> out(3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out[(c * h + y) * w + x] = 2.0 * rgb[(y * w + x) * 3 + c] / 255.0 - 1.0;
  return Tensor({3, h, w}, std::move(out));
}

Tensor crop_center(const Tensor& image) {
  const std::size_t h = image.dim(1), w = image.dim(2), side = std::min(h, w);
  const std::size_t y0 = (h - side) / 2, x0 = (w - side) / 2;
  std::vector<double> out(3 * side * side);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x)
        out[(c * side + y) * side + x] = image.data()[(c * h + y + y0) * w + x + x0];
  return Tensor({3, side, side}, std::move(out));
}

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("missing dataset directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .png files in " + dir.string());
  return files;
}

std::vector<ImageSample> load_all(const std::vector<fs::path>& files, std::size_t size,
                                  bool center_crop) {
  std::vector<ImageSample> out(files.size());
  std::vector<std::exception_ptr> errors(files.size());
  const std::size_t n_threads = std::min(worker_threads(), files.size());
  auto work = [&](std::size_t worker) {
    for (std::size_t i = worker; i < files.size(); i += n_threads) {
      try {
        out[i] = load_image(files[i], size, center_crop);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(work, t);
  work(0);
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

Tensor ellipse_image(std::mt19937_64& rng, std::size_t size) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.12);
  const double s = static_cast<double>(size);
  const double cx = s * (0.3 + 0.4 * u(rng)), cy = s * (0.3 + 0.4 * u(rng));
  const double rx = s * (0.15 + 0.15 * u(rng)), ry = s * (0.15 + 0.15 * u(rng));
  const double theta = std::numbers::pi * u(rng);
  const double tint[3] = {0.6 + 0.35 * u(rng), 0.6 + 0.35 * u(rng), 0.6 + 0.35 * u(rng)};
  std::vector<double> out(3 * size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double px = dx * std::cos(theta) + dy * std::sin(theta);
      const double py = -dx * std::sin(theta) + dy * std::cos(theta);
      const bool inside = (px * px) / (rx * rx) + (py * py) / (ry * ry) <= 1.0;
      for (std::size_t c = 0; c < 3; ++c)
        out[(c * size + y) * size + x] = clamp_unit((inside ? tint[c] : -0.75) + noise(rng));
    }
  }
  return Tensor({3, size, size}, std::move(out));
}

Tensor stripe_image(std::mt19937_64& rng, std::size_t size) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.12);
  const double period = 4.0 + 4.0 * u(rng);
  const double phase = period * u(rng);
  const double direction = u(rng) < 0.5 ? 1.0 : -1.0;  // which diagonal
  const double width = 0.35 + 0.2 * u(rng);
  const double tint[3] = {-0.5 - 0.35 * u(rng), -0.5 - 0.35 * u(rng), -0.5 - 0.35 * u(rng)};
  std::vector<double> out(3 * size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double t = std::fmod(x + direction * y + phase + 4.0 * size, period) / period;
      const bool dark = t < width;
      for (std::size_t c = 0; c < 3; ++c)
        out[(c * size + y) * size + x] = clamp_unit((dark ? tint[c] : 0.7) + noise(rng));
    }
  }
  return Tensor({3, size, size}, std::move(out));
}

}  // namespace

const std::vector<ImageSample>& DatasetPair::samples(Domain d) const {
  return d == Domain::A ? domain_a : domain_b;
}

std::vector<std::size_t> DatasetPair::epoch_order(Domain d, std::size_t epoch) const {
  std::vector<std::size_t> order(samples(d).size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(shuffle_seed), static_cast<std::uint32_t>(shuffle_seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                    static_cast<std::uint32_t>(d)};
  std::mt19937_64 rng(seq);
  // Fisher-Yates with our own index draws so the order does not depend on
  // the standard library's shuffle.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

Tensor DatasetPair::batch(Domain d, std::size_t iteration, std::size_t batch_size) const {
  const auto& pool = samples(d);
  if (pool.empty()) throw ArgumentError("dataset domain is empty");
  if (batch_size == 0) throw ArgumentError("batch_size must be positive");
  std::vector<Tensor> items;
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < batch_size; ++j) {
    const std::size_t k = iteration * batch_size + j;
    const std::size_t epoch = k / pool.size();
    if (epoch != cached_epoch) {
      order = epoch_order(d, epoch);
      cached_epoch = epoch;
    }
    items.push_back(pool[order[k % pool.size()]].pixels);
  }
  return stack(items);
}

ImageSample load_image(const fs::path& path, std::size_t size, bool center_crop) {
  if (size == 0) throw ArgumentError("target size must be positive");
  if (!fs::is_regular_file(path)) throw IoError("cannot open image " + path.string());

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": not a readable PNG (" + msg + ")");
  }
  if (image.format != PNG_FORMAT_RGB) {
    png_image_free(&image);
    throw FormatError(path.string() + ": expected 8-bit RGB without alpha");
  }
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": " + msg);
  }
  Tensor t = from_rgb8(rgb, image.height, image.width);
  if (center_crop) t = crop_center(t);
  if (t.dim(1) != size || t.dim(2) != size) t = resize_bilinear(t, size, size);
  return ImageSample{t, path};
}

std::vector<std::uint8_t> quantize(const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw ShapeError("expected an image [3, H, W], got " + shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> rgb(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double v = image.data()[(c * h + y) * w + x];
        v = std::isnan(v) ? 0.0 : clamp_unit(v);
        rgb[(y * w + x) * 3 + c] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
      }
    }
  }
  return rgb;
}

void save_image(const Tensor& image, const fs::path& path) {
  const std::vector<std::uint8_t> rgb = quantize(image);
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(image.dim(2));
  out.height = static_cast<png_uint_32>(image.dim(1));
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
    const std::string msg = out.message;
    png_image_free(&out);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.ndim() != 3) throw ShapeError("resize_bilinear expects [C, H, W]");
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<double> out(ch * out_h * out_w);
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      for (std::size_t c = 0; c < ch; ++c) {
        const double* p = image.data().data() + c * h * w;
        const double top = p[y0 * w + x0] * (1 - tx) + p[y0 * w + x1] * tx;
        const double bottom = p[y1 * w + x0] * (1 - tx) + p[y1 * w + x1] * tx;
        out[(c * out_h + y) * out_w + x] = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return Tensor({ch, out_h, out_w}, std::move(out));
}

Tensor image_grid(const std::vector<Tensor>& images, std::size_t cols) {
  if (images.empty() || cols == 0) throw ArgumentError("image_grid needs images and cols > 0");
  const Shape tile = images[0].shape();
  if (tile.size() != 3 || tile[0] != 3) throw ShapeError("image_grid expects [3, H, W] tiles");
  for (const auto& im : images)
    if (im.shape() != tile) throw ShapeError("image_grid tiles must share a shape");
  const std::size_t h = tile[1], w = tile[2];
  const std::size_t rows = (images.size() + cols - 1) / cols;
  const std::size_t gh = rows * h, gw = cols * w;
  std::vector<double> out(3 * gh * gw, -1.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::size_t oy = (i / cols) * h, ox = (i % cols) * w;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          out[(c * gh + oy + y) * gw + ox + x] = images[i].data()[(c * h + y) * w + x];
  }
  return Tensor({3, gh, gw}, std::move(out));
}

DatasetPair synth_dataset(std::uint64_t seed, std::size_t n_per_domain, std::size_t size) {
  if (n_per_domain == 0) throw ArgumentError("synth_dataset needs n_per_domain >= 1");
  if (size == 0) throw ArgumentError("synth_dataset needs a positive size");
  DatasetPair data;
  data.shuffle_seed = seed;
  std::mt19937_64 rng_a(seed * 2 + 1), rng_b(seed * 2 + 2);
  for (std::size_t i = 0; i < n_per_domain; ++i) {
    data.domain_a.push_back({ellipse_image(rng_a, size), std::nullopt});
    data.domain_b.push_back({stripe_image(rng_b, size), std::nullopt});
  }
  return data;
}

DatasetPair load_dataset(const fs::path& root, std::size_t size, bool center_crop,
                         std::uint64_t shuffle_seed) {
  if (!fs::is_directory(root)) throw IoError("missing dataset root " + root.string());
  DatasetPair data;
  data.shuffle_seed = shuffle_seed;
  data.domain_a = load_all(png_files(root / "domainA"), size, center_crop);
  data.domain_b = load_all(png_files(root / "domainB"), size, center_crop);
  return data;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("GDWCT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace gdwct
