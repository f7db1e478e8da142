// gdwct: train, translate, whiten, benchmark, gradcheck, synth-data.
//
// Exit codes: 0 success, 1 check failure, 2 usage/config/data error,
// 3 runtime abort (non-finite loss and other numerical failures).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gdwct/benchmark.hpp"
#include "gdwct/checkpoint.hpp"
#include "gdwct/data_io.hpp"
#include "gdwct/trainer.hpp"

namespace fs = std::filesystem;
using namespace gdwct;

namespace {

enum Exit : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kAbort = 3 };

struct TrainArgs {
  std::string config;
  std::string data;
  bool synthetic = false;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters;
  std::string checkpoint;  // resume from
};

struct TranslateArgs {
  std::string checkpoint, content, style, out, direction = "a2b";
};

struct BenchmarkArgs {
  std::vector<std::size_t> channels{64, 256};
  std::vector<std::size_t> groups{8, 16};
  std::size_t trials = 100;
  std::size_t pixels = 1024;
  std::uint64_t seed = 0;
};

struct GradcheckArgs {
  std::string scope = "all";
  std::size_t trials = 3;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
};

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n = 64;
  std::size_t size = 32;
};

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

// Direction a2b: content through E_A^c, style through E_B^s, rendered by G_B.
// a2a and b2b stay within one domain (reconstruction).
struct Route {
  const DomainModel* content;
  const DomainModel* target;
};

Route route(const TranslationModel& m, const std::string& direction) {
  if (direction == "a2b") return {&m.a, &m.b};
  if (direction == "b2a") return {&m.b, &m.a};
  if (direction == "a2a") return {&m.a, &m.a};
  if (direction == "b2b") return {&m.b, &m.b};
  throw ArgumentError("--direction must be a2b, b2a, a2a or b2b, got '" + direction + "'");
}

Tensor as_batch(const Tensor& image) {
  return reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
}

Tensor first_image(const Tensor& batch) { return select(batch, 0); }

// Rows: [blank | style 1 | style 2], then [content i | content i in style 1 | ... 2].
Tensor sample_grid(const TranslationModel& m, const DatasetPair& data, const std::string& direction) {
  NoGradGuard guard;
  const Route r = route(m, direction);
  const Domain src = direction == "a2b" ? Domain::A : Domain::B;
  const Domain dst = direction == "a2b" ? Domain::B : Domain::A;
  const auto& contents = data.samples(src);
  const auto& styles = data.samples(dst);
  const std::size_t n_content = std::min<std::size_t>(4, contents.size());
  const std::size_t n_style = std::min<std::size_t>(2, styles.size());

  std::vector<Tensor> tiles;
  const Tensor blank = Tensor::full(contents[0].pixels.shape(), -1.0);
  tiles.push_back(blank);
  for (std::size_t j = 0; j < n_style; ++j) tiles.push_back(styles[j].pixels);
  for (std::size_t i = 0; i < n_content; ++i) {
    tiles.push_back(contents[i].pixels);
    const Tensor c = r.content->content_encode(as_batch(contents[i].pixels));
    for (std::size_t j = 0; j < n_style; ++j) {
      const Tensor s = r.target->style_encode(as_batch(styles[j].pixels));
      tiles.push_back(first_image(r.target->generate(c, r.target->style_code(s))));
    }
  }
  return image_grid(tiles, n_style + 1);
}

int cmd_train(const TrainArgs& args) {
  TrainConfig config = args.config.empty() ? TrainConfig{} : load_config(args.config);
  if (args.seed) config.seed = *args.seed;
  if (args.iters) config.total_iters = *args.iters;
  config.validate();

  if (args.synthetic == !args.data.empty())
    throw ArgumentError("train needs exactly one of --data ROOT or --synthetic");
  DatasetPair data = args.synthetic
                         ? synth_dataset(config.seed, config.synth_per_domain, config.net.image_size)
                         : load_dataset(args.data, config.net.image_size, config.center_crop, config.seed);

  const fs::path out = args.out;
  fs::create_directories(out / "checkpoints");
  fs::create_directories(out / "samples");

  Trainer trainer(config, std::move(data));
  std::ios::openmode mode = std::ios::trunc;
  if (!args.checkpoint.empty()) {
    trainer.restore(read_checkpoint(args.checkpoint));
    mode = std::ios::app;
  }
  std::ofstream metrics(out / "metrics.ndjson", mode);
  if (!metrics) throw IoError("cannot write " + (out / "metrics.ndjson").string());

  auto save_all = [&](std::size_t iter) {
    trainer.save(out / "checkpoints" / ("iter_" + zero_pad(iter, 6) + ".gdwct"));
    trainer.save(out / "checkpoint.gdwct");
  };

  try {
    while (trainer.iteration() < config.total_iters) {
      const std::size_t iter = trainer.iteration();
      const double lr = lr_at(iter, config);
      const LossReport report = trainer.step();
      metrics << trainer.metrics_line(iter, lr, report) << '\n';
      const std::size_t done = iter + 1;
      if (config.checkpoint_every && done % config.checkpoint_every == 0) save_all(done);
      if (config.sample_every && done % config.sample_every == 0) {
        for (const char* dir : {"a2b", "b2a"}) {
          save_image(sample_grid(trainer.model(), trainer.data(), dir),
                     out / "samples" / ("iter_" + zero_pad(done, 6) + "_" + dir + ".png"));
        }
      }
    }
  } catch (const NonFiniteError& e) {
    metrics.flush();
    std::cerr << "gdwct train: aborted at iteration " << trainer.iteration() << ": " << e.what()
              << "\n(last valid checkpoint kept in " << (out / "checkpoint.gdwct").string() << ")\n";
    return kAbort;
  }
  metrics.flush();
  save_all(trainer.iteration());
  std::cout << "trained " << trainer.iteration() << " iterations, outputs in " << out.string() << "\n";
  return kOk;
}

int cmd_translate(const TranslateArgs& args) {
  const Checkpoint ckpt = read_checkpoint(args.checkpoint);
  const TranslationModel model = load_model(ckpt);
  const Route r = route(model, args.direction);
  const std::size_t size = ckpt.config.net.image_size;
  const Tensor content = load_image(args.content, size, ckpt.config.center_crop).pixels;
  const Tensor style = load_image(args.style, size, ckpt.config.center_crop).pixels;
  NoGradGuard guard;
  const Tensor c = r.content->content_encode(as_batch(content));
  const Tensor s = r.target->style_encode(as_batch(style));
  save_image(first_image(r.target->generate(c, r.target->style_code(s))), args.out);
  return kOk;
}

int cmd_whiten(const TranslateArgs& args) {
  const Checkpoint ckpt = read_checkpoint(args.checkpoint);
  const TranslationModel model = load_model(ckpt);
  const Route r = route(model, args.direction);
  const std::size_t size = ckpt.config.net.image_size;
  const Tensor content = load_image(args.content, size, ckpt.config.center_crop).pixels;
  NoGradGuard guard;
  const Tensor c = r.content->content_encode(as_batch(content));
  save_image(first_image(r.target->generate_whitened(c)), args.out);
  return kOk;
}

int cmd_benchmark(const BenchmarkArgs& args) {
  if (args.trials < 10) throw ArgumentError("--trials must be at least 10");
  for (std::size_t c : args.channels)
    for (std::size_t g : args.groups)
      if (g == 0 || c % g != 0)
        throw ArgumentError(std::to_string(c) + " channels are not divisible into " + std::to_string(g) + " groups");
  bool ok = true;
  std::printf("%8s %6s %14s %14s %8s  %s\n", "channels", "groups", "classical_s", "gdwct_s", "speedup",
              "ordering");
  for (std::size_t c : args.channels) {
    for (std::size_t g : args.groups) {
      const BenchmarkRow row = benchmark_transform(c, g, args.trials, args.pixels, args.seed);
      const char* verdict = !row.ordering_checked ? "-" : row.ordering_holds ? "ok" : "VIOLATED";
      if (row.ordering_checked && !row.ordering_holds) ok = false;
      std::printf("%8zu %6zu %14.6f %14.6f %8.1f  %s\n", c, g, row.classical_seconds, row.gdwct_seconds,
                  row.classical_seconds / row.gdwct_seconds, verdict);
      std::fflush(stdout);
    }
  }
  return ok ? kOk : kCheckFailed;
}

int cmd_gradcheck(const GradcheckArgs& args) {
  std::vector<std::string> scopes;
  if (args.scope == "all") scopes = {"gdwct", "losses", "networks-small"};
  else scopes = {args.scope};

  bool ok = true;
  const GradCheckEntry* worst = nullptr;
  std::vector<GradCheckReport> reports;
  for (const auto& s : scopes) reports.push_back(gradient_check(s, args.trials, args.tolerance, args.seed));
  std::printf("%-44s %12s\n", "check", "max_rel_err");
  for (const auto& r : reports) {
    for (const auto& e : r.entries) {
      std::printf("%-44s %12.3e%s\n", (r.scope + ":" + e.name).c_str(), e.max_rel_error,
                  e.max_rel_error < args.tolerance ? "" : "  FAIL");
      if (!worst || e.max_rel_error > worst->max_rel_error) worst = &e;
    }
    ok = ok && r.passed();
  }
  if (!ok) {
    std::fprintf(stderr, "gradcheck failed: worst offender %s (%.3e >= %.1e)\n", worst->name.c_str(),
                 worst->max_rel_error, args.tolerance);
    return kCheckFailed;
  }
  std::printf("all gradients within %.1e\n", args.tolerance);
  return kOk;
}

int cmd_synth(const SynthArgs& args) {
  const DatasetPair data = synth_dataset(args.seed, args.n, args.size);
  const fs::path root = args.out;
  for (const auto& [name, samples] : {std::pair{"domainA", &data.domain_a}, {"domainB", &data.domain_b}}) {
    fs::create_directories(root / name);
    for (std::size_t i = 0; i < samples->size(); ++i)
      save_image((*samples)[i].pixels, root / name / (zero_pad(i, 4) + ".png"));
  }
  std::cout << "wrote " << args.n << " images per domain to " << root.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-wise deep whitening-and-coloring translation toolkit"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a two-domain translation model");
  t->add_option("--config", train.config, "Config file (key = value lines)");
  t->add_option("--data", train.data, "Dataset root with domainA/ and domainB/");
  t->add_flag("--synthetic", train.synthetic, "Use the procedural two-domain dataset");
  t->add_option("--out", train.out, "Output directory")->capture_default_str();
  t->add_option("--seed", train.seed, "Override the config seed");
  t->add_option("--iters", train.iters, "Override total_iters");
  t->add_option("--checkpoint", train.checkpoint, "Resume from this checkpoint");

  TranslateArgs translate;
  auto* tr = app.add_subcommand("translate", "Render a content image in the style of an exemplar");
  tr->add_option("--checkpoint", translate.checkpoint)->required();
  tr->add_option("--content", translate.content, "Content PNG")->required();
  tr->add_option("--style", translate.style, "Style exemplar PNG")->required();
  tr->add_option("--out", translate.out, "Output PNG")->required();
  tr->add_option("--direction", translate.direction, "a2b, b2a, a2a or b2b")->capture_default_str();

  TranslateArgs whiten;
  auto* wh = app.add_subcommand("whiten", "Render whitened content without coloring");
  wh->add_option("--checkpoint", whiten.checkpoint)->required();
  wh->add_option("--content", whiten.content, "Content PNG")->required();
  wh->add_option("--out", whiten.out, "Output PNG")->required();
  wh->add_option("--direction", whiten.direction, "a2b, b2a, a2a or b2b")->capture_default_str();

  BenchmarkArgs bench;
  auto* be = app.add_subcommand("benchmark", "Time classical WCT against GDWCT");
  be->add_option("--channels", bench.channels, "Channel counts")->delimiter(',')->capture_default_str();
  be->add_option("--groups", bench.groups, "Group counts")->delimiter(',')->capture_default_str();
  be->add_option("--trials", bench.trials)->capture_default_str();
  be->add_option("--pixels", bench.pixels, "Spatial positions per feature")->capture_default_str();
  be->add_option("--seed", bench.seed)->capture_default_str();

  GradcheckArgs grad;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--scope", grad.scope, "gdwct, losses, networks-small or all")->capture_default_str();
  gc->add_option("--trials", grad.trials)->capture_default_str();
  gc->add_option("--seed", grad.seed)->capture_default_str();

  SynthArgs synth;
  auto* sy = app.add_subcommand("synth-data", "Write the procedural dataset as PNG folders");
  sy->add_option("--out", synth.out, "Output root")->required();
  sy->add_option("--seed", synth.seed)->capture_default_str();
  sy->add_option("--n", synth.n, "Images per domain")->capture_default_str();
  sy->add_option("--size", synth.size, "Image side length")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*t) return cmd_train(train);
    if (*tr) return cmd_translate(translate);
    if (*wh) return cmd_whiten(whiten);
    if (*be) return cmd_benchmark(bench);
    if (*gc) return cmd_gradcheck(grad);
    if (*sy) return cmd_synth(synth);
  } catch (const NonFiniteError& e) {
    std::cerr << "gdwct: " << e.what() << "\n";
    return kAbort;
  } catch (const ConfigError& e) {
    std::cerr << "gdwct: config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "gdwct: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "gdwct: " << e.what() << "\n";
    return kUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "gdwct: " << e.what() << "\n";
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "gdwct: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "gdwct: " << e.what() << "\n";
    return kAbort;
  }
  return kUsage;
}
