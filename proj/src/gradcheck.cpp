#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "gdwct/gdwct.hpp"
#include "gdwct/trainer.hpp"

namespace gdwct {

namespace {

constexpr double kStep = 1e-6;
constexpr double kRelFloor = 1e-3;
// Larger tensors are spot-checked on this many random entries.
constexpr std::size_t kMaxEntries = 8;

struct Probe {
  std::string name;
  std::vector<std::pair<std::string, Tensor>> inputs;
  std::function<Tensor()> loss;
};

double rel_err(double a, double n) {
  return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), kRelFloor});
}

// Weighted sum with fixed random weights, so every output entry matters.
std::function<Tensor()> weighted(std::function<Tensor()> f, std::mt19937_64& rng) {
  Tensor w;
  {
    NoGradGuard guard;
    w = Tensor::uniform(f().shape(), -1.0, 1.0, rng);
  }
  return [f = std::move(f), w] { return sum_all(f() * w); };
}

void run_probe(const Probe& probe, std::mt19937_64& rng, std::vector<GradCheckEntry>& entries) {
  for (const auto& [name, t] : probe.inputs) {
    Tensor x = t;
    x.zero_grad();
  }
  backward(probe.loss());

  for (const auto& [input_name, t] : probe.inputs) {
    Tensor x = t;
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());

    std::vector<std::size_t> idx(x.numel());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > kMaxEntries) {
      for (std::size_t i = 0; i < kMaxEntries; ++i)
        std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
      idx.resize(kMaxEntries);
    }

    double worst = 0.0;
    NoGradGuard guard;
    auto data = x.mutable_data();
    for (std::size_t i : idx) {
      const double saved = data[i];
      data[i] = saved + kStep;
      const double up = probe.loss().item();
      data[i] = saved - kStep;
      const double down = probe.loss().item();
      data[i] = saved;
      worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * kStep)));
    }
    const std::string name = probe.name + "/" + input_name;
    auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.name == name; });
    if (it == entries.end()) entries.push_back({name, worst});
    else it->max_rel_error = std::max(it->max_rel_error, worst);
  }
}

Tensor leaf(const Shape& shape, double lo, double hi, std::mt19937_64& rng) {
  return Tensor::uniform(shape, lo, hi, rng, true);
}

std::vector<Probe> gdwct_probes(std::mt19937_64& rng) {
  std::vector<Probe> out;
  const GroupSpec spec = GroupSpec::make(4, 2);

  const Tensor c = leaf({4, 32}, -1, 1, rng);
  out.push_back({"whitening_regularizer", {{"c", c}}, [c, spec] { return whitening_regularizer(c, spec); }});
  out.push_back({"group_covariance", {{"c", c}}, weighted([c, spec] { return group_covariance(c, spec); }, rng)});
  out.push_back({"deep_whiten", {{"c", c}}, weighted([c] { return deep_whiten(c); }, rng)});

  const Tensor u = leaf({3, 4, 4}, -1, 1, rng);
  out.push_back({"coloring_regularizer", {{"u", u}}, [u] { return coloring_regularizer(u); }});
  out.push_back({"column_normalize",
                 {{"s_ct", u}},
                 weighted([u] {
                   const ColumnFactors f = column_normalize(u);
                   return concat(std::vector<Tensor>{reshape(f.u, {48}), reshape(f.d, {12})});
                 }, rng)});

  const Tensor blocks = leaf({2, 2, 2}, -1, 1, rng);
  const Tensor feature = leaf({4, 6}, -1, 1, rng);
  out.push_back({"apply_groupwise",
                 {{"blocks", blocks}, {"feature", feature}},
                 weighted([blocks, feature] { return apply_groupwise(blocks, feature); }, rng)});

  const Tensor content = leaf({4, 3, 3}, -1, 1, rng);
  const Tensor s_ct = leaf({2, 2, 2}, -1, 1, rng);
  const Tensor s_mu = leaf({4}, -1, 1, rng);
  AlphaBlend blend;
  blend.raw = leaf({1}, -2, 2, rng);
  out.push_back({"gdwct_forward",
                 {{"content", content}, {"s_ct", s_ct}, {"s_mu", s_mu}, {"alpha", blend.raw}},
                 weighted([=] {
                   StyleSummary style = build_coloring(s_ct);
                   style.s_mu = s_mu;
                   return gdwct_forward(content, style, blend);
                 }, rng)});
  return out;
}

std::vector<Probe> loss_probes(std::mt19937_64& rng) {
  std::vector<Probe> out;
  const Tensor a = leaf({2, 8}, -1, 1, rng), b = leaf({2, 8}, -1, 1, rng);
  out.push_back({"style_consistency", {{"a", a}, {"b", b}}, [a, b] { return style_consistency(a, b); }});
  const Tensor fa = leaf({1, 4, 3, 3}, -1, 1, rng), fb = leaf({1, 4, 3, 3}, -1, 1, rng);
  out.push_back({"content_consistency", {{"a", fa}, {"b", fb}}, [fa, fb] { return content_consistency(fa, fb); }});
  const Tensor ia = leaf({1, 3, 4, 4}, -1, 1, rng), ib = leaf({1, 3, 4, 4}, -1, 1, rng);
  out.push_back({"pixel_l1", {{"a", ia}, {"b", ib}}, [ia, ib] { return pixel_l1(ia, ib); }});

  const Tensor r0 = leaf({1, 1, 4, 4}, -2, 2, rng), r1 = leaf({1, 1, 2, 2}, -2, 2, rng);
  const Tensor f0 = leaf({1, 1, 4, 4}, -2, 2, rng), f1 = leaf({1, 1, 2, 2}, -2, 2, rng);
  out.push_back({"lsgan_d",
                 {{"real0", r0}, {"real1", r1}, {"fake0", f0}, {"fake1", f1}},
                 [=] { return lsgan_d(std::vector<Tensor>{r0, r1}, std::vector<Tensor>{f0, f1}); }});
  out.push_back({"lsgan_g", {{"fake0", f0}, {"fake1", f1}},
                 [=] { return lsgan_g(std::vector<Tensor>{f0, f1}); }});

  std::vector<Tensor> parts;
  std::vector<std::pair<std::string, Tensor>> inputs;
  for (int i = 0; i < 9; ++i) {
    parts.push_back(leaf({3}, -1, 1, rng));
    inputs.emplace_back("term" + std::to_string(i), parts.back());
  }
  out.push_back({"total_generator", inputs, [parts] {
                   auto t = [&](int i) { return mean_all(square(parts[i])); };
                   const GeneratorTerms terms{t(0), t(1), t(2), t(3), t(4), t(5), t(6), t(7), t(8)};
                   return total_generator(terms, LossWeights{});
                 }});
  return out;
}

std::vector<Probe> network_probes(std::mt19937_64& rng) {
  NetworkConfig config;
  config.base_channels = 8;
  config.groups = 2;
  config.n_res_blocks = 1;
  config.n_hops = 1;
  config.image_size = 16;
  config.mlp_depth = 2;
  config.mlp_hidden = 6;
  config.disc_channels = 2;
  config.disc_scales = 1;
  DomainModel m = DomainModel::make(config, rng);
  m.generator.alphas[0].raw = Tensor::scalar(std::uniform_real_distribution<double>(-1, 1)(rng), true);
  const Tensor x = leaf({1, 3, 16, 16}, -1, 1, rng);
  const GroupSpec spec = GroupSpec::make(8, 2);

  Tensor out_weights;
  {
    NoGradGuard guard;
    out_weights = Tensor::uniform({1, 3, 16, 16}, -1, 1, rng);
  }
  auto loss = [m, x, spec, out_weights] {
    const Tensor c = m.content_encode(x);
    const StyleCode code = m.style_code(m.style_encode(x));
    const Tensor y = m.generate(c, code);
    return sum_all(y * out_weights) + lsgan_g(m.discriminate(y)) +
           whitening_regularizer(pool_batch(c), spec) + coloring_regularizer(code.u_all);
  };

  std::vector<std::pair<std::string, Tensor>> inputs{{"image", x}};
  for (auto& p : m.generator_parameters("")) inputs.push_back(p);
  for (auto& p : m.discriminator_parameters("")) inputs.push_back(p);
  // Zero-initialized biases put ReLUs fed by dead regions exactly on their
  // kink, where central differences see half the slope. Move them off it.
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  for (auto& [name, t] : inputs) {
    if (!name.ends_with(".bias")) continue;
    for (double& v : t.mutable_data()) v = jitter(rng);
  }
  return {{"networks", inputs, loss}};
}

}  // namespace

const GradCheckEntry& GradCheckReport::worst() const {
  if (entries.empty()) throw ArgumentError("empty gradient-check report");
  return *std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error < b.max_rel_error;
  });
}

bool GradCheckReport::passed() const {
  for (const auto& e : entries)
    if (!(e.max_rel_error < tolerance)) return false;
  return !entries.empty();
}

GradCheckReport gradient_check(const std::string& scope, std::size_t trials, double tolerance,
                               std::uint64_t seed) {
  std::function<std::vector<Probe>(std::mt19937_64&)> make;
  if (scope == "gdwct") make = gdwct_probes;
  else if (scope == "losses") make = loss_probes;
  else if (scope == "networks-small") make = network_probes;
  else throw ArgumentError("unknown gradcheck scope '" + scope + "' (gdwct, losses, networks-small)");
  if (trials == 0) throw ArgumentError("gradcheck needs at least one trial");

  GradCheckReport report{scope, tolerance, {}};
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t)
    for (const Probe& probe : make(rng)) run_probe(probe, rng, report.entries);
  return report;
}

}  // namespace gdwct
