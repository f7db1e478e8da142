#include "gdwct/networks.hpp"

#include <cmath>

namespace gdwct {

namespace {

Tensor init_uniform(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  return Tensor::uniform(shape, -a, a, rng, true);
}

Tensor instance_norm(const Tensor& x) { return group_norm(x, x.dim(1)); }

void require_image(const Tensor& x, std::size_t divisor, const char* who) {
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != x.dim(3) || x.dim(2) % divisor != 0) {
    throw ShapeError(std::string(who) + " expects [B, 3, S, S] with S divisible by " +
                     std::to_string(divisor) + ", got " + shape_str(x.shape()));
  }
}

// Applies GDWCT sample by sample; each sample has its own style.
Tensor gdwct_batch(const Tensor& x, const BatchStyle& style, const AlphaBlend& blend) {
  const std::size_t batch = x.dim(0);
  if (style.samples.size() != batch) {
    throw ArgumentError("style batch " + std::to_string(style.samples.size()) +
                        " does not match content batch " + std::to_string(batch));
  }
  std::vector<Tensor> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b)
    out.push_back(gdwct_forward(select(x, b), style.samples[b], blend));
  return stack(out);
}

}  // namespace

void NetworkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(0, msg); };
  if (groups == 0 || base_channels == 0 || base_channels % groups != 0)
    fail("base_channels (" + std::to_string(base_channels) + ") must be divisible by groups (" +
         std::to_string(groups) + ")");
  if (base_channels % 4 != 0) fail("base_channels must be divisible by 4");
  if (n_hops > n_res_blocks) fail("n_hops must not exceed n_res_blocks");
  if (image_size == 0 || image_size % 16 != 0) fail("image_size must be a positive multiple of 16");
  if (mlp_depth == 0 || mlp_hidden == 0) fail("mlp_depth and mlp_hidden must be positive");
  if (stem_kernel % 2 == 0) fail("stem_kernel must be odd");
  if (down_kernel < 2) fail("down_kernel must be at least 2");
  if (disc_channels == 0 || disc_scales == 0) fail("discriminator needs channels and scales");
  if ((image_size >> (disc_scales - 1)) < 8 || image_size % (std::size_t{8} << (disc_scales - 1)) != 0)
    fail("image_size too small for " + std::to_string(disc_scales) + " discriminator scales");
}

// ---- layers ---------------------------------------------------------------

Conv2d Conv2d::make(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                    std::size_t pad, bool bias, std::mt19937_64& rng) {
  Conv2d c;
  c.weight = init_uniform({out, in, k, k}, in * k * k, rng);
  c.bias = Tensor::zeros({out}, bias);
  c.stride = stride;
  c.pad = pad;
  c.has_bias = bias;
  return c;
}

Tensor Conv2d::forward(const Tensor& x) const {
  Tensor y = conv2d(x, weight, stride, pad);
  if (!has_bias) return y;
  const Shape& s = y.shape();
  return y + expand(reshape(bias, {1, s[1], 1, 1}), s);
}

void Conv2d::collect(ParameterList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  if (has_bias) out.emplace_back(prefix + ".bias", bias);
}

Linear Linear::make(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return Linear{init_uniform({in, out}, in, rng), Tensor::zeros({out}, true)};
}

Tensor Linear::forward(const Tensor& x) const {
  const Tensor y = matmul(x, weight);
  return y + expand(reshape(bias, {1, bias.numel()}), y.shape());
}

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Mlp Mlp::make(std::size_t in, std::size_t hidden, std::size_t out, std::size_t depth,
              std::mt19937_64& rng) {
  Mlp m;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t fan_in = i == 0 ? in : hidden;
    const std::size_t fan_out = i + 1 == depth ? out : hidden;
    m.layers.push_back(Linear::make(fan_in, fan_out, rng));
  }
  return m;
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

void Mlp::collect(ParameterList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(out, prefix + ".layer" + std::to_string(i));
}

// ---- encoders -------------------------------------------------------------

Tensor ContentEncoder::forward(const Tensor& x) const {
  require_image(x, 4, "content_encode");
  Tensor h = relu(instance_norm(stem.forward(x)));
  h = relu(instance_norm(down1.forward(h)));
  h = relu(instance_norm(down2.forward(h)));
  for (const auto& block : blocks) {
    const Tensor r = instance_norm(block.second.forward(relu(instance_norm(block.first.forward(h)))));
    h = h + r;
  }
  return h;
}

Tensor StyleEncoder::forward(const Tensor& x) const {
  require_image(x, 16, "style_encode");
  Tensor h = x;
  for (const auto& conv : convs) h = relu(group_norm(conv.forward(h), groups));
  return mean(h, {2, 3});
}

// ---- domain model ---------------------------------------------------------

DomainModel DomainModel::make(const NetworkConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t c = config.base_channels;
  const std::size_t d = config.group_dim();
  const std::size_t k = config.down_kernel;
  const std::size_t down_pad = (k - 1) / 2;
  DomainModel m;
  m.config = config;

  m.content.stem = Conv2d::make(3, c / 4, config.stem_kernel, 1, config.stem_kernel / 2, false, rng);
  m.content.down1 = Conv2d::make(c / 4, c / 2, k, 2, down_pad, false, rng);
  m.content.down2 = Conv2d::make(c / 2, c, k, 2, down_pad, false, rng);
  for (std::size_t i = 0; i < config.n_res_blocks; ++i)
    m.content.blocks.push_back({Conv2d::make(c, c, 3, 1, 1, false, rng),
                                Conv2d::make(c, c, 3, 1, 1, false, rng)});

  m.style.groups = config.groups;
  for (std::size_t i = 0; i < 4; ++i)
    m.style.convs.push_back(Conv2d::make(i == 0 ? 3 : c, c, k, 2, down_pad, false, rng));

  for (std::size_t hop = 0; hop < config.n_hops; ++hop) {
    m.mlp_ct.push_back(Mlp::make(d, config.mlp_hidden, d * d, config.mlp_depth, rng));
    m.mlp_mu.push_back(Mlp::make(c, config.mlp_hidden, c, config.mlp_depth, rng));
  }

  for (std::size_t i = 0; i < config.n_res_blocks; ++i)
    m.generator.blocks.push_back({Conv2d::make(c, c, 3, 1, 1, true, rng),
                                  Conv2d::make(c, c, 3, 1, 1, true, rng)});
  m.generator.alphas.resize(config.n_hops);
  for (auto& a : m.generator.alphas) a.raw = Tensor::scalar(0.0, true);
  m.generator.up1 = Conv2d::make(c, c / 2, 3, 1, 1, true, rng);
  m.generator.up2 = Conv2d::make(c / 2, c / 4, 3, 1, 1, true, rng);
  m.generator.head = Conv2d::make(c / 4, 3, 3, 1, 1, true, rng);

  const std::size_t dc = config.disc_channels;
  for (std::size_t s = 0; s < config.disc_scales; ++s) {
    std::vector<Conv2d> stack;
    stack.push_back(Conv2d::make(3, dc, 4, 2, 1, true, rng));
    stack.push_back(Conv2d::make(dc, 2 * dc, 4, 2, 1, true, rng));
    stack.push_back(Conv2d::make(2 * dc, 4 * dc, 4, 2, 1, true, rng));
    stack.push_back(Conv2d::make(4 * dc, 1, 3, 1, 1, true, rng));
    m.discriminator.scales.push_back(std::move(stack));
  }
  return m;
}

Tensor DomainModel::content_encode(const Tensor& x) const { return content.forward(x); }

Tensor DomainModel::style_encode(const Tensor& x) const { return style.forward(x); }

StyleHeads DomainModel::style_heads(const Tensor& s, std::size_t hop) const {
  if (hop >= config.n_hops) {
    throw ArgumentError("hop " + std::to_string(hop) + " out of range (n_hops = " +
                        std::to_string(config.n_hops) + ")");
  }
  const std::size_t c = config.base_channels, g = config.groups, d = config.group_dim();
  if (s.ndim() != 2 || s.dim(1) != c) {
    throw ShapeError("style_heads expects [B, " + std::to_string(c) + "], got " +
                     shape_str(s.shape()));
  }
  const std::size_t batch = s.dim(0);
  const Tensor partial = reshape(s, {batch * g, d});
  const Tensor s_ct = reshape(mlp_ct[hop].forward(partial), {batch, g, d, d});
  return StyleHeads{s_ct, mlp_mu[hop].forward(s)};
}

StyleCode DomainModel::style_code(const Tensor& s) const {
  StyleCode code{s, {}, {}};
  std::vector<Tensor> us;
  for (std::size_t hop = 0; hop < config.n_hops; ++hop) {
    const StyleHeads heads = style_heads(s, hop);
    code.hops.push_back(build_coloring_batch(heads.s_ct, heads.s_mu));
    us.push_back(code.hops.back().u_all);
  }
  if (!us.empty()) code.u_all = concat(us);
  return code;
}

Tensor DomainModel::generate(const Tensor& c, const StyleCode& style) const {
  return generate(c, style.hops);
}

Tensor DomainModel::generate(const Tensor& c, const std::vector<BatchStyle>& hops) const {
  if (hops.size() < config.n_hops) {
    throw ArgumentError("generator needs " + std::to_string(config.n_hops) +
                        " hop styles, got " + std::to_string(hops.size()));
  }
  if (c.ndim() != 4 || c.dim(1) != config.base_channels) {
    throw ShapeError("generate expects [B, " + std::to_string(config.base_channels) +
                     ", h, w], got " + shape_str(c.shape()));
  }
  Tensor h = c;
  for (std::size_t i = 0; i < generator.blocks.size(); ++i) {
    const Tensor styled = i < config.n_hops ? gdwct_batch(h, hops[i], generator.alphas[i]) : h;
    const auto& block = generator.blocks[i];
    h = styled + block.second.forward(relu(block.first.forward(styled)));
  }
  h = relu(generator.up1.forward(upsample_nearest2x(h)));
  h = relu(generator.up2.forward(upsample_nearest2x(h)));
  return tanh(generator.head.forward(h));
}

Tensor DomainModel::generate_whitened(const Tensor& c) const {
  if (c.ndim() != 4) throw ShapeError("generate_whitened expects [B, C, h, w]");
  const std::size_t batch = c.dim(0);
  const std::size_t g = config.groups, d = config.group_dim();
  BatchStyle identity;
  identity.u_all = Tensor::zeros({batch * g, d, d});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<Tensor> blocks(g, Tensor::eye(d));
    identity.samples.push_back(build_coloring(blocks));  // s_mu = 0
  }
  // alpha = sigmoid(60) == 1 exactly in double precision.
  DomainModel whitened = *this;
  for (auto& a : whitened.generator.alphas) a.raw = Tensor::scalar(60.0);
  return whitened.generate(c, std::vector<BatchStyle>(config.n_hops, identity));
}

std::vector<Tensor> DomainModel::discriminate(const Tensor& x) const {
  std::vector<Tensor> scores;
  Tensor input = x;
  for (std::size_t s = 0; s < discriminator.scales.size(); ++s) {
    if (s > 0) input = avg_pool2x(input);
    const auto& stack = discriminator.scales[s];
    Tensor h = input;
    for (std::size_t i = 0; i + 1 < stack.size(); ++i) h = leaky_relu(stack[i].forward(h));
    scores.push_back(stack.back().forward(h));
  }
  return scores;
}

ParameterList DomainModel::generator_parameters(const std::string& prefix) const {
  ParameterList out;
  content.stem.collect(out, prefix + "content.stem");
  content.down1.collect(out, prefix + "content.down1");
  content.down2.collect(out, prefix + "content.down2");
  for (std::size_t i = 0; i < content.blocks.size(); ++i) {
    content.blocks[i].first.collect(out, prefix + "content.res" + std::to_string(i) + ".conv1");
    content.blocks[i].second.collect(out, prefix + "content.res" + std::to_string(i) + ".conv2");
  }
  for (std::size_t i = 0; i < style.convs.size(); ++i)
    style.convs[i].collect(out, prefix + "style.conv" + std::to_string(i));
  for (std::size_t hop = 0; hop < mlp_ct.size(); ++hop) {
    mlp_ct[hop].collect(out, prefix + "mlp_ct" + std::to_string(hop));
    mlp_mu[hop].collect(out, prefix + "mlp_mu" + std::to_string(hop));
  }
  for (std::size_t i = 0; i < generator.blocks.size(); ++i) {
    generator.blocks[i].first.collect(out, prefix + "gen.res" + std::to_string(i) + ".conv1");
    generator.blocks[i].second.collect(out, prefix + "gen.res" + std::to_string(i) + ".conv2");
  }
  for (std::size_t hop = 0; hop < generator.alphas.size(); ++hop)
    out.emplace_back(prefix + "gen.alpha" + std::to_string(hop), generator.alphas[hop].raw);
  generator.up1.collect(out, prefix + "gen.up1");
  generator.up2.collect(out, prefix + "gen.up2");
  generator.head.collect(out, prefix + "gen.head");
  return out;
}

ParameterList DomainModel::discriminator_parameters(const std::string& prefix) const {
  ParameterList out;
  for (std::size_t s = 0; s < discriminator.scales.size(); ++s)
    for (std::size_t i = 0; i < discriminator.scales[s].size(); ++i)
      discriminator.scales[s][i].collect(
          out, prefix + "disc.scale" + std::to_string(s) + ".conv" + std::to_string(i));
  return out;
}

TranslationModel TranslationModel::make(const NetworkConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TranslationModel m{config, DomainModel::make(config, rng), DomainModel::make(config, rng)};
  return m;
}

ParameterList TranslationModel::generator_parameters() const {
  ParameterList out = a.generator_parameters("a.");
  for (auto& p : b.generator_parameters("b.")) out.push_back(std::move(p));
  return out;
}

ParameterList TranslationModel::discriminator_parameters() const {
  ParameterList out = a.discriminator_parameters("a.");
  for (auto& p : b.discriminator_parameters("b.")) out.push_back(std::move(p));
  return out;
}

ParameterList TranslationModel::all_parameters() const {
  ParameterList out = generator_parameters();
  for (auto& p : discriminator_parameters()) out.push_back(std::move(p));
  return out;
}

}  // namespace gdwct
