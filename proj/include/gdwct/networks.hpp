#pragma once

// Desk-scale translation networks: content/style encoders, per-hop style
// heads, a generator that injects GDWCT in its residual blocks, and a
// multi-scale LSGAN discriminator. Channel counts and image size come from
// NetworkConfig; nothing below is tied to one scale.

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gdwct/gdwct.hpp"
#include "gdwct/tensor.hpp"

namespace gdwct {

struct NetworkConfig {
  std::size_t base_channels = 16;  // C, content and style feature width
  std::size_t n_res_blocks = 4;
  std::size_t n_hops = 4;  // GDWCT injections, one per leading residual block
  std::size_t groups = 4;  // G
  std::size_t image_size = 32;
  std::size_t mlp_depth = 3;
  std::size_t mlp_hidden = 32;
  std::size_t stem_kernel = 7;
  std::size_t down_kernel = 4;
  std::size_t disc_channels = 8;
  std::size_t disc_scales = 2;

  // Throws ConfigError on violated invariants.
  void validate() const;
  std::size_t group_dim() const { return base_channels / groups; }
};

using NamedParameter = std::pair<std::string, Tensor>;
using ParameterList = std::vector<NamedParameter>;

struct Conv2d {
  Tensor weight;  // [O, C, k, k]
  Tensor bias;    // [O], unused when has_bias is false
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool has_bias = false;

  static Conv2d make(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                     std::size_t pad, bool bias, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear make(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;  // x [N, in]
  void collect(ParameterList& out, const std::string& prefix) const;
};

// Linear layers with ReLU between them; the last layer is linear.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp make(std::size_t in, std::size_t hidden, std::size_t out, std::size_t depth,
                  std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

struct ResidualPair {
  Conv2d first;
  Conv2d second;
};

struct ContentEncoder {
  Conv2d stem, down1, down2;
  std::vector<ResidualPair> blocks;

  // [B, 3, S, S] -> [B, C, S/4, S/4], instance norm after every conv.
  Tensor forward(const Tensor& x) const;
};

struct StyleEncoder {
  std::vector<Conv2d> convs;  // four stride-2 convs
  std::size_t groups = 1;

  // [B, 3, S, S] -> [B, C], group norm after every conv, then global average pooling.
  Tensor forward(const Tensor& x) const;
};

struct StyleHeads {
  Tensor s_ct;  // [B, G, d, d]
  Tensor s_mu;  // [B, C]
};

// Style code of a batch of exemplars, ready for every hop.
struct StyleCode {
  Tensor s;                       // [B, C]
  std::vector<BatchStyle> hops;   // one per hop
  Tensor u_all;                   // [hops*B*G, d, d] for the coloring regularizer
};

struct Generator {
  std::vector<ResidualPair> blocks;  // conv-relu-conv with bias, no normalization
  std::vector<AlphaBlend> alphas;    // one per hop
  Conv2d up1, up2, head;
};

struct Discriminator {
  std::vector<std::vector<Conv2d>> scales;
};

struct DomainModel {
  NetworkConfig config;
  ContentEncoder content;
  StyleEncoder style;
  std::vector<Mlp> mlp_ct;  // per hop, shared across groups
  std::vector<Mlp> mlp_mu;  // per hop
  Generator generator;
  Discriminator discriminator;

  static DomainModel make(const NetworkConfig& config, std::mt19937_64& rng);

  Tensor content_encode(const Tensor& x) const;
  Tensor style_encode(const Tensor& x) const;
  StyleHeads style_heads(const Tensor& s, std::size_t hop) const;
  StyleCode style_code(const Tensor& s) const;
  // Residual block i applies GDWCT with hop i's style before its residual add.
  Tensor generate(const Tensor& c, const StyleCode& style) const;
  Tensor generate(const Tensor& c, const std::vector<BatchStyle>& hops) const;
  // Same generator with every hop replaced by plain whitening: X = I,
  // s_mu = 0, alpha = 1.
  Tensor generate_whitened(const Tensor& c) const;
  std::vector<Tensor> discriminate(const Tensor& x) const;

  // Encoders, heads, alphas and generator: everything the generator step updates.
  ParameterList generator_parameters(const std::string& prefix) const;
  ParameterList discriminator_parameters(const std::string& prefix) const;
};

// Both directions of an unpaired translation model.
struct TranslationModel {
  NetworkConfig config;
  DomainModel a;
  DomainModel b;

  static TranslationModel make(const NetworkConfig& config, std::uint64_t seed);
  ParameterList generator_parameters() const;
  ParameterList discriminator_parameters() const;
  ParameterList all_parameters() const;
};

}  // namespace gdwct
