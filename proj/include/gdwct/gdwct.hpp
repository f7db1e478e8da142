#pragma once

// Group-wise deep whitening-and-coloring.
//
// Whitening is reduced to mean subtraction; the encoder is pushed towards
// white features by the whitening regularizer instead. Coloring uses a learned
// matrix per channel group, factored as U diag(D) by column norms and
// re-assembled as U diag(D) U^T, with the coloring regularizer pushing U
// towards orthogonality. Everything here lives on the autodiff tape.

#include <cstddef>
#include <span>
#include <vector>

#include "gdwct/tensor.hpp"

namespace gdwct {

struct GroupSpec {
  std::size_t channels = 0;
  std::size_t groups = 1;

  // Throws GroupDivisibilityError unless channels % groups == 0 and both > 0.
  static GroupSpec make(std::size_t channels, std::size_t groups);
  std::size_t group_dim() const { return channels / groups; }
};

struct StyleSummary {
  Tensor per_group_ct;  // [G, d, d], block i = U_i diag(D_i) U_i^T
  Tensor per_group_u;   // [G, d, d]
  Tensor x;             // [C, C] block-diagonal
  Tensor s_mu;          // [C]
};

// alpha = sigmoid(raw); raw is the learnable leaf.
struct AlphaBlend {
  Tensor raw = Tensor::scalar(0.0, true);

  Tensor alpha() const { return sigmoid(raw); }
  double value() const;
};

// Number of values that describe one hop's coloring: G * (C/G)^2 = C^2 / G.
std::size_t style_representation_size(std::size_t channels, std::size_t groups);

// [B, C, H, W] -> [C, B*H*W]
Tensor pool_batch(const Tensor& features);

// c - per-channel mean over the sample axis; c is [C, N].
Tensor deep_whiten(const Tensor& c);

// Per-group covariance of c [C, N] with divisor N - 1, shape [G, d, d].
Tensor group_covariance(const Tensor& c, const GroupSpec& spec);

// Mean over groups of sum |Sigma_g - I|.
Tensor whitening_regularizer(const Tensor& c, const GroupSpec& spec);

struct ColumnFactors {
  Tensor u;  // [K, d, d] unit columns
  Tensor d;  // [K, d] clamped column norms
};

// Differentiable column-norm factorization of a stack of square matrices.
ColumnFactors column_normalize(const Tensor& s_ct);

// Mean over matrices of sum |U^T U - I|; u is [K, d, d].
Tensor coloring_regularizer(const Tensor& u);
Tensor coloring_regularizer(std::span<const Tensor> per_group_u);

// s_ct_groups is [G, d, d]. The returned summary has s_mu = 0.
StyleSummary build_coloring(const Tensor& s_ct_groups);
StyleSummary build_coloring(std::span<const Tensor> s_ct_groups);

// Per-sample summaries for s_ct [B, G, d, d] and s_mu [B, C], with the U
// factors of the whole batch kept together as [B*G, d, d] for the regularizer.
struct BatchStyle {
  std::vector<StyleSummary> samples;
  Tensor u_all;
};
BatchStyle build_coloring_batch(const Tensor& s_ct, const Tensor& s_mu);

// Applies each [d, d] block to its channel slice of c_w [C, N]. Same result as
// the block-diagonal product without touching the zero blocks.
Tensor apply_groupwise(const Tensor& per_group_ct, const Tensor& c_w);

// alpha * (X phi(c - c_mu) + s_mu) + (1 - alpha) * c, for c [C, H, W].
Tensor gdwct_forward(const Tensor& c, const StyleSummary& style, const AlphaBlend& blend);

}  // namespace gdwct
