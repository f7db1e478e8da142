#include "gdwct/gdwct.hpp"

#include <string>

namespace gdwct {

namespace {

// I repeated over a leading axis: [k, d, d].
Tensor stacked_identity(std::size_t k, std::size_t d) {
  std::vector<double> v(k * d * d, 0.0);
  for (std::size_t g = 0; g < k; ++g)
    for (std::size_t i = 0; i < d; ++i) v[(g * d + i) * d + i] = 1.0;
  return Tensor({k, d, d}, std::move(v));
}

// Mean over matrices of the entrywise (1,1) norm of (m - I); m is [k, d, d].
Tensor mean_offset_from_identity(const Tensor& m) {
  const Tensor diff = m - stacked_identity(m.dim(0), m.dim(1));
  return mean_all(sum(abs(diff), {1, 2}));
}

void require_square_stack(const Tensor& t, const char* what) {
  if (t.ndim() != 3 || t.dim(1) != t.dim(2)) {
    throw ShapeError(std::string(what) + " expects [K, d, d], got " + shape_str(t.shape()));
  }
}

}  // namespace

GroupSpec GroupSpec::make(std::size_t channels, std::size_t groups) {
  if (channels == 0 || groups == 0 || channels % groups != 0) {
    throw GroupDivisibilityError("channel count " + std::to_string(channels) +
                                 " is not divisible by " + std::to_string(groups) + " groups");
  }
  return GroupSpec{channels, groups};
}

double AlphaBlend::value() const {
  NoGradGuard guard;
  return alpha().item();
}

std::size_t style_representation_size(std::size_t channels, std::size_t groups) {
  const auto spec = GroupSpec::make(channels, groups);
  return spec.groups * spec.group_dim() * spec.group_dim();
}

Tensor pool_batch(const Tensor& features) {
  if (features.ndim() != 4) {
    throw ShapeError("pool_batch expects [B, C, H, W], got " + shape_str(features.shape()));
  }
  const std::size_t channels = features.dim(1);
  const std::size_t samples = features.numel() / channels;
  return reshape(permute(features, {1, 0, 2, 3}), {channels, samples});
}

Tensor deep_whiten(const Tensor& c) {
  if (c.ndim() != 2) throw ShapeError("deep_whiten expects [C, N], got " + shape_str(c.shape()));
  return c - expand(mean(c, {1}, true), c.shape());
}

Tensor group_covariance(const Tensor& c, const GroupSpec& spec) {
  if (c.ndim() != 2 || c.dim(0) != spec.channels) {
    throw ShapeError("group_covariance expects [" + std::to_string(spec.channels) +
                     ", N], got " + shape_str(c.shape()));
  }
  const std::size_t samples = c.dim(1);
  if (samples < 2) {
    throw DegenerateSampleError("covariance needs at least 2 samples, got " +
                                std::to_string(samples));
  }
  const Tensor grouped = group_split(c, spec.groups);  // [G, d, N]
  const Tensor centered = grouped - expand(mean(grouped, {2}, true), grouped.shape());
  return scale(bmm(centered, transpose(centered)), 1.0 / static_cast<double>(samples - 1));
}

Tensor whitening_regularizer(const Tensor& c, const GroupSpec& spec) {
  if (c.ndim() == 2 && c.dim(0) % spec.groups != 0) {
    throw GroupDivisibilityError("channel count " + std::to_string(c.dim(0)) +
                                 " is not divisible by " + std::to_string(spec.groups) +
                                 " groups");
  }
  return mean_offset_from_identity(group_covariance(c, spec));
}

ColumnFactors column_normalize(const Tensor& s_ct) {
  require_square_stack(s_ct, "column_normalize");
  const Tensor norms = clamp_min(sqrt(sum(square(s_ct), {1}, true)), 1e-8);  // [K, 1, d]
  return ColumnFactors{s_ct / expand(norms, s_ct.shape()),
                       reshape(norms, {s_ct.dim(0), s_ct.dim(2)})};
}

Tensor coloring_regularizer(const Tensor& u) {
  require_square_stack(u, "coloring_regularizer");
  return mean_offset_from_identity(bmm(transpose(u), u));
}

Tensor coloring_regularizer(std::span<const Tensor> per_group_u) {
  return coloring_regularizer(stack(per_group_u));
}

StyleSummary build_coloring(const Tensor& s_ct_groups) {
  require_square_stack(s_ct_groups, "build_coloring");
  const std::size_t groups = s_ct_groups.dim(0);
  const std::size_t d = s_ct_groups.dim(1);
  const ColumnFactors f = column_normalize(s_ct_groups);
  const Tensor ud = f.u * expand(reshape(f.d, {groups, 1, d}), f.u.shape());
  const Tensor ct = bmm(ud, transpose(f.u));
  return StyleSummary{ct, f.u, block_diag(ct), Tensor::zeros({groups * d})};
}

StyleSummary build_coloring(std::span<const Tensor> s_ct_groups) {
  if (s_ct_groups.empty()) throw ArgumentError("build_coloring needs at least one group");
  for (const auto& g : s_ct_groups) {
    if (g.shape() != s_ct_groups[0].shape()) {
      throw ShapeError("build_coloring: group size mismatch " +
                       shape_str(s_ct_groups[0].shape()) + " vs " + shape_str(g.shape()));
    }
  }
  return build_coloring(stack(s_ct_groups));
}

BatchStyle build_coloring_batch(const Tensor& s_ct, const Tensor& s_mu) {
  if (s_ct.ndim() != 4 || s_ct.dim(2) != s_ct.dim(3)) {
    throw ShapeError("build_coloring_batch expects [B, G, d, d], got " + shape_str(s_ct.shape()));
  }
  const std::size_t batch = s_ct.dim(0), groups = s_ct.dim(1), d = s_ct.dim(2);
  if (s_mu.ndim() != 2 || s_mu.dim(0) != batch || s_mu.dim(1) != groups * d) {
    throw ShapeError("build_coloring_batch: mean shape " + shape_str(s_mu.shape()) +
                     " does not match " + shape_str(s_ct.shape()));
  }
  const Tensor flat = reshape(s_ct, {batch * groups, d, d});
  const ColumnFactors f = column_normalize(flat);
  const Tensor ud = f.u * expand(reshape(f.d, {batch * groups, 1, d}), f.u.shape());
  const Tensor ct = reshape(bmm(ud, transpose(f.u)), {batch, groups, d, d});
  const Tensor u = reshape(f.u, {batch, groups, d, d});

  BatchStyle out{{}, f.u};
  out.samples.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor ct_b = select(ct, b);
    out.samples.push_back(StyleSummary{ct_b, select(u, b), block_diag(ct_b), select(s_mu, b)});
  }
  return out;
}

Tensor apply_groupwise(const Tensor& per_group_ct, const Tensor& c_w) {
  require_square_stack(per_group_ct, "apply_groupwise");
  const std::size_t groups = per_group_ct.dim(0);
  const std::size_t d = per_group_ct.dim(1);
  if (c_w.ndim() != 2 || c_w.dim(0) != groups * d) {
    throw ShapeError("apply_groupwise: blocks " + shape_str(per_group_ct.shape()) +
                     " vs feature " + shape_str(c_w.shape()));
  }
  return group_merge(bmm(per_group_ct, group_split(c_w, groups)));
}

Tensor gdwct_forward(const Tensor& c, const StyleSummary& style, const AlphaBlend& blend) {
  if (c.ndim() != 3) throw ShapeError("gdwct_forward expects [C, H, W], got " + shape_str(c.shape()));
  const std::size_t channels = c.dim(0);
  if (style.x.shape() != Shape{channels, channels} || style.s_mu.numel() != channels) {
    throw ShapeError("gdwct_forward: content has " + std::to_string(channels) +
                     " channels, coloring matrix is " + shape_str(style.x.shape()) +
                     ", mean is " + shape_str(style.s_mu.shape()));
  }
  const Tensor flat = flatten_spatial(c);
  // Only the diagonal blocks of X are multiplied.
  const Tensor colored =
      apply_groupwise(style.per_group_ct, deep_whiten(flat)) +
      expand(reshape(style.s_mu, {channels, 1}), flat.shape());
  const Tensor alpha = blend.alpha();
  const Tensor out = alpha * colored + add_scalar(neg(alpha), 1.0) * flat;
  return reshape(out, c.shape());
}

}  // namespace gdwct
