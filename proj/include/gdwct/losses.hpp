#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gdwct/tensor.hpp"

namespace gdwct {

struct LossWeights {
  double lambda_latent = 1.0;
  double lambda_pixel = 10.0;
  double lambda_w = 0.001;
  double lambda_c = 10.0;
};

// Mean absolute difference; ShapeError unless shapes agree.
Tensor style_consistency(const Tensor& s_translated, const Tensor& s_reference);
Tensor content_consistency(const Tensor& c_translated, const Tensor& c_source);
Tensor pixel_l1(const Tensor& a, const Tensor& b);

// LSGAN, averaged over discriminator scales:
//   D: 1/2 E[(D(x) - 1)^2] + 1/2 E[D(x_fake)^2]
//   G: 1/2 E[(D(x_fake) - 1)^2]
// The fake scores passed to lsgan_d must come from detached images.
Tensor lsgan_d(std::span<const Tensor> real_scores, std::span<const Tensor> fake_scores);
Tensor lsgan_g(std::span<const Tensor> fake_scores);

// Generator-side terms. Each symmetric term already sums both directions.
struct GeneratorTerms {
  Tensor adv_g_a, adv_g_b;
  Tensor style, content, cycle;
  Tensor identity_a, identity_b;
  Tensor r_w, r_c;
};

// adv_a + adv_b + l_latent (style + content) + l_pixel (cycle + id_a + id_b)
//   + l_w R_w + l_c R_c
Tensor total_generator(const GeneratorTerms& terms, const LossWeights& weights);

struct LossReport {
  double style = 0, content = 0, cycle = 0;
  double identity_a = 0, identity_b = 0;
  double adv_g_a = 0, adv_g_b = 0;
  double adv_d_a = 0, adv_d_b = 0;
  double r_w = 0, r_c = 0;
  double total_g = 0, total_d = 0;

  // Every field in a fixed order, as (name, value).
  std::vector<std::pair<std::string, double>> fields() const;
  bool all_finite() const;
};

LossReport make_report(const GeneratorTerms& terms, const Tensor& total_g, const Tensor& adv_d_a,
                       const Tensor& adv_d_b);

}  // namespace gdwct
