#include "gdwct/losses.hpp"

#include <cmath>

namespace gdwct {

namespace {

Tensor mean_abs_diff(const char* who, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  return mean_all(abs(a - b));
}

Tensor mean_over_scales(std::vector<Tensor> terms) {
  if (terms.empty()) throw ArgumentError("adversarial loss needs at least one score map");
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  return scale(total, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

Tensor style_consistency(const Tensor& s_translated, const Tensor& s_reference) {
  return mean_abs_diff("style_consistency", s_translated, s_reference);
}

Tensor content_consistency(const Tensor& c_translated, const Tensor& c_source) {
  return mean_abs_diff("content_consistency", c_translated, c_source);
}

Tensor pixel_l1(const Tensor& a, const Tensor& b) { return mean_abs_diff("pixel_l1", a, b); }

Tensor lsgan_d(std::span<const Tensor> real_scores, std::span<const Tensor> fake_scores) {
  if (real_scores.size() != fake_scores.size()) {
    throw ArgumentError("lsgan_d: " + std::to_string(real_scores.size()) + " real vs " +
                        std::to_string(fake_scores.size()) + " fake score maps");
  }
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < real_scores.size(); ++i) {
    terms.push_back(scale(mean_all(square(add_scalar(real_scores[i], -1.0))), 0.5) +
                    scale(mean_all(square(fake_scores[i])), 0.5));
  }
  return mean_over_scales(std::move(terms));
}

Tensor lsgan_g(std::span<const Tensor> fake_scores) {
  std::vector<Tensor> terms;
  for (const auto& f : fake_scores) terms.push_back(scale(mean_all(square(add_scalar(f, -1.0))), 0.5));
  return mean_over_scales(std::move(terms));
}

Tensor total_generator(const GeneratorTerms& t, const LossWeights& w) {
  return t.adv_g_a + t.adv_g_b + scale(t.style + t.content, w.lambda_latent) +
         scale(t.cycle + t.identity_a + t.identity_b, w.lambda_pixel) + scale(t.r_w, w.lambda_w) +
         scale(t.r_c, w.lambda_c);
}

std::vector<std::pair<std::string, double>> LossReport::fields() const {
  return {{"style", style},         {"content", content},       {"cycle", cycle},
          {"identity_a", identity_a}, {"identity_b", identity_b}, {"adv_g_a", adv_g_a},
          {"adv_g_b", adv_g_b},     {"adv_d_a", adv_d_a},       {"adv_d_b", adv_d_b},
          {"r_w", r_w},             {"r_c", r_c},               {"total_g", total_g},
          {"total_d", total_d}};
}

bool LossReport::all_finite() const {
  for (const auto& [name, value] : fields())
    if (!std::isfinite(value)) return false;
  return true;
}

LossReport make_report(const GeneratorTerms& t, const Tensor& total_g, const Tensor& adv_d_a,
                       const Tensor& adv_d_b) {
  LossReport r;
  r.style = t.style.item();
  r.content = t.content.item();
  r.cycle = t.cycle.item();
  r.identity_a = t.identity_a.item();
  r.identity_b = t.identity_b.item();
  r.adv_g_a = t.adv_g_a.item();
  r.adv_g_b = t.adv_g_b.item();
  r.adv_d_a = adv_d_a.item();
  r.adv_d_b = adv_d_b.item();
  r.r_w = t.r_w.item();
  r.r_c = t.r_c.item();
  r.total_g = total_g.item();
  r.total_d = r.adv_d_a + r.adv_d_b;
  return r;
}

}  // namespace gdwct
