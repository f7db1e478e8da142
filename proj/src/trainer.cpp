#include "gdwct/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace gdwct {

namespace {

bool has_non_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return true;
  return false;
}

void zero_grads(const ParameterList& params) {
  for (const auto& [name, p] : params) {
    Tensor t = p;
    t.zero_grad();
  }
}

std::string format_u64(std::uint64_t v) { return std::to_string(v); }

std::uint64_t parse_u64(const Checkpoint& ckpt, const std::string& key) {
  const auto it = ckpt.state.find(key);
  if (it == ckpt.state.end()) throw FormatError("checkpoint state is missing '" + key + "'");
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint state '" + key + "' is not an integer");
  }
}

void append_state(Checkpoint& ckpt, const std::string& tag, const ParameterList& params,
                  const OptimizerState& state) {
  ckpt.state["adam_" + tag + "_t"] = format_u64(state.t);
  for (std::size_t i = 0; i < params.size() && i < state.m.size(); ++i) {
    const Shape& shape = params[i].second.shape();
    ckpt.tensors.emplace_back("adam." + tag + ".m." + params[i].first, Tensor(shape, state.m[i]));
    ckpt.tensors.emplace_back("adam." + tag + ".v." + params[i].first, Tensor(shape, state.v[i]));
  }
}

OptimizerState read_state(const Checkpoint& ckpt, const std::string& tag, const ParameterList& params) {
  OptimizerState state;
  state.t = parse_u64(ckpt, "adam_" + tag + "_t");
  if (state.t == 0) return state;
  for (const auto& [name, p] : params) {
    const Tensor* m = ckpt.find("adam." + tag + ".m." + name);
    const Tensor* v = ckpt.find("adam." + tag + ".v." + name);
    if (!m || !v || m->shape() != p.shape() || v->shape() != p.shape())
      throw FormatError("checkpoint optimizer state missing or misshaped for '" + name + "'");
    state.m.push_back(m->vec());
    state.v.push_back(v->vec());
  }
  return state;
}

}  // namespace

void adam_step(const ParameterList& params, OptimizerState& state, double lr, const AdamHyper& hyper) {
  for (const auto& [name, p] : params) {
    if (p.has_grad() && has_non_finite(p.grad()))
      throw NonFiniteError("non-finite gradient in parameter '" + name + "'");
  }
  if (state.m.empty()) {
    for (const auto& [name, p] : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ArgumentError("optimizer state does not match parameters");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].second;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
      v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

double lr_at(std::size_t iter, const TrainConfig& config) {
  if (iter < config.decay_start_iter) return config.lr;
  const std::size_t k = 1 + (iter - config.decay_start_iter) / config.decay_every;
  return config.lr * std::pow(config.decay_rate, static_cast<double>(k));
}

Trainer::Trainer(TrainConfig config, DatasetPair data)
    : config_(std::move(config)),
      data_(std::move(data)),
      model_(TranslationModel::make(config_.net, config_.seed)) {
  config_.validate();
  if (data_.domain_a.empty() || data_.domain_b.empty())
    throw ArgumentError("both dataset domains must be non-empty");
  gen_params_ = model_.generator_parameters();
  disc_params_ = model_.discriminator_parameters();
}

LossReport Trainer::step() {
  return step(data_.batch(Domain::A, iteration_, config_.batch_size),
              data_.batch(Domain::B, iteration_, config_.batch_size));
}

LossReport Trainer::step(const Tensor& x_a, const Tensor& x_b) {
  if (x_a.shape() != x_b.shape()) {
    throw ShapeError("domain batches differ: " + shape_str(x_a.shape()) + " vs " + shape_str(x_b.shape()));
  }
  const DomainModel& A = model_.a;
  const DomainModel& B = model_.b;
  const GroupSpec spec = GroupSpec::make(config_.net.base_channels, config_.net.groups);
  const double lr = lr_at(iteration_, config_);
  const AdamHyper hyper{config_.beta1, config_.beta2, config_.adam_eps};

  // Encode and translate in both directions.
  const Tensor c_a = A.content_encode(x_a), s_a = A.style_encode(x_a);
  const Tensor c_b = B.content_encode(x_b), s_b = B.style_encode(x_b);
  const StyleCode code_a = A.style_code(s_a);
  const StyleCode code_b = B.style_code(s_b);
  const Tensor x_ab = B.generate(c_a, code_b);
  const Tensor x_ba = A.generate(c_b, code_a);
  const Tensor x_aa = A.generate(c_a, code_a);
  const Tensor x_bb = B.generate(c_b, code_b);

  // Re-encode the translations and swap styles back for the cross cycle.
  const Tensor c_ab = B.content_encode(x_ab), s_ab = B.style_encode(x_ab);
  const Tensor c_ba = A.content_encode(x_ba), s_ba = A.style_encode(x_ba);
  const Tensor x_aba = A.generate(c_ab, A.style_code(s_ba));
  const Tensor x_bab = B.generate(c_ba, B.style_code(s_ab));

  // Discriminators first, on detached translations.
  const Tensor adv_d_a = lsgan_d(A.discriminate(x_a), A.discriminate(x_ba.detach()));
  const Tensor adv_d_b = lsgan_d(B.discriminate(x_b), B.discriminate(x_ab.detach()));
  const Tensor loss_d = adv_d_a + adv_d_b;
  if (!std::isfinite(loss_d.item()))
    throw NonFiniteError("non-finite discriminator loss at iteration " + std::to_string(iteration_));
  zero_grads(disc_params_);
  backward(loss_d);
  adam_step(disc_params_, disc_state_, lr, hyper);

  // Generator side against the updated discriminators.
  GeneratorTerms terms{
      lsgan_g(A.discriminate(x_ba)),
      lsgan_g(B.discriminate(x_ab)),
      style_consistency(s_ab, s_b) + style_consistency(s_ba, s_a),
      content_consistency(c_ab, c_a) + content_consistency(c_ba, c_b),
      pixel_l1(x_aba, x_a) + pixel_l1(x_bab, x_b),
      pixel_l1(x_aa, x_a),
      pixel_l1(x_bb, x_b),
      whitening_regularizer(pool_batch(c_a), spec) + whitening_regularizer(pool_batch(c_b), spec),
      coloring_regularizer(code_a.u_all) + coloring_regularizer(code_b.u_all),
  };
  const Tensor loss_g = total_generator(terms, config_.weights);
  const LossReport report = make_report(terms, loss_g, adv_d_a, adv_d_b);
  if (!report.all_finite())
    throw NonFiniteError("non-finite generator loss at iteration " + std::to_string(iteration_));
  zero_grads(gen_params_);
  backward(loss_g);
  adam_step(gen_params_, gen_state_, lr, hyper);

  ++iteration_;
  return report;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = config_;
  ckpt.state["iteration"] = format_u64(iteration_);
  for (const auto& [name, p] : model_.all_parameters()) ckpt.tensors.emplace_back(name, p.detach());
  append_state(ckpt, "g", gen_params_, gen_state_);
  append_state(ckpt, "d", disc_params_, disc_state_);
  return ckpt;
}

void Trainer::save(const std::filesystem::path& path) const { write_checkpoint(path, checkpoint()); }

void Trainer::restore(const Checkpoint& ckpt) {
  // The iteration budget may change between runs; nothing else may.
  TrainConfig saved = ckpt.config;
  saved.total_iters = config_.total_iters;
  if (format_config(saved) != format_config(config_))
    throw ConfigError(0, "checkpoint was written with a different configuration");
  load_parameters(model_.all_parameters(), ckpt);
  gen_state_ = read_state(ckpt, "g", gen_params_);
  disc_state_ = read_state(ckpt, "d", disc_params_);
  iteration_ = parse_u64(ckpt, "iteration");
}

std::string Trainer::metrics_line(std::size_t iter, double lr, const LossReport& report) const {
  nlohmann::ordered_json j;
  j["iter"] = iter;
  j["lr"] = lr;
  for (const auto& [name, value] : report.fields()) j[name] = value;
  auto alphas = [](const DomainModel& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : m.generator.alphas) arr.push_back(a.value());
    return arr;
  };
  j["alpha_a"] = alphas(model_.a);
  j["alpha_b"] = alphas(model_.b);
  return j.dump();
}

}  // namespace gdwct
