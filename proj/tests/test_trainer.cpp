#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gdwct/trainer.hpp"
#include "json.hpp"

using namespace gdwct;
namespace fs = std::filesystem;

namespace {

// Small enough that a handful of steps run in well under a second.
TrainConfig tiny_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.seed = seed;
  c.net.base_channels = 8;
  c.net.groups = 2;
  c.net.n_res_blocks = 2;
  c.net.n_hops = 2;
  c.net.image_size = 16;
  c.net.mlp_hidden = 8;
  c.net.disc_channels = 4;
  c.net.disc_scales = 1;
  c.synth_per_domain = 4;
  return c;
}

Trainer tiny_trainer(std::uint64_t seed = 0) {
  const TrainConfig c = tiny_config(seed);
  return Trainer(c, synth_dataset(seed, c.synth_per_domain, c.net.image_size));
}

std::vector<std::vector<double>> snapshot(const ParameterList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, p] : params) out.push_back(p.vec());
  return out;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = Tensor::full({3}, 0.7, true);
  p.mutable_grad();  // allocates zeros
  OptimizerState state;
  adam_step({{"p", p}}, state, 1e-4, AdamHyper{});
  for (double v : p.data()) EXPECT_EQ(v, 0.7);
  EXPECT_EQ(state.t, 1u);
}

TEST(Adam, FirstStepWithUnitGradient) {
  Tensor p = Tensor::full({2}, 1.0, true);
  for (double& g : p.mutable_grad()) g = 1.0;
  OptimizerState state;
  adam_step({{"p", p}}, state, 1e-4, AdamHyper{});
  // m_hat = v_hat = 1, so the step is lr / (1 + eps).
  for (double v : p.data()) EXPECT_NEAR(v, 1.0 - 1e-4 / (1.0 + 1e-8), 1e-18);
  EXPECT_EQ(state.m[0].size(), 2u);
  for (double v : state.v[0]) EXPECT_GE(v, 0.0);
}

TEST(Adam, NonFiniteGradientNamesParameterAndChangesNothing) {
  Tensor a = Tensor::full({2}, 1.0, true), b = Tensor::full({2}, 2.0, true);
  for (double& g : a.mutable_grad()) g = 0.5;
  b.mutable_grad()[1] = std::nan("");
  OptimizerState state;
  try {
    adam_step({{"first", a}, {"second", b}}, state, 1e-4, AdamHyper{});
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("second"), std::string::npos);
  }
  EXPECT_EQ(a.data()[0], 1.0);
  EXPECT_EQ(state.t, 0u);
}

TEST(LearningRate, Schedule) {
  TrainConfig c;
  c.decay_start_iter = 100;
  c.decay_every = 50;
  EXPECT_EQ(lr_at(0, c), 1e-4);
  EXPECT_EQ(lr_at(99, c), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(100, c), 0.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(149, c), 0.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(150, c), 0.25e-4);
  EXPECT_DOUBLE_EQ(lr_at(200, c), 0.125e-4);
}

TEST(LearningRate, DeskDefaults) {
  const TrainConfig c;
  EXPECT_EQ(lr_at(999, c), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(1000, c), 0.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(1500, c), 0.25e-4);
}

TEST(Trainer, FirstStepIsFiniteAndPositive) {
  Trainer t = tiny_trainer();
  const LossReport r = t.step();
  EXPECT_TRUE(r.all_finite());
  EXPECT_GT(r.total_g, 0.0);
  EXPECT_GT(r.total_d, 0.0);
  EXPECT_EQ(t.iteration(), 1u);
  const LossWeights w;
  EXPECT_NEAR(r.total_g,
              r.adv_g_a + r.adv_g_b + w.lambda_latent * (r.style + r.content) +
                  w.lambda_pixel * (r.cycle + r.identity_a + r.identity_b) + w.lambda_w * r.r_w +
                  w.lambda_c * r.r_c,
              1e-12 * std::max(1.0, r.total_g));
}

TEST(Trainer, EveryParameterReceivesAGradient) {
  Trainer t = tiny_trainer();
  t.step();
  for (const auto& [name, p] : t.model().all_parameters()) {
    ASSERT_TRUE(p.has_grad()) << name;
    double norm = 0;
    for (double g : p.grad()) norm += std::fabs(g);
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(Trainer, GeneratorStepDoesNotMoveDiscriminators) {
  // Drive the generator group alone through the same machinery: L_G reaches
  // the discriminator weights through the adversarial terms, but only the
  // generator optimizer runs, so the discriminator weights must not move.
  Trainer t = tiny_trainer();
  const auto disc_before = snapshot(t.model().discriminator_parameters());
  const auto gen_before = snapshot(t.model().generator_parameters());
  t.step();
  const auto disc_after = snapshot(t.model().discriminator_parameters());
  const auto gen_after = snapshot(t.model().generator_parameters());
  EXPECT_NE(disc_before, disc_after);  // the D update ran
  EXPECT_NE(gen_before, gen_after);    // the G update ran

  // Replay the D update alone from the same start: it must match exactly,
  // so the G update contributed nothing to the discriminator weights.
  Trainer replay = tiny_trainer();
  const TrainConfig c = tiny_config();
  const DatasetPair& data = replay.data();
  const Tensor x_a = data.batch(Domain::A, 0, c.batch_size), x_b = data.batch(Domain::B, 0, c.batch_size);
  const auto& A = replay.model().a;
  const auto& B = replay.model().b;
  const Tensor fake_ba = A.generate(B.content_encode(x_b), A.style_code(A.style_encode(x_a)));
  const Tensor fake_ab = B.generate(A.content_encode(x_a), B.style_code(B.style_encode(x_b)));
  const Tensor loss_d = lsgan_d(A.discriminate(x_a), A.discriminate(fake_ba.detach())) +
                        lsgan_d(B.discriminate(x_b), B.discriminate(fake_ab.detach()));
  backward(loss_d);
  OptimizerState state;
  adam_step(replay.model().discriminator_parameters(), state, c.lr, {c.beta1, c.beta2, c.adam_eps});
  EXPECT_EQ(snapshot(replay.model().discriminator_parameters()), disc_after);
}

TEST(Trainer, DiscriminatorLossLeavesGeneratorGradientsEmpty) {
  Trainer t = tiny_trainer();
  const auto& A = t.model().a;
  const Tensor x = t.data().batch(Domain::A, 0, 1);
  const Tensor fake = A.generate(A.content_encode(x), A.style_code(A.style_encode(x)));
  for (const auto& [name, p] : t.model().generator_parameters()) {
    Tensor q = p;
    q.zero_grad();
  }
  backward(lsgan_d(A.discriminate(x), A.discriminate(fake.detach())));
  for (const auto& [name, p] : t.model().generator_parameters()) {
    for (double g : p.grad()) ASSERT_EQ(g, 0.0) << name;
  }
}

TEST(Trainer, DeterministicReports) {
  Trainer a = tiny_trainer(5), b = tiny_trainer(5);
  for (int i = 0; i < 3; ++i) {
    const LossReport ra = a.step(), rb = b.step();
    EXPECT_EQ(a.metrics_line(i, lr_at(i, a.config()), ra), b.metrics_line(i, lr_at(i, b.config()), rb));
  }
}

TEST(Trainer, CheckpointResumeReproducesNextStep) {
  const fs::path path = fs::temp_directory_path() / "gdwct_trainer_resume.ckpt";
  Trainer a = tiny_trainer(2);
  a.step();
  a.step();
  a.save(path);
  const LossReport expected = a.step();

  Trainer b = tiny_trainer(2);
  b.restore(read_checkpoint(path));
  EXPECT_EQ(b.iteration(), 2u);
  const LossReport got = b.step();
  EXPECT_EQ(a.metrics_line(2, 0, expected), b.metrics_line(2, 0, got));
  EXPECT_EQ(snapshot(a.model().all_parameters()), snapshot(b.model().all_parameters()));
  fs::remove(path);
}

TEST(Trainer, RestoreRejectsDifferentConfig) {
  Trainer a = tiny_trainer(1);
  Trainer b = tiny_trainer(2);
  EXPECT_THROW(b.restore(a.checkpoint()), ConfigError);

  TrainConfig longer = tiny_config(1);
  longer.total_iters *= 2;
  Trainer c(longer, synth_dataset(1, longer.synth_per_domain, longer.net.image_size));
  a.step();
  EXPECT_NO_THROW(c.restore(a.checkpoint()));
  EXPECT_EQ(c.iteration(), 1u);
}

TEST(Trainer, NonFiniteInputAborts) {
  Trainer t = tiny_trainer();
  const Tensor x = Tensor::full({1, 3, 16, 16}, std::nan(""));
  EXPECT_THROW(t.step(x, x), NonFiniteError);
}

TEST(Trainer, MetricsLineFields) {
  Trainer t = tiny_trainer();
  const LossReport r = t.step();
  const auto j = nlohmann::json::parse(t.metrics_line(0, 1e-4, r));
  EXPECT_EQ(j["iter"], 0);
  EXPECT_EQ(j["lr"], 1e-4);
  for (const auto& [name, value] : r.fields()) EXPECT_EQ(j[name].get<double>(), value) << name;
  EXPECT_EQ(j["alpha_a"].size(), 2u);
  EXPECT_EQ(j["alpha_b"].size(), 2u);
}

TEST(GradientCheck, Scopes) {
  for (const char* scope : {"gdwct", "losses", "networks-small"}) {
    const GradCheckReport r = gradient_check(scope, 2, 1e-4, 11);
    EXPECT_TRUE(r.passed()) << scope << " worst " << r.worst().name << " " << r.worst().max_rel_error;
  }
  EXPECT_THROW(gradient_check("everything", 1, 1e-4, 0), ArgumentError);
}

TEST(GradientCheck, WhiteningRegularizerExample) {
  const GradCheckReport r = gradient_check("gdwct", 3, 1e-4, 12);
  bool found = false;
  for (const auto& e : r.entries) {
    if (e.name == "whitening_regularizer/c" || e.name == "gdwct_forward/alpha") {
      found = true;
      EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
    }
  }
  EXPECT_TRUE(found);
}

TEST(GradientCheck, ConstantLossHasZeroGradient) {
  std::mt19937_64 rng(3);
  Tensor x = Tensor::uniform({4, 5}, -1, 1, rng, true);
  backward(add_scalar(scale(sum_all(x), 0.0), 2.0));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}
