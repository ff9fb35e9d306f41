#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>

#include "gradcheck.h"
#include "sandwich/errors.h"
#include "sandwich/lcvae.h"
#include "test_util.h"

namespace sandwich {
namespace {

LcvaeConfig tiny_config() {
  LcvaeConfig c;
  c.latent_dim = 4;
  c.intermediate_dim = 8;
  c.class_count = 5;
  c.seed = 3;
  return c;
}

torch::Tensor random_phrases(std::mt19937_64& rng, int n) {
  std::vector<Phrase> phrases;
  for (int i = 0; i < n; ++i) phrases.emplace_back(testing::random_song_grid(rng, kPhraseSteps));
  return phrases_to_tensor(phrases);
}

// log density of N(m, s2) at x
double log_normal(double x, double m, double s2) {
  return -0.5 * (std::log(2 * M_PI * s2) + (x - m) * (x - m) / s2);
}

// KL(N(m, s2) || N(c, 1)) in one dimension by adaptive Gauss-Kronrod quadrature.
double kl_1d_quadrature(double m, double s2, double c) {
  const double s = std::sqrt(s2);
  auto integrand = [&](double x) {
    const double lp = log_normal(x, m, s2);
    return std::exp(lp) * (lp - log_normal(x, c, 1.0));
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, m - 14 * s, m + 14 * s, 15,
                                                                        1e-13);
}

TEST(KlLoss, SubstitutionExamples) {
  auto zero = kl_loss(torch::zeros({1, 3}), torch::zeros({1, 3}), torch::zeros({1, 3}));
  EXPECT_DOUBLE_EQ(zero.item<double>(), 0.0);
  auto half = kl_loss(torch::ones({1, 1}, torch::kFloat64), torch::zeros({1, 1}, torch::kFloat64),
                      torch::zeros({1, 1}, torch::kFloat64));
  EXPECT_DOUBLE_EQ(half.item<double>(), 0.5);
}

TEST(KlLoss, MatchesNumericalIntegration) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mean(-3, 3), log_var(-2.5, 1.5);
  std::uniform_int_distribution<int> dims(1, 4);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dims(rng);
    std::vector<double> mu(d), lv(d), cm(d);
    double oracle = 0;
    for (int i = 0; i < d; ++i) {
      mu[i] = mean(rng);
      lv[i] = log_var(rng);
      cm[i] = mean(rng);
      // independent dimensions: the joint KL is the sum of marginal KLs
      oracle += kl_1d_quadrature(mu[i], std::exp(lv[i]), cm[i]);
    }
    const auto opts = torch::kFloat64;
    const double closed = kl_loss(torch::tensor(mu, opts).unsqueeze(0), torch::tensor(lv, opts).unsqueeze(0),
                                  torch::tensor(cm, opts).unsqueeze(0))
                              .item<double>();
    worst = std::max(worst, std::abs(closed - oracle));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(KlLoss, TwoDimensionalJointIntegral) {
  // Nested quadrature over the full 2-d density, no factorization assumed.
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double m[2] = {0.4, -1.1}, s2[2] = {0.6, 1.8}, c[2] = {-0.3, 0.2};
  auto log_p = [&](double x, double y) { return log_normal(x, m[0], s2[0]) + log_normal(y, m[1], s2[1]); };
  auto log_q = [&](double x, double y) { return log_normal(x, c[0], 1) + log_normal(y, c[1], 1); };
  const double sx = std::sqrt(s2[0]), sy = std::sqrt(s2[1]);
  const double oracle = GK::integrate(
      [&](double x) {
        return GK::integrate(
            [&](double y) {
              const double lp = log_p(x, y);
              return std::exp(lp) * (lp - log_q(x, y));
            },
            m[1] - 14 * sy, m[1] + 14 * sy, 15, 1e-13);
      },
      m[0] - 14 * sx, m[0] + 14 * sx, 15, 1e-13);
  const auto opts = torch::kFloat64;
  const double closed = kl_loss(torch::tensor({m[0], m[1]}, opts), torch::tensor({std::log(s2[0]), std::log(s2[1])}, opts),
                                torch::tensor({c[0], c[1]}, opts))
                            .item<double>();
  EXPECT_NEAR(closed, oracle, 1e-6);
}

TEST(KlLoss, NonNegativeWithEqualityAtPrior) {
  torch::manual_seed(0);
  const auto mu = torch::randn({1000, 6}, torch::kFloat64) * 2;
  const auto lv = torch::randn({1000, 6}, torch::kFloat64);
  const auto cm = torch::randn({1000, 6}, torch::kFloat64);
  EXPECT_GE(kl_loss(mu, lv, cm).min().item<double>(), 0.0);
  EXPECT_EQ(kl_loss(cm, torch::zeros_like(cm), cm).abs().max().item<double>(), 0.0);
}

TEST(Sample, ZeroNoiseIsIdentity) {
  const auto mu = torch::randn({3, 32});
  const EncoderOutput out{mu, torch::randn({3, 32})};
  EXPECT_TRUE(torch::equal(sample(out, 0.01, nullptr), mu));
  EXPECT_TRUE(torch::equal(reparameterize(mu, out.log_var, torch::zeros_like(mu)), mu));
}

TEST(Sample, SingleDimensionArithmetic) {
  const auto z = reparameterize(torch::tensor({1.0}, torch::kFloat64), torch::tensor({std::log(4.0)}, torch::kFloat64),
                                torch::tensor({0.1}, torch::kFloat64));
  EXPECT_NEAR(z.item<double>(), 1.2, 1e-12);
}

TEST(Sample, MonteCarloVarianceMatches) {
  for (const double eps_var : {0.01, 0.1}) {
    const auto log_var = torch::tensor({-1.0, 0.0, 0.7, 1.5}, torch::kFloat64);
    const auto mu = torch::tensor({0.3, -2.0, 5.0, 0.0}, torch::kFloat64);
    const int n = 100000;
    Rng rng(99);
    const EncoderOutput out{mu.expand({n, 4}), log_var.expand({n, 4})};
    const auto diff = sample(out, eps_var, &rng) - out.mu;
    const auto var = diff.var(0);
    const auto expected = torch::exp(log_var) * eps_var;
    const double worst = ((var - expected).abs() / expected).max().item<double>();
    EXPECT_LT(worst, 0.05) << "eps_var " << eps_var;
  }
}

TEST(Encode, ShapesAndDeterminism) {
  auto model = make_lcvae(tiny_config());
  std::mt19937_64 rng(1);
  const auto x = random_phrases(rng, 3);
  const auto a = model->encode(x);
  const auto b = model->encode(x);
  EXPECT_EQ(a.mu.sizes(), (std::vector<std::int64_t>{3, 4}));
  EXPECT_EQ(a.log_var.sizes(), (std::vector<std::int64_t>{3, 4}));
  EXPECT_TRUE(torch::equal(a.mu, b.mu));
  EXPECT_TRUE(torch::equal(a.log_var, b.log_var));
  EXPECT_EQ(model->encode(x[0]).mu.size(0), 1);
  EXPECT_THROW(model->encode(torch::zeros({49, 128})), ShapeError);
  EXPECT_THROW(model->encode(torch::zeros({2, 50, 127})), ShapeError);
}

TEST(Encode, DefaultWidths) {
  LcvaeConfig c;
  c.intermediate_dim = 256;
  auto model = make_lcvae(c);
  const auto out = model->encode(torch::zeros({50, 128}));
  EXPECT_EQ(out.mu.size(1), 32);
  EXPECT_EQ(model->encoder->hidden_size, 256);
}

TEST(ClassMean, IsWeightColumn) {
  auto model = make_lcvae(tiny_config());
  for (int label = 0; label < 5; ++label) {
    const auto cm = model->class_mean(torch::tensor({static_cast<std::int64_t>(label)}));
    EXPECT_TRUE(torch::equal(cm[0], model->class_means->weight.select(1, label)));
    EXPECT_TRUE(torch::equal(cm, model->class_mean(torch::tensor({static_cast<std::int64_t>(label)}))));
  }
  EXPECT_THROW(model->class_mean(torch::tensor({5L})), RangeError);
  EXPECT_THROW(model->class_mean(torch::tensor({-1L})), RangeError);
}

TEST(Decode, ShapeRangeDeterminism) {
  auto model = make_lcvae(tiny_config());
  const auto z = torch::randn({2, 4});
  const auto a = model->decode(z);
  EXPECT_EQ(a.sizes(), (std::vector<std::int64_t>{2, 50, 128}));
  EXPECT_GE(a.min().item<double>(), 0.0);
  EXPECT_LE(a.max().item<double>(), 1.0);
  EXPECT_TRUE(torch::equal(a, model->decode(z)));
  EXPECT_THROW(model->decode(torch::zeros({2, 5})), ShapeError);
}

TEST(TotalLoss, BoundedBelowByKl) {
  auto model = make_lcvae(tiny_config());
  std::mt19937_64 rng(5);
  const auto x = random_phrases(rng, 4);
  const auto labels = torch::tensor({0L, 1L, 2L, 4L});
  Rng noise(5);
  const auto parts = total_loss(model, x, labels, noise.normal({4, 4}, 0.01));
  EXPECT_GE(parts.total.item<double>(), parts.kl.item<double>());
  EXPECT_GE(parts.recon.item<double>(), 0.0);
  EXPECT_TRUE(std::isfinite(parts.total.item<double>()));
}

TEST(TotalLoss, VanishesForPerfectReconstructionAtPrior) {
  // saturated logits and mu == cm, sigma^2 == 1 drive both terms to zero
  const auto target = torch::zeros({1, 50, 128}, torch::kFloat64);
  const auto logits = torch::full({1, 50, 128}, -40.0, torch::kFloat64);
  EXPECT_LT(reconstruction_loss(logits, target).item<double>(), 1e-12);
  const auto cm = torch::randn({1, 4}, torch::kFloat64);
  EXPECT_EQ(kl_loss(cm, torch::zeros_like(cm), cm).item<double>(), 0.0);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  auto model = make_lcvae(tiny_config());
  model->to(torch::kFloat64);
  std::mt19937_64 rng(8);
  const auto x = random_phrases(rng, 2).to(torch::kFloat64);
  const auto labels = torch::tensor({1L, 3L});
  Rng noise(8);
  const auto eps = noise.normal({2, 4}, 0.01, torch::kFloat64);
  const auto result = testing::finite_difference_check(
      [&] { return total_loss(model, x, labels, eps).total; }, model->parameters(), 150, 17);
  EXPECT_EQ(result.checked, 150);
  EXPECT_LT(result.max_rel_error, 1e-4) << "analytic " << result.worst_analytic << " numeric "
                                        << result.worst_numeric;
}

TEST(Training, DeterministicLossCurve) {
  auto cfg = tiny_config();
  cfg.batch_size = 4;
  cfg.epochs = 2;
  std::mt19937_64 rng(2);
  const auto x = random_phrases(rng, 10);
  const auto labels = torch::randint(0, 5, {10}, torch::kInt64);
  auto run = [&] {
    LcvaeTrainer trainer(make_lcvae(cfg), x, labels);
    std::vector<std::string> lines;
    for (const auto& s : train_lcvae(trainer)) lines.push_back(format_epoch_line(s));
    return std::make_pair(lines, module_hash(*trainer.model()));
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.first.size(), 2u);
}

TEST(Training, ResumeContinuesTrajectory) {
  auto cfg = tiny_config();
  cfg.batch_size = 4;
  cfg.epochs = 3;
  std::mt19937_64 rng(4);
  const auto x = random_phrases(rng, 9);
  const auto labels = torch::randint(0, 5, {9}, torch::kInt64);

  LcvaeTrainer straight(make_lcvae(cfg), x, labels);
  const auto full = train_lcvae(straight);

  auto short_cfg = cfg;
  short_cfg.epochs = 1;
  LcvaeTrainer first(make_lcvae(short_cfg), x, labels);
  train_lcvae(first);
  auto ck = lcvae_checkpoint(first.model(), "d");
  first.save(ck);
  const auto reloaded = Checkpoint::decode(ck.encode());

  LcvaeTrainer resumed(make_lcvae(cfg), x, labels);
  resumed.restore(reloaded);
  EXPECT_EQ(resumed.epoch(), 1);
  const auto rest = train_lcvae(resumed);
  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(format_epoch_line(rest.back()), format_epoch_line(full.back()));
  EXPECT_EQ(module_hash(*resumed.model()), module_hash(*straight.model()));
}

TEST(Training, NonFiniteLossIsDivergence) {
  auto cfg = tiny_config();
  auto model = make_lcvae(cfg);
  {
    torch::NoGradGuard guard;
    model->to_mu->weight.fill_(std::numeric_limits<float>::quiet_NaN());
  }
  std::mt19937_64 rng(1);
  LcvaeTrainer trainer(model, random_phrases(rng, 4), torch::zeros({4}, torch::kInt64));
  EXPECT_THROW(trainer.run_epoch(), DivergenceError);
}

TEST(Training, LossDecreasesOnSmallCorpus) {
  auto cfg = tiny_config();
  cfg.intermediate_dim = 32;
  cfg.latent_dim = 8;
  cfg.batch_size = 50;
  cfg.epochs = 5;
  std::mt19937_64 rng(6);
  const auto x = random_phrases(rng, 500);
  const auto labels = torch::randint(0, 5, {500}, torch::kInt64);
  LcvaeTrainer trainer(make_lcvae(cfg), x, labels);
  const auto history = train_lcvae(trainer);
  ASSERT_EQ(history.size(), 5u);
  EXPECT_LT(history[4].total, history[0].total);
}

TEST(Training, SingleBatchOverfit) {
  auto cfg = tiny_config();
  cfg.intermediate_dim = 64;
  cfg.latent_dim = 16;
  cfg.learning_rate = 1e-2;
  std::mt19937_64 rng(12);
  const auto x = random_phrases(rng, 8);
  const auto labels = torch::tensor({0L, 1L, 2L, 3L, 4L, 1L, 2L, 3L});
  LcvaeTrainer trainer(make_lcvae(cfg), x, labels);
  Rng noise(12);
  // sparse grids make all-zero output score ~98% on cells, so also require the notes back
  auto note_recall = [&] {
    torch::NoGradGuard guard;
    const auto probs = trainer.model()->decode(trainer.model()->encode(x).mu);
    const auto hit = (probs >= 0.5).to(torch::kFloat32) * x;
    return (hit.sum() / x.sum()).item<double>();
  };
  double accuracy = 0, recall = 0;
  int steps = 0;
  for (; steps < 2000 && (accuracy < 0.99 || recall < 0.6); ++steps) {
    trainer.step(x, labels, noise);
    if (steps % 50 == 49) {
      accuracy = reconstruction_accuracy(trainer.model(), x);
      recall = note_recall();
    }
  }
  EXPECT_GE(accuracy, 0.99) << "after " << steps << " steps";
  EXPECT_GE(recall, 0.6) << "after " << steps << " steps";
  std::printf("overfit: %d steps, cell accuracy %.4f, note recall %.4f\n", steps, accuracy, recall);
}

TEST(GeneratePhrase, FixedSeedIsReproducible) {
  auto model = make_lcvae(tiny_config());
  Rng a(77), b(77);
  const auto p = generate_phrase(model, 2, a);
  const auto q = generate_phrase(model, 2, b);
  EXPECT_EQ(p, q);
  EXPECT_EQ(p.grid().rows(), 50);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  auto model = make_lcvae(tiny_config());
  testing::TempDir dir("lcvae_ck");
  lcvae_checkpoint(model, "abc").save(dir / "m.ckpt");
  const auto ck = Checkpoint::load(dir / "m.ckpt");
  EXPECT_EQ(ck.meta("dictionary_hash"), "abc");
  auto back = lcvae_from_checkpoint(ck);
  std::mt19937_64 rng(3);
  const auto x = random_phrases(rng, 2);
  EXPECT_TRUE(torch::equal(model->encode(x).mu, back->encode(x).mu));
  const auto z = torch::randn({2, 4});
  EXPECT_TRUE(torch::equal(model->decode(z), back->decode(z)));
  EXPECT_EQ(module_hash(*model), module_hash(*back));
  EXPECT_EQ(lcvae_checkpoint(back, "abc").encode(), ck.encode());
  EXPECT_THROW(Checkpoint("hcvae").expect_kind("lcvae"), ProvenanceError);
}

}  // namespace
}  // namespace sandwich
