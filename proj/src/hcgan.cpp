#include "sandwich/hcgan.h"

#include <cmath>
#include <cstdio>

#include "sandwich/errors.h"
#include "sandwich/meta.h"

namespace sandwich {

namespace {

constexpr int kConvOutLength = (kSongPhrases - 3) / 2 + 1;  // after the stride-2 convolution

std::vector<torch::Tensor> generator_parameters(Lcvae& lcvae, Gvae& gvae, bool train_local) {
  std::vector<torch::Tensor> out;
  for (auto* m : {static_cast<torch::nn::Module*>(gvae->decoder_init.get()),
                  static_cast<torch::nn::Module*>(gvae->decoder.get()),
                  static_cast<torch::nn::Module*>(gvae->decoder_out.get())})
    for (auto& p : m->parameters()) out.push_back(p);
  if (train_local)
    for (auto& [name, m] : lcvae->decoder_parts())
      for (auto& p : m->parameters()) out.push_back(p);
  return out;
}

void check_finite(const GanStepLog& log) {
  for (const double v : {log.wasserstein, log.gp, log.critic_loss, log.generator_loss})
    if (!std::isfinite(v)) throw DivergenceError("hcgan produced a non-finite value at step " + std::to_string(log.step));
}

}  // namespace

void GanConfig::validate() const {
  if (!(gp_weight >= 0.0)) throw RangeError("gan gp_weight must be >= 0");
  if (critic_steps < 1) throw RangeError("gan critic_steps must be >= 1");
  if (batch_size <= 0 || steps < 0 || conv_channels <= 0) throw RangeError("gan batch/steps/channels out of range");
}

std::map<std::string, std::string> GanConfig::to_meta() const {
  return {{"gan.gp_weight", meta_value(gp_weight)},
          {"gan.critic_steps", meta_value(critic_steps)},
          {"gan.learning_rate", meta_value(learning_rate)},
          {"gan.beta1", meta_value(beta1)},
          {"gan.beta2", meta_value(beta2)},
          {"gan.batch_size", meta_value(batch_size)},
          {"gan.steps", meta_value(steps)},
          {"gan.conv_channels", meta_value(conv_channels)},
          {"gan.train_local_decoder", meta_value(train_local_decoder)},
          {"gan.train_shared_encoder", meta_value(train_shared_encoder)},
          {"gan.seed", meta_value(seed)}};
}

GanConfig GanConfig::from_meta(const std::map<std::string, std::string>& meta) {
  GanConfig c;
  read_meta(meta, "gan.gp_weight", c.gp_weight);
  read_meta(meta, "gan.critic_steps", c.critic_steps);
  read_meta(meta, "gan.learning_rate", c.learning_rate);
  read_meta(meta, "gan.beta1", c.beta1);
  read_meta(meta, "gan.beta2", c.beta2);
  read_meta(meta, "gan.batch_size", c.batch_size);
  read_meta(meta, "gan.steps", c.steps);
  read_meta(meta, "gan.conv_channels", c.conv_channels);
  read_meta(meta, "gan.train_local_decoder", c.train_local_decoder);
  read_meta(meta, "gan.train_shared_encoder", c.train_shared_encoder);
  read_meta(meta, "gan.seed", c.seed);
  return c;
}

CriticImpl::CriticImpl(int encoder_hidden, int channels) {
  encoder = register_module("encoder", Lstm(kPitchCount, encoder_hidden));
  conv1 = register_module("conv1",
                          torch::nn::Conv1d(torch::nn::Conv1dOptions(encoder_hidden, channels, 3).padding(1)));
  conv2 = register_module("conv2", torch::nn::Conv1d(torch::nn::Conv1dOptions(channels, channels, 3).stride(2)));
  head = register_module("head", torch::nn::Linear(channels * kConvOutLength, 1));
}

torch::Tensor CriticImpl::forward(const torch::Tensor& songs) {
  const auto batch = as_song_batch(songs);
  const auto b = batch.size(0);
  const auto features = encoder->forward(batch.reshape({b * kSongPhrases, kPhraseSteps, kPitchCount})).h;
  auto x = features.view({b, kSongPhrases, -1}).transpose(1, 2);  // [B, H, 17]
  x = torch::leaky_relu(conv1->forward(x), 0.2);
  x = torch::leaky_relu(conv2->forward(x), 0.2);
  return head->forward(x.flatten(1)).squeeze(1);
}

Critic make_critic(Lcvae& lcvae, const GanConfig& config) {
  config.validate();
  torch::manual_seed(derive_seed(config.seed, 0xC417));
  Critic critic(lcvae->config.intermediate_dim, config.conv_channels);
  copy_parameters(*lcvae->encoder, *critic->encoder);
  return critic;
}

torch::Tensor interpolate(const torch::Tensor& real, const torch::Tensor& fake, Rng& rng) {
  if (real.sizes() != fake.sizes()) throw ShapeError("real and fake batches differ in shape");
  std::vector<std::int64_t> shape(static_cast<std::size_t>(real.dim()), 1);
  shape[0] = real.size(0);
  const auto alpha = rng.uniform(shape, real.scalar_type());
  return alpha * real + (1 - alpha) * fake;
}

torch::Tensor gradient_penalty(const torch::Tensor& real, const torch::Tensor& fake, const CriticFn& critic,
                               Rng& rng) {
  // the penalty is defined through input gradients, so it needs autograd even under a no-grad guard
  torch::AutoGradMode enable(true);
  const auto x_hat = interpolate(real.detach(), fake.detach(), rng).requires_grad_(true);
  const auto scores = critic(x_hat);
  torch::Tensor grads;
  if (scores.requires_grad())
    grads = torch::autograd::grad({scores.sum()}, {x_hat}, {}, /*retain_graph=*/true, /*create_graph=*/true,
                                  /*allow_unused=*/true)[0];
  if (!grads.defined()) grads = torch::zeros_like(x_hat);
  const auto norms = grads.flatten(1).norm(2, 1);
  return (norms - 1).pow(2).mean();
}

CriticLoss critic_loss(const torch::Tensor& real, const torch::Tensor& fake, const CriticFn& critic,
                       double gp_weight, Rng& rng) {
  CriticLoss out;
  const auto real_score = critic(real).mean();
  const auto fake_score = critic(fake).mean();
  out.wasserstein = real_score - fake_score;
  out.gp = gradient_penalty(real, fake, critic, rng);
  out.loss = fake_score - real_score + gp_weight * out.gp;
  return out;
}

torch::Tensor generator_loss(const torch::Tensor& fake, const CriticFn& critic) { return -critic(fake).mean(); }

torch::Tensor generator(Lcvae& lcvae, Gvae& gvae, const torch::Tensor& z, const torch::Tensor& labels, Rng* rng) {
  return torch::sigmoid(song_logits_from_z(lcvae, gvae, z, labels, rng));
}

std::string format_gan_line(const GanStepLog& s) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f\t%.6f", s.step, s.wasserstein, s.gp, s.critic_loss,
                s.generator_loss);
  return buf;
}

HcganTrainer::HcganTrainer(Lcvae lcvae, Gvae gvae, Critic critic, torch::Tensor songs, torch::Tensor labels,
                           const GanConfig& config)
    : lcvae_(std::move(lcvae)),
      gvae_(std::move(gvae)),
      critic_(std::move(critic)),
      songs_(as_song_batch(songs)),
      labels_(labels.to(torch::kInt64)),
      config_(config),
      critic_opt_(critic_->parameters(),
                  torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, config.beta2})),
      gen_opt_(generator_parameters(lcvae_, gvae_, config.train_local_decoder),
               torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, config.beta2})) {
  config_.validate();
  if (songs_.size(0) == 0) throw EmptyInputError("no training songs");
  if (labels_.dim() != 2 || labels_.size(0) != songs_.size(0) || labels_.size(1) != kSongPhrases)
    throw ShapeError("song labels must be [N, 17]");
  set_requires_grad(*lcvae_, false);
  set_requires_grad(*gvae_, false);
  for (auto& p : generator_parameters(lcvae_, gvae_, config_.train_local_decoder)) p.set_requires_grad(true);
  set_requires_grad(*critic_->encoder, config_.train_shared_encoder);
  for (std::size_t i = 0; auto& p : generator_parameters(lcvae_, gvae_, config_.train_local_decoder))
    gen_params_.emplace_back("gen." + std::to_string(i++), p);
}

torch::Tensor HcganTrainer::fake_batch(const torch::Tensor& labels, Rng& rng) {
  const auto z = rng.normal({labels.size(0), gvae_->config.latent_dim});
  return generator(lcvae_, gvae_, z, labels, &rng);
}

GanStepLog HcganTrainer::step() {
  Rng rng(derive_seed(config_.seed, static_cast<std::uint64_t>(step_)));
  const auto n = songs_.size(0);
  const auto bs = std::min<std::int64_t>(config_.batch_size, n);
  auto draw = [&] {
    const auto perm = rng.permutation(n);
    return torch::tensor(std::vector<std::int64_t>(perm.begin(), perm.begin() + bs), torch::kInt64);
  };
  const CriticFn critic_fn = [&](const torch::Tensor& x) { return critic_->forward(x); };

  GanStepLog log;
  log.step = step_ + 1;
  critic_->train();
  for (int i = 0; i < config_.critic_steps; ++i) {
    const auto idx = draw();
    const auto real = songs_.index_select(0, idx).to(torch::kFloat32).view({bs, kSongSteps, kPitchCount});
    torch::Tensor fake;
    {
      torch::NoGradGuard guard;
      fake = fake_batch(labels_.index_select(0, idx), rng);
    }
    critic_opt_.zero_grad();
    const auto c = critic_loss(real, fake, critic_fn, config_.gp_weight, rng);
    c.loss.backward();
    critic_opt_.step();
    log.wasserstein = c.wasserstein.item<double>();
    log.gp = c.gp.item<double>();
    log.critic_loss = c.loss.item<double>();
    if (!std::isfinite(log.critic_loss)) check_finite(log);
  }

  const auto idx = draw();
  const auto fake = fake_batch(labels_.index_select(0, idx), rng);
  gen_opt_.zero_grad();
  critic_opt_.zero_grad();
  const auto g = generator_loss(fake, critic_fn);
  g.backward();
  gen_opt_.step();
  critic_opt_.zero_grad();
  log.generator_loss = g.item<double>();
  check_finite(log);
  ++step_;
  return log;
}

void HcganTrainer::save(Checkpoint& ck) const {
  ck.set_meta("train.step", std::to_string(step_));
  ck.add_adam_state("adam.critic", const_cast<torch::optim::Adam&>(critic_opt_), named_params("critic", *critic_));
  ck.add_adam_state("adam.gen", const_cast<torch::optim::Adam&>(gen_opt_), gen_params_);
}

void HcganTrainer::restore(const Checkpoint& ck) {
  ck.load_module("lcvae", *lcvae_);
  ck.load_module("gvae", *gvae_);
  ck.load_module("critic", *critic_);
  if (ck.has_meta("train.step")) step_ = std::stoi(ck.meta("train.step"));
  if (ck.has_adam_state("adam.critic"))
    ck.load_adam_state("adam.critic", critic_opt_, named_params("critic", *critic_));
  if (ck.has_adam_state("adam.gen")) ck.load_adam_state("adam.gen", gen_opt_, gen_params_);
}

HcganTrainer make_hcgan_trainer(const Checkpoint* lcvae_ck, const Checkpoint* hcvae_ck, torch::Tensor songs,
                                torch::Tensor labels, const GanConfig& config) {
  if (lcvae_ck == nullptr || hcvae_ck == nullptr)
    throw MissingPretrainError("hcgan training needs the pretrained lcvae and hcvae checkpoints");
  auto lcvae = lcvae_from_checkpoint(*lcvae_ck);
  auto gvae = gvae_from_checkpoint(*hcvae_ck, lcvae);
  auto critic = make_critic(lcvae, config);
  return HcganTrainer(std::move(lcvae), std::move(gvae), std::move(critic), std::move(songs), std::move(labels),
                      config);
}

std::vector<GanStepLog> train_hcgan(HcganTrainer& trainer, const GanCallbacks& callbacks) {
  std::vector<GanStepLog> history;
  while (trainer.steps_done() < trainer.config().steps) {
    history.push_back(trainer.step());
    if (callbacks.on_step) callbacks.on_step(history.back());
  }
  return history;
}

Checkpoint hcgan_checkpoint(HcganTrainer& trainer, const std::string& hcvae_hash) {
  Checkpoint ck("hcgan");
  for (const auto& [k, v] : trainer.config().to_meta()) ck.set_meta(k, v);
  for (const auto& [k, v] : trainer.lcvae()->config.to_meta()) ck.set_meta(k, v);
  for (const auto& [k, v] : trainer.gvae()->config.to_meta()) ck.set_meta(k, v);
  ck.set_meta("gvae.phrase_latent_dim", meta_value(trainer.gvae()->phrase_latent_dim));
  ck.set_meta("hcvae_hash", hcvae_hash);
  ck.add_module("lcvae", *trainer.lcvae());
  ck.add_module("gvae", *trainer.gvae());
  ck.add_module("critic", *trainer.critic());
  return ck;
}

HcganModels hcgan_from_checkpoint(const Checkpoint& ck) {
  ck.expect_kind("hcgan");
  const auto& meta = ck.all_meta();
  HcganModels m;
  m.lcvae = Lcvae(LcvaeConfig::from_meta(meta));
  ck.load_module("lcvae", *m.lcvae);
  int phrase_latent = 0;
  parse_value("gvae.phrase_latent_dim", ck.meta("gvae.phrase_latent_dim"), phrase_latent);
  m.gvae = Gvae(GvaeConfig::from_meta(meta), phrase_latent);
  ck.load_module("gvae", *m.gvae);
  const auto gan = GanConfig::from_meta(meta);
  m.critic = Critic(m.lcvae->config.intermediate_dim, gan.conv_channels);
  ck.load_module("critic", *m.critic);
  return m;
}

}  // namespace sandwich
