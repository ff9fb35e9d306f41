#include "sandwich/lcvae.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "sandwich/errors.h"
#include "sandwich/meta.h"

namespace sandwich {

void LcvaeConfig::validate() const {
  if (latent_dim <= 0 || intermediate_dim <= 0) throw RangeError("lcvae dims must be positive");
  if (!(eps_var > 0.0)) throw RangeError("lcvae eps_var must be > 0");
  if (batch_size <= 0 || epochs < 0) throw RangeError("lcvae batch_size/epochs out of range");
  if (class_count < 3) throw RangeError("lcvae class_count must be >= 3");
}

std::map<std::string, std::string> LcvaeConfig::to_meta() const {
  return {{"lcvae.latent_dim", meta_value(latent_dim)},
          {"lcvae.intermediate_dim", meta_value(intermediate_dim)},
          {"lcvae.eps_var", meta_value(eps_var)},
          {"lcvae.batch_size", meta_value(batch_size)},
          {"lcvae.class_count", meta_value(class_count)},
          {"lcvae.learning_rate", meta_value(learning_rate)},
          {"lcvae.clip_norm", meta_value(clip_norm)},
          {"lcvae.epochs", meta_value(epochs)},
          {"lcvae.threshold", meta_value(threshold)},
          {"lcvae.seed", meta_value(seed)}};
}

LcvaeConfig LcvaeConfig::from_meta(const std::map<std::string, std::string>& meta) {
  LcvaeConfig c;
  read_meta(meta, "lcvae.latent_dim", c.latent_dim);
  read_meta(meta, "lcvae.intermediate_dim", c.intermediate_dim);
  read_meta(meta, "lcvae.eps_var", c.eps_var);
  read_meta(meta, "lcvae.batch_size", c.batch_size);
  read_meta(meta, "lcvae.class_count", c.class_count);
  read_meta(meta, "lcvae.learning_rate", c.learning_rate);
  read_meta(meta, "lcvae.clip_norm", c.clip_norm);
  read_meta(meta, "lcvae.epochs", c.epochs);
  read_meta(meta, "lcvae.threshold", c.threshold);
  read_meta(meta, "lcvae.seed", c.seed);
  return c;
}

LcvaeImpl::LcvaeImpl(const LcvaeConfig& cfg) : config(cfg) {
  config.validate();
  const int h = config.intermediate_dim;
  const int l = config.latent_dim;
  encoder = register_module("encoder", Lstm(kPitchCount, h));
  to_mu = register_module("to_mu", torch::nn::Linear(h, l));
  to_log_var = register_module("to_log_var", torch::nn::Linear(h, l));
  class_means = register_module(
      "class_means", torch::nn::Linear(torch::nn::LinearOptions(config.class_count, l).bias(false)));
  decoder_init = register_module("decoder_init", torch::nn::Linear(l, 2 * h));
  decoder = register_module("decoder", Lstm(l, h));
  decoder_out = register_module("decoder_out", torch::nn::Linear(h, kPitchCount));

  torch::NoGradGuard guard;
  // unit-scale class means keep classes apart from the first step
  class_means->weight.normal_(0.0, 1.0);
  to_log_var->weight.mul_(0.1);
  to_log_var->bias.zero_();
}

torch::Tensor LcvaeImpl::encode_features(const torch::Tensor& phrases) {
  return encoder->forward(as_phrase_batch(phrases)).h;
}

EncoderOutput LcvaeImpl::encode(const torch::Tensor& phrases) {
  const auto features = encode_features(phrases);
  return {to_mu->forward(features), to_log_var->forward(features)};
}

torch::Tensor LcvaeImpl::class_mean(const torch::Tensor& labels) {
  if (labels.numel() > 0) {
    const auto lo = labels.min().item<std::int64_t>();
    const auto hi = labels.max().item<std::int64_t>();
    if (lo < 0 || hi >= config.class_count)
      throw RangeError("label outside 0.." + std::to_string(config.class_count - 1));
  }
  // one_hot @ W^T selects a weight column per label
  const auto one_hot = torch::one_hot(labels.to(torch::kInt64), config.class_count)
                           .to(class_means->weight.dtype());
  return class_means->forward(one_hot);
}

torch::Tensor LcvaeImpl::decode_logits(const torch::Tensor& z_plus_cm) {
  if (z_plus_cm.dim() != 2 || z_plus_cm.size(1) != config.latent_dim)
    throw ShapeError("decoder input must be [B, " + std::to_string(config.latent_dim) + "]");
  const auto init = decoder_init->forward(z_plus_cm).chunk(2, 1);
  const auto h0 = torch::tanh(init[0]);
  const auto c0 = init[1];
  const auto inputs = z_plus_cm.unsqueeze(1).expand({z_plus_cm.size(0), kPhraseSteps, config.latent_dim});
  const auto out = decoder->forward(inputs, h0, c0);
  return decoder_out->forward(out.sequence);
}

std::vector<std::pair<std::string, torch::nn::Module*>> LcvaeImpl::encoder_parts() {
  return {{"encoder", encoder.get()}, {"to_mu", to_mu.get()}, {"to_log_var", to_log_var.get()}};
}

std::vector<std::pair<std::string, torch::nn::Module*>> LcvaeImpl::decoder_parts() {
  return {{"class_means", class_means.get()},
          {"decoder_init", decoder_init.get()},
          {"decoder", decoder.get()},
          {"decoder_out", decoder_out.get()}};
}

Lcvae make_lcvae(const LcvaeConfig& config) {
  torch::manual_seed(config.seed);
  return Lcvae(config);
}

torch::Tensor reparameterize(const torch::Tensor& mu, const torch::Tensor& log_var,
                             const torch::Tensor& epsilon) {
  return mu + torch::exp(0.5 * log_var) * epsilon;
}

torch::Tensor sample(const EncoderOutput& out, double eps_var, Rng* rng) {
  if (rng == nullptr) return out.mu;
  return reparameterize(out.mu, out.log_var,
                        rng->normal(out.mu.sizes(), eps_var, out.mu.scalar_type()));
}

torch::Tensor kl_loss(const torch::Tensor& mu, const torch::Tensor& log_var, const torch::Tensor& cm) {
  return 0.5 * ((mu - cm).pow(2) + torch::exp(log_var) - log_var - 1.0).sum(-1);
}

torch::Tensor reconstruction_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  const auto cells = torch::binary_cross_entropy_with_logits(
      logits, target, {}, {}, torch::Reduction::None);
  return cells.flatten(1).sum(1);
}

LossParts total_loss(Lcvae& model, const torch::Tensor& phrases, const torch::Tensor& labels,
                     const torch::Tensor& epsilon) {
  const auto batch = as_phrase_batch(phrases);
  const auto enc = model->encode(batch);
  const auto cm = model->class_mean(labels.reshape({-1}));
  // decoder input is (mu - cm + sigma * eps) + cm: the cm-relative latent plus its class mean
  auto z = enc.mu - cm;
  if (epsilon.defined()) z = reparameterize(z, enc.log_var, epsilon);
  const auto logits = model->decode_logits(z + cm);
  LossParts parts;
  parts.recon = reconstruction_loss(logits, batch).mean();
  parts.kl = kl_loss(enc.mu, enc.log_var, cm).mean();
  parts.total = parts.recon + parts.kl;
  return parts;
}

std::string format_epoch_line(const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f", s.epoch, s.recon, s.kl, s.total);
  return buf;
}

LcvaeTrainer::LcvaeTrainer(Lcvae model, torch::Tensor phrases, torch::Tensor labels)
    : model_(std::move(model)),
      phrases_(as_phrase_batch(phrases)),
      labels_(labels.to(torch::kInt64).reshape({-1})),
      optimizer_(model_->parameters(), torch::optim::AdamOptions(model_->config.learning_rate)) {
  if (phrases_.size(0) == 0) throw EmptyInputError("no training phrases");
  if (labels_.size(0) != phrases_.size(0)) throw ShapeError("phrase and label counts differ");
}

LossParts LcvaeTrainer::step(const torch::Tensor& phrases, const torch::Tensor& labels, Rng& rng) {
  model_->train();
  optimizer_.zero_grad();
  const auto eps = rng.normal({phrases.size(0), model_->config.latent_dim}, model_->config.eps_var);
  auto parts = total_loss(model_, phrases, labels, eps);
  if (!std::isfinite(parts.total.item<double>()))
    throw DivergenceError("lcvae loss became non-finite at epoch " + std::to_string(epoch_ + 1));
  parts.total.backward();
  torch::nn::utils::clip_grad_norm_(model_->parameters(), model_->config.clip_norm);
  optimizer_.step();
  return {parts.recon.detach(), parts.kl.detach(), parts.total.detach()};
}

EpochStats LcvaeTrainer::run_epoch() {
  Rng rng(derive_seed(model_->config.seed, static_cast<std::uint64_t>(epoch_)));
  const auto n = phrases_.size(0);
  const auto order = torch::tensor(rng.permutation(n), torch::kInt64);
  const auto bs = model_->config.batch_size;
  EpochStats stats;
  for (std::int64_t start = 0; start < n; start += bs) {
    const auto idx = order.slice(0, start, std::min(n, start + bs));
    const auto parts = step(phrases_.index_select(0, idx), labels_.index_select(0, idx), rng);
    const auto w = static_cast<double>(idx.size(0));
    stats.recon += parts.recon.item<double>() * w;
    stats.kl += parts.kl.item<double>() * w;
    stats.total += parts.total.item<double>() * w;
  }
  ++epoch_;
  stats.epoch = epoch_;
  stats.recon /= static_cast<double>(n);
  stats.kl /= static_cast<double>(n);
  stats.total /= static_cast<double>(n);
  return stats;
}

void LcvaeTrainer::save(Checkpoint& ck) const {
  ck.set_meta("train.epoch", std::to_string(epoch_));
  auto& opt = const_cast<torch::optim::Adam&>(optimizer_);
  ck.add_adam_state("adam", opt, named_params("lcvae", *model_));
}

void LcvaeTrainer::restore(const Checkpoint& ck) {
  ck.load_module("lcvae", *model_);
  if (ck.has_meta("train.epoch")) epoch_ = std::stoi(ck.meta("train.epoch"));
  if (ck.has_adam_state("adam")) ck.load_adam_state("adam", optimizer_, named_params("lcvae", *model_));
}

std::vector<EpochStats> train_lcvae(LcvaeTrainer& trainer, const TrainCallbacks& callbacks) {
  std::vector<EpochStats> history;
  while (trainer.epoch() < trainer.model()->config.epochs) {
    history.push_back(trainer.run_epoch());
    if (callbacks.on_epoch) callbacks.on_epoch(history.back());
  }
  return history;
}

torch::Tensor generate_phrase_probs(Lcvae& model, const torch::Tensor& labels, Rng* rng) {
  torch::NoGradGuard guard;
  const auto cm = model->class_mean(labels.to(torch::kInt64).reshape({-1}));
  auto z = cm;
  if (rng != nullptr) z = cm + rng->normal(cm.sizes(), model->config.eps_var, cm.scalar_type());
  return model->decode(z);
}

Phrase generate_phrase(Lcvae& model, int label, Rng& rng) {
  const auto probs = generate_phrase_probs(model, torch::tensor({static_cast<std::int64_t>(label)}), &rng);
  return Phrase(binarize(probs[0], model->config.threshold));
}

double reconstruction_accuracy(Lcvae& model, const torch::Tensor& phrases) {
  torch::NoGradGuard guard;
  const auto batch = as_phrase_batch(phrases);
  const auto enc = model->encode(batch);
  const auto probs = model->decode(enc.mu);
  const auto predicted = (probs >= model->config.threshold).to(batch.dtype());
  return predicted.eq(batch).to(torch::kFloat64).mean().item<double>();
}

Checkpoint lcvae_checkpoint(Lcvae& model, const std::string& dictionary_hash) {
  Checkpoint ck("lcvae");
  for (const auto& [k, v] : model->config.to_meta()) ck.set_meta(k, v);
  ck.set_meta("dictionary_hash", dictionary_hash);
  ck.add_module("lcvae", *model);
  return ck;
}

Lcvae lcvae_from_checkpoint(const Checkpoint& ck) {
  ck.expect_kind("lcvae");
  Lcvae model(LcvaeConfig::from_meta(ck.all_meta()));
  ck.load_module("lcvae", *model);
  return model;
}

}  // namespace sandwich
