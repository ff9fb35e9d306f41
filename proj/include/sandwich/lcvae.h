/**
 * @file lcvae.h
 * @brief Local conditional VAE over single 50 x 128 phrases.
 *
 * The encoder reads a phrase as 50 rows of 128 pitches and produces a
 * Gaussian posterior N(mu, diag(exp(log_var))). A bias-free dense layer maps
 * the one-hot FLN class to its class mean cm; the KL term pulls mu toward cm
 * instead of the origin, and the decoder consumes z + cm.
 */
#pragma once

#include <torch/torch.h>

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sandwich/checkpoint.h"
#include "sandwich/nn.h"

namespace sandwich {

struct LcvaeConfig {
  int latent_dim = 32;
  int intermediate_dim = 256;
  double eps_var = 0.01;  ///< variance of epsilon in z = mu + sigma * epsilon
  int batch_size = 32;
  int class_count = 127;  ///< K + 2
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int epochs = 40;
  double threshold = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
  std::map<std::string, std::string> to_meta() const;
  static LcvaeConfig from_meta(const std::map<std::string, std::string>& meta);
};

struct EncoderOutput {
  torch::Tensor mu;       ///< [B, latent]
  torch::Tensor log_var;  ///< [B, latent]
};

struct LcvaeImpl : torch::nn::Module {
  explicit LcvaeImpl(const LcvaeConfig& config);

  /// phrases: [B, 50, 128] or [50, 128]. Throws ShapeError otherwise.
  EncoderOutput encode(const torch::Tensor& phrases);
  /// Encoder hidden state after the last row, [B, H]; shared with the critic.
  torch::Tensor encode_features(const torch::Tensor& phrases);
  /// labels: int64 [B] (or [B, T]) in 0..class_count-1 -> cm [.., latent].
  torch::Tensor class_mean(const torch::Tensor& labels);
  /// z_plus_cm: [B, latent] -> logits [B, 50, 128].
  torch::Tensor decode_logits(const torch::Tensor& z_plus_cm);
  /// Per-cell note probabilities [B, 50, 128].
  torch::Tensor decode(const torch::Tensor& z_plus_cm) { return torch::sigmoid(decode_logits(z_plus_cm)); }

  /// Encoder-side submodules (the layers a critic may share).
  std::vector<std::pair<std::string, torch::nn::Module*>> encoder_parts();
  /// Decoder-side submodules including the class-mean layer.
  std::vector<std::pair<std::string, torch::nn::Module*>> decoder_parts();

  LcvaeConfig config;
  Lstm encoder{nullptr};
  torch::nn::Linear to_mu{nullptr};
  torch::nn::Linear to_log_var{nullptr};
  torch::nn::Linear class_means{nullptr};
  torch::nn::Linear decoder_init{nullptr};
  Lstm decoder{nullptr};
  torch::nn::Linear decoder_out{nullptr};
};
TORCH_MODULE(Lcvae);

/// Builds a model with weights drawn from config.seed.
Lcvae make_lcvae(const LcvaeConfig& config);

/// z = mu + exp(log_var / 2) * epsilon, epsilon already scaled.
torch::Tensor reparameterize(const torch::Tensor& mu, const torch::Tensor& log_var,
                             const torch::Tensor& epsilon);
/// Draws epsilon ~ N(0, eps_var) from `rng`; with rng == nullptr epsilon is 0
/// and mu is returned unchanged.
torch::Tensor sample(const EncoderOutput& out, double eps_var, Rng* rng);

/// 1/2 sum_i [(mu_i - cm_i)^2 + s2_i - log s2_i - 1], one value per row.
torch::Tensor kl_loss(const torch::Tensor& mu, const torch::Tensor& log_var, const torch::Tensor& cm);
/// Summed per-cell binary cross-entropy per row, from logits.
torch::Tensor reconstruction_loss(const torch::Tensor& logits, const torch::Tensor& target);

struct LossParts {
  torch::Tensor recon;  ///< batch mean
  torch::Tensor kl;     ///< batch mean
  torch::Tensor total;  ///< recon + kl
};

/// Reconstruction BCE + class-mean KL averaged over the batch. `epsilon`
/// supplies the (scaled) noise explicitly; an undefined tensor means zero.
LossParts total_loss(Lcvae& model, const torch::Tensor& phrases, const torch::Tensor& labels,
                     const torch::Tensor& epsilon = {});

struct EpochStats {
  int epoch = 0;
  double recon = 0;
  double kl = 0;
  double total = 0;
};

/// "epoch\trecon\tkl\ttotal"
std::string format_epoch_line(const EpochStats& s);

/// Sequential, seeded training loop. Each epoch draws its shuffle and noise
/// from derive_seed(config.seed, epoch), so a resumed run continues the same
/// trajectory.
class LcvaeTrainer {
 public:
  LcvaeTrainer(Lcvae model, torch::Tensor phrases, torch::Tensor labels);

  /// Throws DivergenceError when any batch loss is non-finite.
  EpochStats run_epoch();
  /// One update on a fixed batch; returns the loss parts before the update.
  LossParts step(const torch::Tensor& phrases, const torch::Tensor& labels, Rng& rng);

  int epoch() const { return epoch_; }
  Lcvae& model() { return model_; }

  void save(Checkpoint& ck) const;
  void restore(const Checkpoint& ck);

 private:
  Lcvae model_;
  torch::Tensor phrases_;
  torch::Tensor labels_;
  torch::optim::Adam optimizer_;
  int epoch_ = 0;
};

struct TrainCallbacks {
  std::function<void(const EpochStats&)> on_epoch;
};

/// Trains for config.epochs epochs (continuing from trainer.epoch()).
std::vector<EpochStats> train_lcvae(LcvaeTrainer& trainer, const TrainCallbacks& callbacks = {});

/// decode(cm(label) + epsilon), epsilon ~ N(0, eps_var), binarized.
Phrase generate_phrase(Lcvae& model, int label, Rng& rng);
/// Batched variant: probabilities [N, 50, 128] for the given labels.
torch::Tensor generate_phrase_probs(Lcvae& model, const torch::Tensor& labels, Rng* rng);

/// Fraction of cells where binarized reconstructions (epsilon = 0) match.
double reconstruction_accuracy(Lcvae& model, const torch::Tensor& phrases);

Checkpoint lcvae_checkpoint(Lcvae& model, const std::string& dictionary_hash);
Lcvae lcvae_from_checkpoint(const Checkpoint& ck);

}  // namespace sandwich
