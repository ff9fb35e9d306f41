/**
 * @file hcgan.h
 * @brief WGAN-GP fine-tuning of the hierarchical decoder.
 *
 * Generator: G-VAE decoder + frozen (by default) L-CVAE decoder, warm-started
 * from an HCVAE checkpoint. Critic: per-phrase LSTM encoder copied from the
 * L-CVAE, two 1-d convolutions over the 17 phrase features, a linear head.
 * The critic output is an unbounded real.
 */
#pragma once

#include <torch/torch.h>

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sandwich/checkpoint.h"
#include "sandwich/hcvae.h"
#include "sandwich/lcvae.h"
#include "sandwich/nn.h"

namespace sandwich {

struct GanConfig {
  double gp_weight = 1.0;
  int critic_steps = 5;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  int batch_size = 8;
  int steps = 1000;
  int conv_channels = 64;
  bool train_local_decoder = false;
  bool train_shared_encoder = true;
  std::uint64_t seed = 1;

  void validate() const;
  std::map<std::string, std::string> to_meta() const;
  static GanConfig from_meta(const std::map<std::string, std::string>& meta);
};

struct CriticImpl : torch::nn::Module {
  CriticImpl(int encoder_hidden, int channels);

  /// songs [B, 850, 128] or [B, 17, 50, 128] -> scores [B].
  torch::Tensor forward(const torch::Tensor& songs);

  Lstm encoder{nullptr};  ///< shared with the L-CVAE encoder
  torch::nn::Conv1d conv1{nullptr};
  torch::nn::Conv1d conv2{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(Critic);

/// Critic whose encoder starts as a copy of the L-CVAE encoder.
Critic make_critic(Lcvae& lcvae, const GanConfig& config);

using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

/// Random interpolates alpha * real + (1 - alpha) * fake, alpha ~ U(0, 1) per sample.
torch::Tensor interpolate(const torch::Tensor& real, const torch::Tensor& fake, Rng& rng);

/// mean over the batch of (||grad_x critic(x_hat)||_2 - 1)^2. The graph is kept
/// so the result can be differentiated again (w.r.t. critic weights).
torch::Tensor gradient_penalty(const torch::Tensor& real, const torch::Tensor& fake, const CriticFn& critic, Rng& rng);

struct CriticLoss {
  torch::Tensor loss;         ///< mean(fake) - mean(real) + gp_weight * gp
  torch::Tensor wasserstein;  ///< mean(real) - mean(fake)
  torch::Tensor gp;
};

CriticLoss critic_loss(const torch::Tensor& real, const torch::Tensor& fake, const CriticFn& critic,
                       double gp_weight, Rng& rng);
/// -mean(critic(fake)).
torch::Tensor generator_loss(const torch::Tensor& fake, const CriticFn& critic);

/// Generator forward: z [B, latent], labels [B, 17] -> probabilities [B, 850, 128].
torch::Tensor generator(Lcvae& lcvae, Gvae& gvae, const torch::Tensor& z, const torch::Tensor& labels, Rng* rng);

struct GanStepLog {
  int step = 0;
  double wasserstein = 0;
  double gp = 0;
  double critic_loss = 0;
  double generator_loss = 0;
};

/// "step\tw_estimate\tgp\tcritic_loss\tgen_loss"
std::string format_gan_line(const GanStepLog& s);

class HcganTrainer {
 public:
  /// Takes ownership of warm-started models.
  HcganTrainer(Lcvae lcvae, Gvae gvae, Critic critic, torch::Tensor songs, torch::Tensor labels,
               const GanConfig& config);

  /// critic_steps critic updates followed by one generator update.
  /// Throws DivergenceError on any non-finite value.
  GanStepLog step();

  int steps_done() const { return step_; }
  Lcvae& lcvae() { return lcvae_; }
  Gvae& gvae() { return gvae_; }
  Critic& critic() { return critic_; }
  const GanConfig& config() const { return config_; }

  void save(Checkpoint& ck) const;
  void restore(const Checkpoint& ck);

 private:
  torch::Tensor fake_batch(const torch::Tensor& labels, Rng& rng);

  Lcvae lcvae_;
  Gvae gvae_;
  Critic critic_;
  torch::Tensor songs_;
  torch::Tensor labels_;
  GanConfig config_;
  torch::optim::Adam critic_opt_;
  torch::optim::Adam gen_opt_;
  std::vector<std::pair<std::string, torch::Tensor>> gen_params_;
  int step_ = 0;
};

/// Builds a trainer warm-started from the given checkpoints. Throws
/// MissingPretrainError when either is null, ProvenanceError on a mismatch.
HcganTrainer make_hcgan_trainer(const Checkpoint* lcvae_ck, const Checkpoint* hcvae_ck, torch::Tensor songs,
                                torch::Tensor labels, const GanConfig& config);

struct GanCallbacks {
  std::function<void(const GanStepLog&)> on_step;
};

/// Runs until config.steps generator updates have been made.
std::vector<GanStepLog> train_hcgan(HcganTrainer& trainer, const GanCallbacks& callbacks = {});

/// Self-contained: stores the generator's L-CVAE and G-VAE plus the critic,
/// and the hash of the warm-start HCVAE checkpoint.
Checkpoint hcgan_checkpoint(HcganTrainer& trainer, const std::string& hcvae_hash);

struct HcganModels {
  Lcvae lcvae{nullptr};
  Gvae gvae{nullptr};
  Critic critic{nullptr};
};
HcganModels hcgan_from_checkpoint(const Checkpoint& ck);

}  // namespace sandwich
