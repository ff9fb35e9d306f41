/**
 * @file hcvae.h
 * @brief Hierarchical model: a global VAE (G-VAE) over the 17 per-phrase
 * latents of a frozen L-CVAE, plus a small VAE over FLN label sequences.
 *
 * Song pipeline:
 *   encode_song -> gvae encode -> sample (eps_var 0.1) -> gvae decode
 *   -> + cm(label_i) -> + epsilon (eps_var 0.01) -> L-CVAE decode
 * Noise enters only after each encoder. The L-CVAE never receives gradients.
 */
#pragma once

#include <torch/torch.h>

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sandwich/checkpoint.h"
#include "sandwich/lcvae.h"
#include "sandwich/nn.h"

namespace sandwich {

enum class GvaeRecon { Song, Latent };

struct GvaeConfig {
  int latent_dim = 256;
  int intermediate_dim = 256;
  double eps_var = 0.1;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int epochs = 40;
  GvaeRecon recon = GvaeRecon::Song;
  std::uint64_t seed = 1;

  void validate() const;
  std::map<std::string, std::string> to_meta() const;
  static GvaeConfig from_meta(const std::map<std::string, std::string>& meta);
};

struct GvaeImpl : torch::nn::Module {
  GvaeImpl(const GvaeConfig& config, int phrase_latent_dim);

  /// seq: [B, 17, phrase_latent] -> Mu, LogVar [B, latent].
  EncoderOutput encode(const torch::Tensor& seq);
  /// z: [B, latent] -> [B, 17, phrase_latent].
  torch::Tensor decode(const torch::Tensor& z);

  GvaeConfig config;
  int phrase_latent_dim;
  Lstm encoder{nullptr};
  torch::nn::Linear to_mu{nullptr};
  torch::nn::Linear to_log_var{nullptr};
  torch::nn::Linear decoder_init{nullptr};
  Lstm decoder{nullptr};
  torch::nn::Linear decoder_out{nullptr};
};
TORCH_MODULE(Gvae);

Gvae make_gvae(const GvaeConfig& config, int phrase_latent_dim);

/// encode(phrase_i).mu - cm(label_i) for every phrase, without noise.
/// songs: [B, 17, 50, 128] or [B, 850, 128]; labels: [B, 17]. Returns [B, 17, L].
torch::Tensor encode_song(Lcvae& lcvae, const torch::Tensor& songs, const torch::Tensor& labels);

/// Mu + exp(LogVar / 2) * epsilon with epsilon ~ N(0, eps_var); nullptr rng gives Mu.
torch::Tensor gvae_sample(const EncoderOutput& out, double eps_var, Rng* rng);

/// Standard-normal KL per row: 1/2 sum(Mu^2 + e^LogVar - LogVar - 1).
torch::Tensor standard_kl(const torch::Tensor& mu, const torch::Tensor& log_var);

/// Per-phrase decoder logits [B, 17, 50, 128] from decoded latents [B, 17, L]:
/// the latents are treated as mu, cm(label_i) is added, then epsilon. An
/// undefined epsilon means no noise.
torch::Tensor decode_latents_logits(Lcvae& lcvae, const torch::Tensor& latents, const torch::Tensor& labels,
                                    const torch::Tensor& epsilon = {});

/// Generator path: gvae decode(z) -> decode_latents_logits, flattened to [B, 850, 128] logits.
/// Noise for the local sampling is drawn from `rng` (nullptr: none).
torch::Tensor song_logits_from_z(Lcvae& lcvae, Gvae& gvae, const torch::Tensor& z, const torch::Tensor& labels,
                                 Rng* rng);

/// Full reconstruction path with explicit noise; returns logits [B, 850, 128].
/// Undefined epsilons disable the corresponding sampling step.
torch::Tensor hcvae_forward_logits(Lcvae& lcvae, Gvae& gvae, const torch::Tensor& songs, const torch::Tensor& labels,
                                   const torch::Tensor& global_epsilon = {},
                                   const torch::Tensor& local_epsilon = {});
/// Probabilities [B, 850, 128]; noise drawn from `rng` (nullptr: none).
torch::Tensor hcvae_forward(Lcvae& lcvae, Gvae& gvae, const torch::Tensor& songs, const torch::Tensor& labels,
                            Rng* rng);

class HcvaeTrainer {
 public:
  /// songs [N, 17, 50, 128] (any dtype), labels [N, 17]. Freezes `lcvae`.
  HcvaeTrainer(Lcvae lcvae, Gvae gvae, torch::Tensor songs, torch::Tensor labels);

  /// Throws DivergenceError on a non-finite loss.
  EpochStats run_epoch();
  LossParts step(const torch::Tensor& index, Rng& rng);

  int epoch() const { return epoch_; }
  Gvae& gvae() { return gvae_; }
  Lcvae& lcvae() { return lcvae_; }

  void save(Checkpoint& ck) const;
  void restore(const Checkpoint& ck);

 private:
  Lcvae lcvae_;
  Gvae gvae_;
  torch::Tensor songs_;
  torch::Tensor labels_;
  torch::Tensor latents_;  // frozen encoder output, computed once
  torch::optim::Adam optimizer_;
  int epoch_ = 0;
};

std::vector<EpochStats> train_hcvae(HcvaeTrainer& trainer, const TrainCallbacks& callbacks = {});

/// Z ~ N(0, I) -> song; labels: 17 values. Throws RangeError on bad labels.
SongTensor generate_song(Lcvae& lcvae, Gvae& gvae, const std::vector<int>& labels, Rng& rng);

/// Checkpoint referencing the L-CVAE by module_hash.
Checkpoint hcvae_checkpoint(Gvae& gvae, Lcvae& lcvae);
/// Throws ProvenanceError when `lcvae` does not match the recorded hash.
Gvae gvae_from_checkpoint(const Checkpoint& ck, Lcvae& lcvae);

// ---- FLN label-sequence VAE ----

struct FlnSeqConfig {
  int class_count = 127;
  int embed_dim = 16;
  int hidden_dim = 64;
  int latent_dim = 32;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int epochs = 200;
  std::uint64_t seed = 1;

  void validate() const;
  std::map<std::string, std::string> to_meta() const;
  static FlnSeqConfig from_meta(const std::map<std::string, std::string>& meta);
};

struct FlnSeqVaeImpl : torch::nn::Module {
  explicit FlnSeqVaeImpl(const FlnSeqConfig& config);

  /// labels int64 [B, 17] -> posterior.
  EncoderOutput encode(const torch::Tensor& labels);
  /// z [B, latent] -> logits [B, 17, class_count].
  torch::Tensor decode_logits(const torch::Tensor& z);

  FlnSeqConfig config;
  torch::nn::Embedding embed{nullptr};
  Lstm encoder{nullptr};
  torch::nn::Linear to_mu{nullptr};
  torch::nn::Linear to_log_var{nullptr};
  torch::nn::Linear decoder_init{nullptr};
  Lstm decoder{nullptr};
  torch::nn::Linear decoder_out{nullptr};
};
TORCH_MODULE(FlnSeqVae);

FlnSeqVae make_fln_seq_vae(const FlnSeqConfig& config);

/// Cross-entropy summed over the 17 positions + standard KL, batch means.
LossParts fln_seq_loss(FlnSeqVae& model, const torch::Tensor& labels, const torch::Tensor& epsilon = {});

/// Seeded minibatch training; returns per-epoch stats.
std::vector<EpochStats> train_fln_seq_vae(FlnSeqVae& model, const torch::Tensor& labels,
                                          const TrainCallbacks& callbacks = {});

/// z ~ N(0, I) -> argmax per position; 17 labels in 0..class_count-1.
std::vector<int> sample_fln_sequence(FlnSeqVae& model, Rng& rng);

Checkpoint fln_seq_checkpoint(FlnSeqVae& model);
FlnSeqVae fln_seq_from_checkpoint(const Checkpoint& ck);

}  // namespace sandwich
