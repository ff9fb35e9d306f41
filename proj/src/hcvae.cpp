#include "sandwich/hcvae.h"

#include <cmath>

#include "sandwich/errors.h"
#include "sandwich/meta.h"

namespace sandwich {

namespace {

const char* recon_name(GvaeRecon r) { return r == GvaeRecon::Song ? "song" : "latent"; }

GvaeRecon parse_recon(const std::string& s) {
  if (s == "song") return GvaeRecon::Song;
  if (s == "latent") return GvaeRecon::Latent;
  throw UsageError("gvae.recon must be 'song' or 'latent', got '" + s + "'");
}

torch::Tensor check_song_labels(const torch::Tensor& labels, std::int64_t batch) {
  if (labels.dim() != 2 || labels.size(0) != batch || labels.size(1) != kSongPhrases)
    throw ShapeError("song labels must be [" + std::to_string(batch) + ", 17]");
  return labels.to(torch::kInt64);
}

// Seeded shuffle + minibatch loop shared by the trainers in this file.
template <typename Step>
EpochStats run_minibatches(std::int64_t n, int batch_size, std::uint64_t seed, int epoch, Step&& step) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
  const auto order = torch::tensor(rng.permutation(n), torch::kInt64);
  EpochStats stats;
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const auto idx = order.slice(0, start, std::min(n, start + batch_size));
    const LossParts parts = step(idx, rng);
    const auto w = static_cast<double>(idx.size(0));
    stats.recon += parts.recon.template item<double>() * w;
    stats.kl += parts.kl.template item<double>() * w;
    stats.total += parts.total.template item<double>() * w;
  }
  stats.epoch = epoch + 1;
  stats.recon /= static_cast<double>(n);
  stats.kl /= static_cast<double>(n);
  stats.total /= static_cast<double>(n);
  return stats;
}

}  // namespace

void GvaeConfig::validate() const {
  if (latent_dim <= 0 || intermediate_dim <= 0) throw RangeError("gvae dims must be positive");
  if (!(eps_var > 0.0)) throw RangeError("gvae eps_var must be > 0");
  if (batch_size <= 0 || epochs < 0) throw RangeError("gvae batch_size/epochs out of range");
}

std::map<std::string, std::string> GvaeConfig::to_meta() const {
  return {{"gvae.latent_dim", meta_value(latent_dim)},
          {"gvae.intermediate_dim", meta_value(intermediate_dim)},
          {"gvae.eps_var", meta_value(eps_var)},
          {"gvae.batch_size", meta_value(batch_size)},
          {"gvae.learning_rate", meta_value(learning_rate)},
          {"gvae.clip_norm", meta_value(clip_norm)},
          {"gvae.epochs", meta_value(epochs)},
          {"gvae.recon", recon_name(recon)},
          {"gvae.seed", meta_value(seed)}};
}

GvaeConfig GvaeConfig::from_meta(const std::map<std::string, std::string>& meta) {
  GvaeConfig c;
  read_meta(meta, "gvae.latent_dim", c.latent_dim);
  read_meta(meta, "gvae.intermediate_dim", c.intermediate_dim);
  read_meta(meta, "gvae.eps_var", c.eps_var);
  read_meta(meta, "gvae.batch_size", c.batch_size);
  read_meta(meta, "gvae.learning_rate", c.learning_rate);
  read_meta(meta, "gvae.clip_norm", c.clip_norm);
  read_meta(meta, "gvae.epochs", c.epochs);
  std::string recon = recon_name(c.recon);
  read_meta(meta, "gvae.recon", recon);
  c.recon = parse_recon(recon);
  read_meta(meta, "gvae.seed", c.seed);
  return c;
}

GvaeImpl::GvaeImpl(const GvaeConfig& cfg, int phrase_latent) : config(cfg), phrase_latent_dim(phrase_latent) {
  config.validate();
  const int h = config.intermediate_dim;
  const int l = config.latent_dim;
  encoder = register_module("encoder", Lstm(phrase_latent_dim, h));
  to_mu = register_module("to_mu", torch::nn::Linear(h, l));
  to_log_var = register_module("to_log_var", torch::nn::Linear(h, l));
  decoder_init = register_module("decoder_init", torch::nn::Linear(l, 2 * h));
  decoder = register_module("decoder", Lstm(l, h));
  decoder_out = register_module("decoder_out", torch::nn::Linear(h, phrase_latent_dim));
  torch::NoGradGuard guard;
  to_log_var->weight.mul_(0.1);
  to_log_var->bias.zero_();
}

EncoderOutput GvaeImpl::encode(const torch::Tensor& seq) {
  if (seq.dim() != 3 || seq.size(1) != kSongPhrases || seq.size(2) != phrase_latent_dim)
    throw ShapeError("latent sequence must be [B, 17, " + std::to_string(phrase_latent_dim) + "]");
  const auto h = encoder->forward(seq).h;
  return {to_mu->forward(h), to_log_var->forward(h)};
}

torch::Tensor GvaeImpl::decode(const torch::Tensor& z) {
  if (z.dim() != 2 || z.size(1) != config.latent_dim)
    throw ShapeError("gvae decoder input must be [B, " + std::to_string(config.latent_dim) + "]");
  const auto init = decoder_init->forward(z).chunk(2, 1);
  const auto inputs = z.unsqueeze(1).expand({z.size(0), kSongPhrases, config.latent_dim});
  const auto out = decoder->forward(inputs, torch::tanh(init[0]), init[1]);
  return decoder_out->forward(out.sequence);
}

Gvae make_gvae(const GvaeConfig& config, int phrase_latent_dim) {
  torch::manual_seed(config.seed);
  return Gvae(config, phrase_latent_dim);
}

torch::Tensor encode_song(Lcvae& lcvae, const torch::Tensor& songs, const torch::Tensor& labels) {
  const auto batch = as_song_batch(songs);
  const auto b = batch.size(0);
  const auto lab = check_song_labels(labels, b);
  torch::NoGradGuard guard;
  const auto mu = lcvae->encode(batch.reshape({b * kSongPhrases, kPhraseSteps, kPitchCount}).to(torch::kFloat32)).mu;
  const auto cm = lcvae->class_mean(lab.reshape({-1}));
  return (mu - cm).view({b, kSongPhrases, -1});
}

torch::Tensor gvae_sample(const EncoderOutput& out, double eps_var, Rng* rng) {
  if (rng == nullptr) return out.mu;
  return reparameterize(out.mu, out.log_var, rng->normal(out.mu.sizes(), eps_var, out.mu.scalar_type()));
}

torch::Tensor standard_kl(const torch::Tensor& mu, const torch::Tensor& log_var) {
  return 0.5 * (mu.pow(2) + torch::exp(log_var) - log_var - 1.0).sum(-1);
}

torch::Tensor decode_latents_logits(Lcvae& lcvae, const torch::Tensor& latents, const torch::Tensor& labels,
                                    const torch::Tensor& epsilon) {
  const auto b = latents.size(0);
  const auto lab = check_song_labels(labels, b);
  const auto flat = latents.reshape({b * kSongPhrases, latents.size(2)});
  // decoded latents act as mu on a path with no log_var: z = mu + cm + epsilon
  auto z = flat + lcvae->class_mean(lab.reshape({-1}));
  if (epsilon.defined()) z = z + epsilon.reshape(z.sizes());
  return lcvae->decode_logits(z).view({b, kSongPhrases, kPhraseSteps, kPitchCount});
}

torch::Tensor song_logits_from_z(Lcvae& lcvae, Gvae& gvae, const torch::Tensor& z, const torch::Tensor& labels,
                                 Rng* rng) {
  const auto latents = gvae->decode(z);
  torch::Tensor eps;
  if (rng != nullptr)
    eps = rng->normal({z.size(0) * kSongPhrases, latents.size(2)}, lcvae->config.eps_var, latents.scalar_type());
  return decode_latents_logits(lcvae, latents, labels, eps).view({z.size(0), kSongSteps, kPitchCount});
}

torch::Tensor hcvae_forward_logits(Lcvae& lcvae, Gvae& gvae, const torch::Tensor& songs, const torch::Tensor& labels,
                                   const torch::Tensor& global_epsilon, const torch::Tensor& local_epsilon) {
  const auto seq = encode_song(lcvae, songs, labels);
  const auto g = gvae->encode(seq);
  auto z = g.mu;
  if (global_epsilon.defined()) z = reparameterize(g.mu, g.log_var, global_epsilon);
  const auto latents = gvae->decode(z);
  return decode_latents_logits(lcvae, latents, labels, local_epsilon).view({seq.size(0), kSongSteps, kPitchCount});
}

torch::Tensor hcvae_forward(Lcvae& lcvae, Gvae& gvae, const torch::Tensor& songs, const torch::Tensor& labels,
                            Rng* rng) {
  torch::Tensor global_eps, local_eps;
  if (rng != nullptr) {
    const auto b = as_song_batch(songs).size(0);
    global_eps = rng->normal({b, gvae->config.latent_dim}, gvae->config.eps_var);
    local_eps = rng->normal({b * kSongPhrases, lcvae->config.latent_dim}, lcvae->config.eps_var);
  }
  return torch::sigmoid(hcvae_forward_logits(lcvae, gvae, songs, labels, global_eps, local_eps));
}

HcvaeTrainer::HcvaeTrainer(Lcvae lcvae, Gvae gvae, torch::Tensor songs, torch::Tensor labels)
    : lcvae_(std::move(lcvae)),
      gvae_(std::move(gvae)),
      songs_(as_song_batch(songs)),
      labels_(check_song_labels(labels, songs_.size(0))),
      optimizer_(gvae_->parameters(), torch::optim::AdamOptions(gvae_->config.learning_rate)) {
  if (songs_.size(0) == 0) throw EmptyInputError("no training songs");
  if (gvae_->phrase_latent_dim != lcvae_->config.latent_dim)
    throw ShapeError("gvae phrase latent width does not match the lcvae");
  set_requires_grad(*lcvae_, false);
  lcvae_->eval();
  latents_ = encode_song(lcvae_, songs_, labels_);
}

LossParts HcvaeTrainer::step(const torch::Tensor& index, Rng& rng) {
  const auto& cfg = gvae_->config;
  gvae_->train();
  optimizer_.zero_grad();
  const auto seq = latents_.index_select(0, index);
  const auto labels = labels_.index_select(0, index);
  const auto b = seq.size(0);
  const auto g = gvae_->encode(seq);
  const auto z = reparameterize(g.mu, g.log_var, rng.normal({b, cfg.latent_dim}, cfg.eps_var));
  const auto decoded = gvae_->decode(z);

  LossParts parts;
  if (cfg.recon == GvaeRecon::Song) {
    const auto eps = rng.normal({b * kSongPhrases, lcvae_->config.latent_dim}, lcvae_->config.eps_var);
    const auto logits = decode_latents_logits(lcvae_, decoded, labels, eps);
    const auto target = songs_.index_select(0, index).to(torch::kFloat32);
    parts.recon = torch::binary_cross_entropy_with_logits(logits, target, {}, {}, torch::Reduction::None)
                      .flatten(1)
                      .sum(1)
                      .mean();
  } else {
    parts.recon = (decoded - seq).pow(2).flatten(1).sum(1).mean();
  }
  parts.kl = standard_kl(g.mu, g.log_var).mean();
  parts.total = parts.recon + parts.kl;
  if (!std::isfinite(parts.total.item<double>()))
    throw DivergenceError("hcvae loss became non-finite at epoch " + std::to_string(epoch_ + 1));
  parts.total.backward();
  torch::nn::utils::clip_grad_norm_(gvae_->parameters(), cfg.clip_norm);
  optimizer_.step();
  return {parts.recon.detach(), parts.kl.detach(), parts.total.detach()};
}

EpochStats HcvaeTrainer::run_epoch() {
  const auto stats = run_minibatches(songs_.size(0), gvae_->config.batch_size, gvae_->config.seed, epoch_,
                                     [&](const torch::Tensor& idx, Rng& rng) { return step(idx, rng); });
  ++epoch_;
  return stats;
}

void HcvaeTrainer::save(Checkpoint& ck) const {
  ck.set_meta("train.epoch", std::to_string(epoch_));
  auto& opt = const_cast<torch::optim::Adam&>(optimizer_);
  ck.add_adam_state("adam", opt, named_params("gvae", *gvae_));
}

void HcvaeTrainer::restore(const Checkpoint& ck) {
  ck.load_module("gvae", *gvae_);
  if (ck.has_meta("train.epoch")) epoch_ = std::stoi(ck.meta("train.epoch"));
  if (ck.has_adam_state("adam")) ck.load_adam_state("adam", optimizer_, named_params("gvae", *gvae_));
}

std::vector<EpochStats> train_hcvae(HcvaeTrainer& trainer, const TrainCallbacks& callbacks) {
  std::vector<EpochStats> history;
  while (trainer.epoch() < trainer.gvae()->config.epochs) {
    history.push_back(trainer.run_epoch());
    if (callbacks.on_epoch) callbacks.on_epoch(history.back());
  }
  return history;
}

SongTensor generate_song(Lcvae& lcvae, Gvae& gvae, const std::vector<int>& labels, Rng& rng) {
  if (labels.size() != kSongPhrases) throw ShapeError("generate_song needs 17 labels");
  for (const int l : labels)
    if (l < 0 || l >= lcvae->config.class_count) throw RangeError("label " + std::to_string(l) + " out of range");
  torch::NoGradGuard guard;
  std::vector<std::int64_t> lab(labels.begin(), labels.end());
  const auto label_tensor = torch::tensor(lab, torch::kInt64).view({1, kSongPhrases});
  const auto z = rng.normal({1, gvae->config.latent_dim});
  const auto probs = torch::sigmoid(song_logits_from_z(lcvae, gvae, z, label_tensor, &rng));
  auto song = SongTensor::from_grid(binarize(probs[0], lcvae->config.threshold));
  song.labels = labels;
  return song;
}

Checkpoint hcvae_checkpoint(Gvae& gvae, Lcvae& lcvae) {
  Checkpoint ck("hcvae");
  for (const auto& [k, v] : gvae->config.to_meta()) ck.set_meta(k, v);
  ck.set_meta("gvae.phrase_latent_dim", meta_value(gvae->phrase_latent_dim));
  ck.set_meta("lcvae_hash", module_hash(*lcvae));
  ck.add_module("gvae", *gvae);
  return ck;
}

Gvae gvae_from_checkpoint(const Checkpoint& ck, Lcvae& lcvae) {
  ck.expect_kind("hcvae");
  const auto actual = module_hash(*lcvae);
  if (ck.meta("lcvae_hash") != actual)
    throw ProvenanceError("hcvae checkpoint was trained against lcvae " + ck.meta("lcvae_hash") + ", got " + actual);
  int phrase_latent = 0;
  parse_value("gvae.phrase_latent_dim", ck.meta("gvae.phrase_latent_dim"), phrase_latent);
  Gvae gvae(GvaeConfig::from_meta(ck.all_meta()), phrase_latent);
  ck.load_module("gvae", *gvae);
  return gvae;
}

// ---- FLN label-sequence VAE ----

void FlnSeqConfig::validate() const {
  if (class_count < 3) throw RangeError("fln_seq class_count must be >= 3");
  if (embed_dim <= 0 || hidden_dim <= 0 || latent_dim <= 0) throw RangeError("fln_seq dims must be positive");
  if (batch_size <= 0 || epochs < 0) throw RangeError("fln_seq batch_size/epochs out of range");
}

std::map<std::string, std::string> FlnSeqConfig::to_meta() const {
  return {{"fln_seq.class_count", meta_value(class_count)},
          {"fln_seq.embed_dim", meta_value(embed_dim)},
          {"fln_seq.hidden_dim", meta_value(hidden_dim)},
          {"fln_seq.latent_dim", meta_value(latent_dim)},
          {"fln_seq.batch_size", meta_value(batch_size)},
          {"fln_seq.learning_rate", meta_value(learning_rate)},
          {"fln_seq.clip_norm", meta_value(clip_norm)},
          {"fln_seq.epochs", meta_value(epochs)},
          {"fln_seq.seed", meta_value(seed)}};
}

FlnSeqConfig FlnSeqConfig::from_meta(const std::map<std::string, std::string>& meta) {
  FlnSeqConfig c;
  read_meta(meta, "fln_seq.class_count", c.class_count);
  read_meta(meta, "fln_seq.embed_dim", c.embed_dim);
  read_meta(meta, "fln_seq.hidden_dim", c.hidden_dim);
  read_meta(meta, "fln_seq.latent_dim", c.latent_dim);
  read_meta(meta, "fln_seq.batch_size", c.batch_size);
  read_meta(meta, "fln_seq.learning_rate", c.learning_rate);
  read_meta(meta, "fln_seq.clip_norm", c.clip_norm);
  read_meta(meta, "fln_seq.epochs", c.epochs);
  read_meta(meta, "fln_seq.seed", c.seed);
  return c;
}

FlnSeqVaeImpl::FlnSeqVaeImpl(const FlnSeqConfig& cfg) : config(cfg) {
  config.validate();
  const int h = config.hidden_dim;
  embed = register_module("embed", torch::nn::Embedding(config.class_count, config.embed_dim));
  encoder = register_module("encoder", Lstm(config.embed_dim, h));
  to_mu = register_module("to_mu", torch::nn::Linear(h, config.latent_dim));
  to_log_var = register_module("to_log_var", torch::nn::Linear(h, config.latent_dim));
  decoder_init = register_module("decoder_init", torch::nn::Linear(config.latent_dim, 2 * h));
  decoder = register_module("decoder", Lstm(config.latent_dim, h));
  decoder_out = register_module("decoder_out", torch::nn::Linear(h, config.class_count));
  torch::NoGradGuard guard;
  to_log_var->weight.mul_(0.1);
  to_log_var->bias.zero_();
}

EncoderOutput FlnSeqVaeImpl::encode(const torch::Tensor& labels) {
  const auto lab = check_song_labels(labels, labels.size(0));
  if (lab.numel() > 0 && (lab.min().item<std::int64_t>() < 0 || lab.max().item<std::int64_t>() >= config.class_count))
    throw RangeError("fln label out of range");
  const auto h = encoder->forward(embed->forward(lab)).h;
  return {to_mu->forward(h), to_log_var->forward(h)};
}

torch::Tensor FlnSeqVaeImpl::decode_logits(const torch::Tensor& z) {
  const auto init = decoder_init->forward(z).chunk(2, 1);
  const auto inputs = z.unsqueeze(1).expand({z.size(0), kSongPhrases, config.latent_dim});
  return decoder_out->forward(decoder->forward(inputs, torch::tanh(init[0]), init[1]).sequence);
}

FlnSeqVae make_fln_seq_vae(const FlnSeqConfig& config) {
  torch::manual_seed(config.seed);
  return FlnSeqVae(config);
}

LossParts fln_seq_loss(FlnSeqVae& model, const torch::Tensor& labels, const torch::Tensor& epsilon) {
  const auto enc = model->encode(labels);
  auto z = enc.mu;
  if (epsilon.defined()) z = reparameterize(enc.mu, enc.log_var, epsilon);
  const auto logits = model->decode_logits(z);
  LossParts parts;
  parts.recon = torch::nn::functional::cross_entropy(
                    logits.reshape({-1, model->config.class_count}), labels.reshape({-1}).to(torch::kInt64),
                    torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kNone))
                    .view({labels.size(0), kSongPhrases})
                    .sum(1)
                    .mean();
  parts.kl = standard_kl(enc.mu, enc.log_var).mean();
  parts.total = parts.recon + parts.kl;
  return parts;
}

std::vector<EpochStats> train_fln_seq_vae(FlnSeqVae& model, const torch::Tensor& labels,
                                          const TrainCallbacks& callbacks) {
  const auto& cfg = model->config;
  const auto data = check_song_labels(labels, labels.size(0));
  if (data.size(0) == 0) throw EmptyInputError("no label sequences");
  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  std::vector<EpochStats> history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    history.push_back(run_minibatches(data.size(0), cfg.batch_size, cfg.seed, epoch,
                                      [&](const torch::Tensor& idx, Rng& rng) {
                                        model->train();
                                        optimizer.zero_grad();
                                        const auto eps = rng.normal({idx.size(0), cfg.latent_dim});
                                        auto parts = fln_seq_loss(model, data.index_select(0, idx), eps);
                                        if (!std::isfinite(parts.total.item<double>()))
                                          throw DivergenceError("fln sequence VAE loss became non-finite");
                                        parts.total.backward();
                                        torch::nn::utils::clip_grad_norm_(model->parameters(), cfg.clip_norm);
                                        optimizer.step();
                                        return LossParts{parts.recon.detach(), parts.kl.detach(),
                                                         parts.total.detach()};
                                      }));
    if (callbacks.on_epoch) callbacks.on_epoch(history.back());
  }
  return history;
}

std::vector<int> sample_fln_sequence(FlnSeqVae& model, Rng& rng) {
  torch::NoGradGuard guard;
  const auto z = rng.normal({1, model->config.latent_dim});
  const auto best = model->decode_logits(z).argmax(-1)[0];
  std::vector<int> out;
  for (int i = 0; i < kSongPhrases; ++i) out.push_back(static_cast<int>(best[i].item<std::int64_t>()));
  return out;
}

Checkpoint fln_seq_checkpoint(FlnSeqVae& model) {
  Checkpoint ck("fln_seq");
  for (const auto& [k, v] : model->config.to_meta()) ck.set_meta(k, v);
  ck.add_module("fln_seq", *model);
  return ck;
}

FlnSeqVae fln_seq_from_checkpoint(const Checkpoint& ck) {
  ck.expect_kind("fln_seq");
  FlnSeqVae model(FlnSeqConfig::from_meta(ck.all_meta()));
  ck.load_module("fln_seq", *model);
  return model;
}

}  // namespace sandwich
