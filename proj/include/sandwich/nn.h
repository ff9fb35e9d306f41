/**
 * @file nn.h
 * @brief Shared neural-network building blocks on top of libtorch.
 */
#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sandwich/piano_roll.h"

namespace sandwich {

/// Seeded source of randomness: a torch generator for tensor draws and a
/// 64-bit Mersenne twister for index shuffles.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// i.i.d. N(0, variance) draws.
  torch::Tensor normal(at::IntArrayRef shape, double variance = 1.0,
                       torch::Dtype dtype = torch::kFloat32);
  /// i.i.d. U(0, 1) draws.
  torch::Tensor uniform(at::IntArrayRef shape, torch::Dtype dtype = torch::kFloat32);
  std::mt19937_64& engine() { return engine_; }
  /// Fisher-Yates permutation of 0..n-1 (independent of the std library's shuffle).
  std::vector<std::int64_t> permutation(std::int64_t n);

 private:
  at::Generator generator_;
  std::mt19937_64 engine_;
};

/// Derives a stream seed from a base seed and a tag (e.g. epoch index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

/// Single-layer LSTM written out gate by gate so higher-order gradients
/// (needed by the gradient penalty) flow through it.
struct LstmImpl : torch::nn::Module {
  LstmImpl(int input_size, int hidden_size);

  struct Output {
    torch::Tensor sequence;  ///< [B, T, H]
    torch::Tensor h;         ///< [B, H] final hidden state
    torch::Tensor c;         ///< [B, H] final cell state
  };

  /// x: [B, T, I]. Missing initial states start at zero.
  Output forward(const torch::Tensor& x, torch::Tensor h0 = {}, torch::Tensor c0 = {});

  int hidden_size;
  torch::nn::Linear input_proj{nullptr};
  torch::nn::Linear hidden_proj{nullptr};
};
TORCH_MODULE(Lstm);

/// [N, rows, 128] float tensor of grids with the same row count.
torch::Tensor grids_to_tensor(std::span<const PianoRoll> grids);
torch::Tensor phrases_to_tensor(std::span<const Phrase> phrases);
/// [N, 17, 50, 128] float tensor.
torch::Tensor songs_to_tensor(std::span<const SongTensor> songs);
/// [N, 17] int64 labels.
torch::Tensor song_labels_to_tensor(std::span<const SongTensor> songs);
/// Threshold probabilities [rows, 128] into a grid.
PianoRoll binarize(const torch::Tensor& probs, double threshold = 0.5);

/// Throws ShapeError unless `t` is [B, 50, 128] (a bare [50, 128] is promoted).
torch::Tensor as_phrase_batch(const torch::Tensor& t);
/// Throws ShapeError unless `t` is [B, 850, 128] or [B, 17, 50, 128]; returns the latter.
torch::Tensor as_song_batch(const torch::Tensor& t);

/// FNV-1a over the names, shapes and float32 bytes of every parameter and buffer.
std::string module_hash(const torch::nn::Module& module);

/// Copies parameter values (by name) from `src` into `dst`.
void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst);

void set_requires_grad(torch::nn::Module& module, bool on);

/// True when every element is finite.
bool all_finite(const torch::Tensor& t);

}  // namespace sandwich
