#include "sandwich/nn.h"

#include <ATen/CPUGeneratorImpl.h>

#include <bit>
#include <cstring>

#include "sandwich/errors.h"
#include "sandwich/hash.h"

namespace sandwich {

Rng::Rng(std::uint64_t seed)
    : generator_(at::detail::createCPUGenerator(seed)), engine_(seed) {}

torch::Tensor Rng::normal(at::IntArrayRef shape, double variance, torch::Dtype dtype) {
  auto draws = at::randn(shape, generator_, torch::TensorOptions().dtype(dtype));
  return variance == 1.0 ? draws : draws * std::sqrt(variance);
}

torch::Tensor Rng::uniform(at::IntArrayRef shape, torch::Dtype dtype) {
  return at::rand(shape, generator_, torch::TensorOptions().dtype(dtype));
}

std::vector<std::int64_t> Rng::permutation(std::int64_t n) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

LstmImpl::LstmImpl(int input_size, int hidden) : hidden_size(hidden) {
  input_proj = register_module("input_proj", torch::nn::Linear(input_size, 4 * hidden));
  hidden_proj = register_module(
      "hidden_proj", torch::nn::Linear(torch::nn::LinearOptions(hidden, 4 * hidden).bias(false)));
  torch::NoGradGuard guard;
  // forget gate starts open
  input_proj->bias.slice(0, hidden, 2 * hidden).fill_(1.0);
}

LstmImpl::Output LstmImpl::forward(const torch::Tensor& x, torch::Tensor h, torch::Tensor c) {
  const auto batch = x.size(0);
  const auto steps = x.size(1);
  const auto opts = x.options();
  if (!h.defined()) h = torch::zeros({batch, hidden_size}, opts);
  if (!c.defined()) c = torch::zeros({batch, hidden_size}, opts);

  const auto projected = input_proj->forward(x);  // [B, T, 4H]
  std::vector<torch::Tensor> outputs;
  outputs.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t t = 0; t < steps; ++t) {
    const auto gates = projected.select(1, t) + hidden_proj->forward(h);
    const auto chunks = gates.chunk(4, 1);
    const auto in = torch::sigmoid(chunks[0]);
    const auto forget = torch::sigmoid(chunks[1]);
    const auto cell = torch::tanh(chunks[2]);
    const auto out = torch::sigmoid(chunks[3]);
    c = forget * c + in * cell;
    h = out * torch::tanh(c);
    outputs.push_back(h);
  }
  return {torch::stack(outputs, 1), h, c};
}

torch::Tensor grids_to_tensor(std::span<const PianoRoll> grids) {
  if (grids.empty()) return torch::zeros({0, 0, kPitchCount});
  const int rows = grids.front().rows();
  auto out = torch::empty({static_cast<std::int64_t>(grids.size()), rows, kPitchCount}, torch::kUInt8);
  auto* dst = out.data_ptr<std::uint8_t>();
  for (const auto& g : grids) {
    if (g.rows() != rows) throw ShapeError("grids differ in row count");
    std::memcpy(dst, g.cells().data(), g.cells().size());
    dst += g.cells().size();
  }
  return out.to(torch::kFloat32);
}

torch::Tensor phrases_to_tensor(std::span<const Phrase> phrases) {
  std::vector<PianoRoll> grids;
  grids.reserve(phrases.size());
  for (const auto& p : phrases) grids.push_back(p.grid());
  if (grids.empty()) return torch::zeros({0, kPhraseSteps, kPitchCount});
  return grids_to_tensor(grids);
}

torch::Tensor songs_to_tensor(std::span<const SongTensor> songs) {
  std::vector<PianoRoll> grids;
  grids.reserve(songs.size());
  for (const auto& s : songs) {
    s.validate();
    grids.push_back(s.concatenated());
  }
  if (grids.empty()) return torch::zeros({0, kSongPhrases, kPhraseSteps, kPitchCount});
  return grids_to_tensor(grids).view({-1, kSongPhrases, kPhraseSteps, kPitchCount});
}

torch::Tensor song_labels_to_tensor(std::span<const SongTensor> songs) {
  auto out = torch::empty({static_cast<std::int64_t>(songs.size()), kSongPhrases}, torch::kInt64);
  auto acc = out.accessor<std::int64_t, 2>();
  for (std::size_t i = 0; i < songs.size(); ++i) {
    songs[i].validate();
    for (int j = 0; j < kSongPhrases; ++j) acc[static_cast<std::int64_t>(i)][j] = songs[i].labels[static_cast<std::size_t>(j)];
  }
  return out;
}

PianoRoll binarize(const torch::Tensor& probs, double threshold) {
  if (probs.dim() != 2 || probs.size(1) != kPitchCount) throw ShapeError("binarize expects [rows, 128]");
  const auto bits = (probs.detach().to(torch::kFloat64) >= threshold).to(torch::kUInt8).contiguous();
  const auto rows = static_cast<int>(bits.size(0));
  std::vector<std::uint8_t> cells(bits.data_ptr<std::uint8_t>(), bits.data_ptr<std::uint8_t>() + bits.numel());
  return PianoRoll(rows, std::move(cells));
}

torch::Tensor as_phrase_batch(const torch::Tensor& t) {
  if (t.dim() == 2 && t.size(0) == kPhraseSteps && t.size(1) == kPitchCount) return t.unsqueeze(0);
  if (t.dim() == 3 && t.size(1) == kPhraseSteps && t.size(2) == kPitchCount) return t;
  throw ShapeError("expected (50, 128) phrases, got " + std::string(t.sizes().vec().empty() ? "scalar" : c10::str(t.sizes())));
}

torch::Tensor as_song_batch(const torch::Tensor& t) {
  if (t.dim() == 3 && t.size(1) == kSongSteps && t.size(2) == kPitchCount)
    return t.view({t.size(0), kSongPhrases, kPhraseSteps, kPitchCount});
  if (t.dim() == 4 && t.size(1) == kSongPhrases && t.size(2) == kPhraseSteps && t.size(3) == kPitchCount)
    return t;
  throw ShapeError("expected (850, 128) songs, got " + c10::str(t.sizes()));
}

std::string module_hash(const torch::nn::Module& module) {
  static_assert(std::endian::native == std::endian::little, "hash assumes little-endian floats");
  Fnv1a h;
  auto feed = [&](const std::string& name, const torch::Tensor& value) {
    h.update(name);
    const auto t = value.detach().to(torch::kFloat32).contiguous();
    for (auto d : t.sizes()) h.update(std::to_string(d) + ",");
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(t.data_ptr<float>()),
                       static_cast<std::size_t>(t.numel()) * sizeof(float)));
  };
  for (const auto& item : module.named_parameters()) feed(item.key(), item.value());
  for (const auto& item : module.named_buffers()) feed(item.key(), item.value());
  return h.hex();
}

void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst) {
  torch::NoGradGuard guard;
  const auto from = src.named_parameters();
  for (auto& item : dst.named_parameters()) {
    const auto* value = from.find(item.key());
    if (value == nullptr) throw ShapeError("missing parameter " + item.key());
    if (value->sizes() != item.value().sizes()) throw ShapeError("shape mismatch for " + item.key());
    item.value().copy_(*value);
  }
}

void set_requires_grad(torch::nn::Module& module, bool on) {
  for (auto& p : module.parameters()) p.set_requires_grad(on);
}

bool all_finite(const torch::Tensor& t) { return torch::isfinite(t).all().item<bool>(); }

}  // namespace sandwich
