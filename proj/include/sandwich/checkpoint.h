/**
 * @file checkpoint.h
 * @brief Versioned, self-describing model checkpoint container.
 *
 * Layout (little-endian):
 *   "MSWC" | u32 version | str kind | u32 n_meta | (str key, str value)*
 *   | u32 n_tensors | (str name, u32 ndim, u64 dim[ndim], f32 data[])*
 * where str = u32 length + bytes. Meta entries are kept sorted by key and
 * tensors keep insertion order, so equal contents give equal bytes.
 */
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sandwich {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
 public:
  Checkpoint() = default;
  explicit Checkpoint(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }
  /// Throws ProvenanceError unless kind() == expected.
  void expect_kind(const std::string& expected) const;

  void set_meta(const std::string& key, const std::string& value) { meta_[key] = value; }
  bool has_meta(const std::string& key) const { return meta_.count(key) != 0; }
  /// Throws ParseError when missing.
  const std::string& meta(const std::string& key) const;
  const std::map<std::string, std::string>& all_meta() const { return meta_; }

  void add_tensor(const std::string& name, const torch::Tensor& value);
  bool has_tensor(const std::string& name) const;
  /// Throws ParseError when missing.
  const torch::Tensor& tensor(const std::string& name) const;
  const std::vector<std::pair<std::string, torch::Tensor>>& tensors() const { return tensors_; }

  /// Stores every parameter and buffer of `module` under "prefix.name".
  void add_module(const std::string& prefix, const torch::nn::Module& module);
  /// Copies "prefix.name" tensors back into `module`; throws on missing or mis-shaped entries.
  void load_module(const std::string& prefix, torch::nn::Module& module) const;

  /// Stores Adam moments (and step counts) for the given named parameters.
  void add_adam_state(const std::string& prefix, torch::optim::Adam& optimizer,
                      const std::vector<std::pair<std::string, torch::Tensor>>& params);
  void load_adam_state(const std::string& prefix, torch::optim::Adam& optimizer,
                       const std::vector<std::pair<std::string, torch::Tensor>>& params) const;
  bool has_adam_state(const std::string& prefix) const;

  std::vector<std::uint8_t> encode() const;
  static Checkpoint decode(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  /// FNV-1a over encode().
  std::string hash() const;

 private:
  std::string kind_;
  std::map<std::string, std::string> meta_;
  std::vector<std::pair<std::string, torch::Tensor>> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Named trainable parameters of `module` with a prefix, in registration order.
std::vector<std::pair<std::string, torch::Tensor>> named_params(const std::string& prefix,
                                                                const torch::nn::Module& module);

}  // namespace sandwich
