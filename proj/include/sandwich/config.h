/**
 * @file config.h
 * @brief Flat key = value run configuration shared by every command.
 *
 * Keys are namespaced by model ("lcvae.", "gvae.", "gan.", "fln_seq.",
 * "metrics.", "fln.") plus the top-level "seed". Class counts come from the
 * dictionary and per-model seeds from "seed", so neither is a file key.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "sandwich/hcgan.h"
#include "sandwich/hcvae.h"
#include "sandwich/lcvae.h"
#include "sandwich/metrics.h"

namespace sandwich {

struct RunConfig {
  LcvaeConfig lcvae;
  GvaeConfig gvae;
  GanConfig gan;
  FlnSeqConfig fln_seq;
  MetricsOptions metrics;
  int min_count = 20;  ///< dictionary threshold (strictly more occurrences than this)
  std::optional<std::uint64_t> seed;

  /// Sets one key. Throws UsageError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Applies "key=value".
  void set_assignment(const std::string& assignment);

  /// Every key with its current value, one "key = value" per line, sorted.
  std::string to_text() const;

  /// Throws UsageError when no seed was given.
  std::uint64_t require_seed() const;

  /// Lines of "key = value"; '#' starts a comment.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Documentation line for each key.
  static const std::map<std::string, std::string>& key_docs();
};

}  // namespace sandwich
