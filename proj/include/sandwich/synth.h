/**
 * @file synth.h
 * @brief Deterministic synthetic folk-like corpus for desk-scale runs.
 *
 * Each song repeats a handful of sections in a fixed form, so it has exact
 * repeated phrases. Every section is a monophonic C major melody whose first
 * and last notes come from a small set of pairs, which keeps the label
 * dictionary small. Songs are transposed to a random key before export.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sandwich/piano_roll.h"

namespace sandwich {

struct SynthOptions {
  int songs = 50;
  int pair_count = 8;      ///< distinct first/last pairs, at most 8
  int phrases = 18;        ///< phrases per song; the 18th is dropped by preprocessing
  bool transpose = true;   ///< export in a random key
  std::uint64_t seed = 7;
};

/// Untransposed song rolls (phrases * 50 rows).
std::vector<PianoRoll> synth_song_rolls(const SynthOptions& opts);

/// Writes song_NNN.mid files (transposed when opts.transpose); returns the paths.
std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir, const SynthOptions& opts);

}  // namespace sandwich
