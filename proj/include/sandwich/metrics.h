/**
 * @file metrics.h
 * @brief Objective evaluation of piano-roll songs: EB, UPC, QN, IT, FLN
 * accuracy and latent-form comparison.
 *
 * Songs are split into 25-step bars (trailing partial bars are ignored).
 * Notes are runs of consecutive active steps of one pitch.
 */
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sandwich/fln.h"
#include "sandwich/lcvae.h"
#include "sandwich/piano_roll.h"

namespace sandwich {

struct MetricsOptions {
  int bar_steps = kBarSteps;
  int qn_min_steps = 2;
  bool upc_exclude_empty = false;
};

struct RollNote {
  int pitch;
  int start;
  int length;
};

/// Runs of consecutive active steps per pitch, ordered by (start, pitch).
std::vector<RollNote> merged_notes(const PianoRoll& roll);

/// Each takes a non-empty song list; throws EmptyInputError otherwise.
double empty_bars(std::span<const PianoRoll> songs, const MetricsOptions& opts = {});
double used_pitch_classes(std::span<const PianoRoll> songs, const MetricsOptions& opts = {});
/// 0 when there are no notes.
double qualified_notes(std::span<const PianoRoll> songs, const MetricsOptions& opts = {});
/// Percentage of notes outside C major; 0 when there are no notes.
double irregular_tone(std::span<const PianoRoll> songs);

/// Percentage of phrases whose FLN pair equals the pair of their label,
/// counting only concrete labels (1..K). Throws EmptyInputError when none are.
double fln_accuracy(std::span<const Phrase> phrases, std::span<const int> labels, const FlnDictionary& dict);

struct SongMetrics {
  std::string name;
  double eb = 0, upc = 0, qn = 0, it = 0;
};

struct MetricsReport {
  double eb_percent = 0;
  double upc = 0;
  double qn_percent = 0;
  double it_percent = 0;
  std::optional<double> fln_accuracy_percent;
  std::vector<SongMetrics> per_song;
  MetricsOptions options;

  /// Aligned text table with EB, UPC, QN, IT and FLN columns.
  std::string to_table() const;
  /// "key=value" lines, stable order.
  std::string to_key_values() const;
};

/// `names` may be empty or one per song.
MetricsReport evaluate(std::span<const PianoRoll> songs, const MetricsOptions& opts = {},
                       std::span<const std::string> names = {});

struct LatentDiffReport {
  std::vector<double> diffs;  ///< per dimension, non-negative
  double max = 0;
  double mean = 0;
};

/// |(mu_a - cm_a) - (mu_b - cm_b)| per dimension with labels taken from `dict`.
LatentDiffReport latent_diff(const Phrase& a, const Phrase& b, Lcvae& lcvae, const FlnDictionary& dict);

}  // namespace sandwich
