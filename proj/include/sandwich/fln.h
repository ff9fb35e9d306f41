/**
 * @file fln.h
 * @brief First-and-Last-Notes pairs and the frequency-thresholded class dictionary.
 *
 * Label 0 is the empty class (all-zero phrase), labels 1..K are the dictionary
 * pairs in descending corpus frequency, and label K+1 collects every other pair.
 */
#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sandwich/piano_roll.h"

namespace sandwich {

inline constexpr int kEmptyPitch = -1;

struct FlnPair {
  int first = kEmptyPitch;
  int last = kEmptyPitch;

  bool empty() const { return first == kEmptyPitch; }
  auto operator<=>(const FlnPair&) const = default;
};

/// Highest pitch at the earliest non-empty step and highest pitch at the
/// latest non-empty step. All-zero phrases give the EMPTY pair.
FlnPair extract_fln(const Phrase& phrase);

/// A label together with the class count it indexes into.
class ClassLabel {
 public:
  ClassLabel(int value, int class_count);

  int value() const { return value_; }
  int class_count() const { return class_count_; }
  std::vector<float> one_hot() const;

 private:
  int value_;
  int class_count_;
};

struct DictionaryEntry {
  int label = 0;
  FlnPair pair;
  std::int64_t count = 0;
};

class FlnDictionary {
 public:
  static constexpr int kDefaultMinCount = 20;

  FlnDictionary() = default;

  /// Counts non-empty pairs and keeps those seen more than `min_count` times.
  /// Throws NoPairsError when nothing survives the threshold.
  static FlnDictionary build(std::span<const Phrase> phrases, int min_count = kDefaultMinCount);

  int size() const { return static_cast<int>(entries_.size()); }  ///< K
  int class_count() const { return size() + 2; }                   ///< K + 2
  int other_label() const { return size() + 1; }
  int min_count() const { return min_count_; }
  const std::vector<DictionaryEntry>& entries() const { return entries_; }

  int label_of(const FlnPair& pair) const;
  int label(const Phrase& phrase) const { return label_of(extract_fln(phrase)); }
  ClassLabel class_label(const Phrase& phrase) const { return {label(phrase), class_count()}; }
  /// Pair for a concrete label in 1..K. Throws RangeError otherwise.
  const FlnPair& pair_of(int label) const;
  bool is_concrete(int label) const { return label >= 1 && label <= size(); }

  /// Text form: header lines "K", "min_count", then label\tfirst\tlast\tcount.
  std::string to_text() const;
  static FlnDictionary from_text(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static FlnDictionary load(const std::filesystem::path& path);
  /// FNV-1a of to_text(), hex.
  std::string hash() const;

  bool operator==(const FlnDictionary& other) const;

 private:
  int min_count_ = kDefaultMinCount;
  std::vector<DictionaryEntry> entries_;
  std::map<FlnPair, int> index_;
};

}  // namespace sandwich
