/**
 * @file piano_roll.h
 * @brief Binary time x pitch grids: PianoRoll, Phrase and SongTensor.
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sandwich/errors.h"

namespace sandwich {

inline constexpr int kPitchCount = 128;
inline constexpr int kPhraseSteps = 50;
inline constexpr int kSongPhrases = 17;
inline constexpr int kSongSteps = kPhraseSteps * kSongPhrases;  // 850
inline constexpr int kBarSteps = 25;
inline constexpr int kSongBars = kSongSteps / kBarSteps;  // 34
/// One phrase spans 8 beats at 120 bpm, so one step is 0.16 beat.
inline constexpr double kBeatsPerPhrase = 8.0;
inline constexpr double kStepsPerBeat = kPhraseSteps / kBeatsPerPhrase;  // 6.25
inline constexpr double kBeatsPerStep = kBeatsPerPhrase / kPhraseSteps;

/// Row-major binary matrix with exactly 128 columns.
class PianoRoll {
 public:
  PianoRoll() = default;
  explicit PianoRoll(int rows) : rows_(rows), cells_(static_cast<std::size_t>(rows) * kPitchCount, 0) {
    if (rows < 0) throw ShapeError("negative row count");
  }
  PianoRoll(int rows, std::vector<std::uint8_t> cells) : rows_(rows), cells_(std::move(cells)) {
    if (rows < 0 || cells_.size() != static_cast<std::size_t>(rows) * kPitchCount)
      throw ShapeError("cell buffer does not match " + std::to_string(rows) + "x128");
    for (auto& c : cells_) c = c ? 1 : 0;
  }

  int rows() const { return rows_; }
  static constexpr int cols() { return kPitchCount; }

  std::uint8_t at(int step, int pitch) const { return cells_[index(step, pitch)]; }
  void set(int step, int pitch, bool on = true) { cells_[index(step, pitch)] = on ? 1 : 0; }

  std::span<const std::uint8_t> row(int step) const {
    return std::span(cells_).subspan(static_cast<std::size_t>(step) * kPitchCount, kPitchCount);
  }
  std::span<const std::uint8_t> cells() const { return cells_; }

  bool row_empty(int step) const;
  /// Copy of rows [first, first + count).
  PianoRoll slice(int first, int count) const;
  /// Rows of `other` appended below this grid.
  void append(const PianoRoll& other);
  std::size_t active_cells() const;

  bool operator==(const PianoRoll& other) const {
    return rows_ == other.rows_ && cells_ == other.cells_;
  }

  std::string source;
  int transposition = 0;

 private:
  std::size_t index(int step, int pitch) const {
    return static_cast<std::size_t>(step) * kPitchCount + static_cast<std::size_t>(pitch);
  }

  int rows_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// A 50 x 128 grid. Construction enforces the shape.
class Phrase {
 public:
  Phrase() : grid_(kPhraseSteps) {}
  explicit Phrase(PianoRoll grid) : grid_(std::move(grid)) {
    if (grid_.rows() != kPhraseSteps)
      throw ShapeError("phrase needs 50 rows, got " + std::to_string(grid_.rows()));
  }

  const PianoRoll& grid() const { return grid_; }
  PianoRoll& grid() { return grid_; }
  std::uint8_t at(int step, int pitch) const { return grid_.at(step, pitch); }
  void set(int step, int pitch, bool on = true) { grid_.set(step, pitch, on); }

  bool operator==(const Phrase& other) const { return grid_ == other.grid_; }

 private:
  PianoRoll grid_;
};

/// Exactly 17 phrases with their FLN class labels.
struct SongTensor {
  std::vector<Phrase> phrases;
  std::vector<int> labels;

  /// Throws ShapeError unless there are 17 phrases and 17 labels.
  void validate() const;
  /// 850 x 128 concatenation.
  PianoRoll concatenated() const;
  /// Inverse of concatenated(); labels are left empty.
  static SongTensor from_grid(const PianoRoll& grid);
};

}  // namespace sandwich
