#include "sandwich/piano_roll.h"

#include <algorithm>
#include <numeric>

namespace sandwich {

bool PianoRoll::row_empty(int step) const {
  const auto r = row(step);
  return std::none_of(r.begin(), r.end(), [](std::uint8_t c) { return c != 0; });
}

PianoRoll PianoRoll::slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > rows_)
    throw ShapeError("slice [" + std::to_string(first) + ", +" + std::to_string(count) +
                     ") outside " + std::to_string(rows_) + " rows");
  const auto begin = cells_.begin() + static_cast<std::ptrdiff_t>(first) * kPitchCount;
  PianoRoll out(count, std::vector<std::uint8_t>(begin, begin + static_cast<std::ptrdiff_t>(count) * kPitchCount));
  out.source = source;
  out.transposition = transposition;
  return out;
}

void PianoRoll::append(const PianoRoll& other) {
  cells_.insert(cells_.end(), other.cells_.begin(), other.cells_.end());
  rows_ += other.rows_;
}

std::size_t PianoRoll::active_cells() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

void SongTensor::validate() const {
  if (phrases.size() != kSongPhrases || labels.size() != kSongPhrases)
    throw ShapeError("song needs 17 phrases and 17 labels, got " + std::to_string(phrases.size()) +
                     " and " + std::to_string(labels.size()));
}

PianoRoll SongTensor::concatenated() const {
  PianoRoll out;
  for (const auto& p : phrases) out.append(p.grid());
  return out;
}

SongTensor SongTensor::from_grid(const PianoRoll& grid) {
  if (grid.rows() != kSongSteps)
    throw ShapeError("song grid needs 850 rows, got " + std::to_string(grid.rows()));
  SongTensor song;
  for (int i = 0; i < kSongPhrases; ++i) song.phrases.emplace_back(grid.slice(i * kPhraseSteps, kPhraseSteps));
  return song;
}

}  // namespace sandwich
