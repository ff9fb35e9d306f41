// Helpers shared by the unit and acceptance suites.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sandwich/piano_roll.h"

namespace sandwich::testing {

/// Random monophonic-ish song grid: runs of 1..8 steps, some rests, some chords.
inline PianoRoll random_song_grid(std::mt19937_64& rng, int rows = kSongSteps) {
  PianoRoll roll(rows);
  std::uniform_int_distribution<int> len(1, 8), pitch(48, 84), coin(0, 9);
  int t = 0;
  while (t < rows) {
    const int n = std::min(len(rng), rows - t);
    const int c = coin(rng);
    if (c >= 2) {
      const int p = pitch(rng);
      for (int i = 0; i < n; ++i) roll.set(t + i, p);
      if (c == 9) for (int i = 0; i < n; ++i) roll.set(t + i, p + 4);
    }
    t += n;
    // one empty step separates consecutive notes of the same pitch
    if (t < rows && c >= 2) ++t;
  }
  return roll;
}

inline Phrase phrase_with_notes(const std::vector<std::tuple<int, int, int>>& notes) {
  Phrase phrase;
  for (const auto& [start, length, pitch] : notes)
    for (int t = start; t < start + length; ++t) phrase.set(t, pitch);
  return phrase;
}

/// Minimal SMF builder for hand-made test files (format 0, one track).
class SmfBuilder {
 public:
  explicit SmfBuilder(int ppq) : ppq_(ppq) {}

  SmfBuilder& tempo(std::uint32_t delta, std::uint32_t usec_per_beat) {
    varlen(delta);
    bytes_.insert(bytes_.end(), {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(usec_per_beat >> 16),
                                 static_cast<std::uint8_t>(usec_per_beat >> 8),
                                 static_cast<std::uint8_t>(usec_per_beat)});
    return *this;
  }
  SmfBuilder& on(std::uint32_t delta, int pitch, int vel = 90) {
    varlen(delta);
    bytes_.insert(bytes_.end(), {0x90, static_cast<std::uint8_t>(pitch), static_cast<std::uint8_t>(vel)});
    return *this;
  }
  SmfBuilder& off(std::uint32_t delta, int pitch) {
    varlen(delta);
    bytes_.insert(bytes_.end(), {0x80, static_cast<std::uint8_t>(pitch), 0x40});
    return *this;
  }
  std::vector<std::uint8_t> build() const {
    std::vector<std::uint8_t> track = bytes_;
    track.insert(track.end(), {0x00, 0xFF, 0x2F, 0x00});
    std::vector<std::uint8_t> out{'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1,
                                  static_cast<std::uint8_t>(ppq_ >> 8), static_cast<std::uint8_t>(ppq_)};
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    const auto n = static_cast<std::uint32_t>(track.size());
    out.insert(out.end(), {static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
                           static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)});
    out.insert(out.end(), track.begin(), track.end());
    return out;
  }

 private:
  void varlen(std::uint32_t v) {
    std::vector<std::uint8_t> tmp{static_cast<std::uint8_t>(v & 0x7F)};
    while ((v >>= 7) != 0) tmp.insert(tmp.begin(), static_cast<std::uint8_t>((v & 0x7F) | 0x80));
    bytes_.insert(bytes_.end(), tmp.begin(), tmp.end());
  }

  int ppq_;
  std::vector<std::uint8_t> bytes_;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("sandwich_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace sandwich::testing
