#include "sandwich/synth.h"

#include <algorithm>
#include <array>
#include <cstdio>
#include <random>
#include <string>

#include "sandwich/corpus.h"
#include "sandwich/errors.h"
#include "sandwich/nn.h"

namespace sandwich {

namespace {

constexpr std::array<std::pair<int, int>, 8> kPairs{
    {{60, 67}, {64, 60}, {67, 72}, {62, 71}, {65, 64}, {69, 67}, {72, 60}, {71, 72}}};

constexpr std::array<const char*, 3> kForms{"AABAABCCAABADDAAB", "ABABCCDDABABCCDDA", "AAAABBCCAAAADDBBA"};

constexpr int kScale[7] = {0, 2, 4, 5, 7, 9, 11};

// C major degree index <-> pitch, degree 35 = C5 (60)
int degree_pitch(int degree) { return 12 * (degree / 7) + kScale[degree % 7]; }
int pitch_degree(int pitch) {
  const int* it = std::find(kScale, kScale + 7, pitch % 12);
  return 7 * (pitch / 12) + static_cast<int>(it - kScale);
}

int pick(std::mt19937_64& rng, int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); }

void put_note(PianoRoll& roll, int offset, int start, int length, int pitch) {
  for (int t = start; t < start + length; ++t) roll.set(offset + t, pitch);
}

// Monophonic 50-step melody from `first` to `last`; each note is followed by
// a one-step rest and the phrase closes with a held last note.
void write_section(PianoRoll& roll, int offset, int first, int last, std::mt19937_64& rng) {
  static constexpr int kLengths[] = {3, 3, 5, 5, 7};
  int t = 0;
  int len = kLengths[pick(rng, 5)];
  put_note(roll, offset, t, len, first);
  t += len + 1;
  int degree = pitch_degree(first);
  const int lo = pitch_degree(57), hi = pitch_degree(81);
  while (t < 36) {
    len = std::min(kLengths[pick(rng, 5)], 36 - t);
    degree = std::clamp(degree + pick(rng, 5) - 2, lo, hi);
    put_note(roll, offset, t, len, degree_pitch(degree));
    t += len + 1;
  }
  put_note(roll, offset, 38, 10, last);
}

}  // namespace

std::vector<PianoRoll> synth_song_rolls(const SynthOptions& opts) {
  if (opts.songs <= 0 || opts.pair_count <= 0 || opts.pair_count > static_cast<int>(kPairs.size()) ||
      opts.phrases <= 0)
    throw RangeError("synth: songs, pair_count (1..8) and phrases must be positive");
  std::vector<PianoRoll> songs;
  for (int s = 0; s < opts.songs; ++s) {
    std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(s)));
    const std::string form = kForms[static_cast<std::size_t>(pick(rng, static_cast<int>(kForms.size())))];
    PianoRoll section[4] = {PianoRoll(kPhraseSteps), PianoRoll(kPhraseSteps), PianoRoll(kPhraseSteps),
                            PianoRoll(kPhraseSteps)};
    for (auto& sec : section) {
      const auto [first, last] = kPairs[static_cast<std::size_t>(pick(rng, opts.pair_count))];
      write_section(sec, 0, first, last, rng);
    }
    PianoRoll song(opts.phrases * kPhraseSteps);
    for (int p = 0; p < opts.phrases; ++p) {
      const auto& sec = section[form[static_cast<std::size_t>(p) % form.size()] - 'A'];
      for (int t = 0; t < kPhraseSteps; ++t)
        for (int pitch = 0; pitch < kPitchCount; ++pitch)
          if (sec.at(t, pitch)) song.set(p * kPhraseSteps + t, pitch);
    }
    songs.push_back(std::move(song));
  }
  return songs;
}

std::vector<std::filesystem::path> write_synthetic_corpus(const std::filesystem::path& dir, const SynthOptions& opts) {
  std::filesystem::create_directories(dir);
  const auto songs = synth_song_rolls(opts);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < songs.size(); ++i) {
    std::mt19937_64 rng(derive_seed(opts.seed, 0x7EA5 + i));
    const int shift = opts.transpose ? pick(rng, 12) - 5 : 0;
    PianoRoll moved(songs[i].rows());
    for (int t = 0; t < moved.rows(); ++t)
      for (int p = 0; p < kPitchCount; ++p)
        if (songs[i].at(t, p)) moved.set(t, p + shift);
    char name[32];
    std::snprintf(name, sizeof name, "song_%03zu.mid", i);
    paths.push_back(dir / name);
    export_midi(moved, paths.back());
  }
  return paths;
}

}  // namespace sandwich
