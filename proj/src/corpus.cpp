#include "sandwich/corpus.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sandwich {

namespace {

// Krumhansl-Kessler major key profile, index 0 = tonic.
constexpr std::array<double, 12> kMajorProfile = {6.35, 2.23, 3.48, 2.33, 4.38, 4.09,
                                                   2.52, 5.19, 2.37, 3.66, 2.29, 2.88};

double pearson(const std::array<double, 12>& a, const std::array<double, 12>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / 12.0;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / 12.0;
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 12; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Seconds elapsed at `beat` under a piecewise-constant tempo map.
double seconds_at(const std::vector<TempoChange>& map, double beat) {
  double seconds = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double start = map[i].beat;
    if (beat <= start) break;
    const double stop = (i + 1 < map.size()) ? std::min(beat, map[i + 1].beat) : beat;
    seconds += (stop - start) * 60.0 / map[i].bpm;
  }
  return seconds;
}

}  // namespace

KeyEstimate estimate_major_key(std::span<const NoteEvent> notes) {
  std::array<double, 12> histogram{};
  double total = 0.0;
  for (const auto& n : notes) {
    if (n.duration <= 0.0) continue;
    histogram[static_cast<std::size_t>(n.pitch % 12)] += n.duration;
    total += n.duration;
  }
  if (total <= 0.0) throw KeyEstimationError("empty pitch-class histogram");

  KeyEstimate best;
  best.correlation = -2.0;
  for (int tonic = 0; tonic < 12; ++tonic) {
    std::array<double, 12> profile{};
    for (int pc = 0; pc < 12; ++pc) profile[pc] = kMajorProfile[(pc - tonic + 12) % 12];
    const double r = pearson(histogram, profile);
    best.scores[tonic] = r;
    // tonics are visited in increasing transposition distance, so strict > keeps the smaller one
    if (r > best.correlation) {
      best.correlation = r;
      best.tonic = tonic;
    }
  }
  return best;
}

NoteSequence normalize(const NoteSequence& seq) {
  if (seq.notes.empty()) throw KeyEstimationError("no notes to normalize");

  NoteSequence out;
  out.source = seq.source;
  out.tempo_map = {TempoChange{0.0, 120.0}};
  out.normalized = true;

  const bool already_120 = seq.tempo_map.size() == 1 && seq.tempo_map.front().bpm == 120.0;
  std::vector<NoteEvent> retimed;
  retimed.reserve(seq.notes.size());
  for (const auto& n : seq.notes) {
    if (already_120) {
      retimed.push_back(n);
      continue;
    }
    const double on = seconds_at(seq.tempo_map, n.onset) * 2.0;
    const double off = seconds_at(seq.tempo_map, n.onset + n.duration) * 2.0;
    retimed.push_back({n.pitch, on, off - on, n.velocity});
  }
  const double end = already_120 ? seq.end_beat : seconds_at(seq.tempo_map, seq.end_beat) * 2.0;

  const auto key = estimate_major_key(retimed);
  const int shift = -key.tonic;
  out.transposition = seq.transposition + shift;
  for (auto n : retimed) {
    n.pitch += shift;
    if (n.pitch < 0 || n.pitch > 127 || n.duration <= 0.0) continue;
    out.notes.push_back(n);
  }
  std::sort(out.notes.begin(), out.notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
  });
  out.end_beat = end;
  return out;
}

PianoRoll to_piano_roll(const NoteSequence& seq, double steps_per_beat) {
  struct Span {
    long long on, off;
    int pitch;
  };
  std::vector<Span> spans;
  spans.reserve(seq.notes.size());
  long long rows = std::llround(seq.end_beat * steps_per_beat);
  for (const auto& n : seq.notes) {
    const long long on = std::llround(n.onset * steps_per_beat);
    const long long off = std::max(on + 1, std::llround((n.onset + n.duration) * steps_per_beat));
    spans.push_back({on, off, n.pitch});
    rows = std::max(rows, off);
  }
  PianoRoll roll(static_cast<int>(std::max(0LL, rows)));
  for (const auto& s : spans)
    for (long long t = s.on; t < s.off; ++t) roll.set(static_cast<int>(t), s.pitch);
  roll.source = seq.source;
  roll.transposition = seq.transposition;
  return roll;
}

std::vector<Phrase> split_phrases(const PianoRoll& roll) {
  std::vector<Phrase> phrases;
  const int count = roll.rows() / kPhraseSteps;
  phrases.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) phrases.emplace_back(roll.slice(i * kPhraseSteps, kPhraseSteps));
  return phrases;
}

SongTensor build_song_tensor(std::span<const Phrase> phrases, const FlnDictionary& dict) {
  if (phrases.size() < kSongPhrases)
    throw TooShortError("song has " + std::to_string(phrases.size()) + " phrases, needs 17");
  SongTensor song;
  song.phrases.assign(phrases.begin(), phrases.begin() + kSongPhrases);
  for (const auto& p : song.phrases) song.labels.push_back(dict.label(p));
  return song;
}

std::vector<NoteEvent> roll_to_notes(const PianoRoll& roll, double beats_per_step) {
  std::vector<NoteEvent> notes;
  for (int p = 0; p < kPitchCount; ++p) {
    int start = -1;
    for (int t = 0; t <= roll.rows(); ++t) {
      const bool on = t < roll.rows() && roll.at(t, p);
      if (on && start < 0) start = t;
      if (!on && start >= 0) {
        notes.push_back({p, start * beats_per_step, (t - start) * beats_per_step, 100});
        start = -1;
      }
    }
  }
  std::sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
  });
  return notes;
}

void export_midi(const PianoRoll& roll, const std::filesystem::path& path) {
  const auto notes = roll_to_notes(roll);
  write_midi(path, notes, roll.rows() * kBeatsPerStep);
}

void export_midi(const SongTensor& song, const std::filesystem::path& path) {
  song.validate();
  export_midi(song.concatenated(), path);
}

}  // namespace sandwich
