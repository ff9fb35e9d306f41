/**
 * @file corpus.h
 * @brief Preprocessing: key/tempo normalization, piano rolls, phrases, songs.
 */
#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "sandwich/fln.h"
#include "sandwich/midi.h"
#include "sandwich/piano_roll.h"

namespace sandwich {

struct KeyEstimate {
  int tonic = 0;  ///< pitch class of the major key, 0 = C
  double correlation = 0.0;
  std::array<double, 12> scores{};  ///< correlation per candidate tonic
};

/// Duration-weighted pitch-class histogram correlated against the twelve
/// rotations of the Krumhansl-Kessler major profile. Ties go to the key with
/// the smallest transposition. Throws KeyEstimationError on an empty histogram.
KeyEstimate estimate_major_key(std::span<const NoteEvent> notes);

/// Re-times every note on a 120 bpm grid and transposes by -tonic so the
/// estimated key is C major. Notes pushed outside 0..127 are dropped.
NoteSequence normalize(const NoteSequence& seq);

/// Cell (t, p) is set iff a note of pitch p sounds during step t. Onsets and
/// offsets round to the nearest step; every note keeps at least one step. The
/// roll is as long as the sequence end (end_beat) or the last note, whichever
/// is later.
PianoRoll to_piano_roll(const NoteSequence& seq, double steps_per_beat = kStepsPerBeat);

/// Consecutive non-overlapping 50-row windows; the remainder is dropped.
std::vector<Phrase> split_phrases(const PianoRoll& roll);

/// First 17 phrases, labeled. Throws TooShortError for fewer than 17.
SongTensor build_song_tensor(std::span<const Phrase> phrases, const FlnDictionary& dict);

/// Merges consecutive active steps of each pitch into notes (beats at 120 bpm).
std::vector<NoteEvent> roll_to_notes(const PianoRoll& roll, double beats_per_step = kBeatsPerStep);

/// Writes the song as a 120 bpm format 0 MIDI file, 0.16 beat per step.
void export_midi(const SongTensor& song, const std::filesystem::path& path);
void export_midi(const PianoRoll& roll, const std::filesystem::path& path);

}  // namespace sandwich
