/**
 * @file midi.h
 * @brief Standard MIDI File reading and writing.
 *
 * Reading accepts format 0 and 1 files (PPQ or SMPTE division) and yields
 * note events in beats of the source file, together with its tempo map.
 * Writing always produces a single-track format 0 file at 120 bpm.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sandwich {

struct NoteEvent {
  int pitch = 60;         ///< 0..127
  double onset = 0.0;     ///< beats, >= 0
  double duration = 1.0;  ///< beats, > 0
  int velocity = 100;     ///< 0..127

  bool operator==(const NoteEvent&) const = default;
};

/// Tempo in effect from `beat` (source beats) onward.
struct TempoChange {
  double beat = 0.0;
  double bpm = 120.0;

  bool operator==(const TempoChange&) const = default;
};

/// Notes of one file plus the timing context needed to normalize them.
struct NoteSequence {
  std::vector<NoteEvent> notes;  ///< sorted by (onset, pitch)
  std::vector<TempoChange> tempo_map{TempoChange{}};
  double end_beat = 0.0;  ///< end of the longest track, >= last note end
  int transposition = 0;  ///< semitones applied by normalize()
  bool normalized = false;
  std::string source;
};

/// Parses an in-memory SMF. Throws ParseError / EmptyFileError.
NoteSequence parse_midi(std::span<const std::uint8_t> bytes, const std::string& source = {});

/// Reads and parses a file. Throws IoError when it cannot be opened.
NoteSequence load_midi(const std::filesystem::path& path);

/// Ticks per quarter note used by write_midi().
inline constexpr int kExportTicksPerBeat = 100;

/// Encodes notes (beats at 120 bpm) as a format 0 SMF. Onsets and durations
/// are rounded to the tick grid; the track ends at max(end_beat, last note end).
std::vector<std::uint8_t> encode_midi(std::span<const NoteEvent> notes, double end_beat);

/// encode_midi() to a file. Throws IoError on unwritable paths.
void write_midi(const std::filesystem::path& path, std::span<const NoteEvent> notes,
                double end_beat);

}  // namespace sandwich
