#include <gtest/gtest.h>

#include <random>

#include "sandwich/corpus.h"
#include "sandwich/store.h"
#include "test_util.h"

namespace sandwich {
namespace {

using testing::SmfBuilder;
using testing::TempDir;

NoteSequence tune(const std::vector<std::pair<int, double>>& notes) {
  NoteSequence seq;
  double t = 0;
  for (const auto& [pitch, dur] : notes) {
    seq.notes.push_back({pitch, t, dur, 90});
    t += dur;
  }
  seq.end_beat = t;
  return seq;
}

TEST(LoadMidi, ThreeSequentialNotes) {
  const NoteEvent notes[] = {{60, 0, 1, 90}, {64, 1, 1, 90}, {67, 2, 1, 90}};
  const auto seq = parse_midi(encode_midi(notes, 3.0), "three");
  ASSERT_EQ(seq.notes.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(seq.notes[i].onset, i);
    EXPECT_DOUBLE_EQ(seq.notes[i].duration, 1.0);
  }
  EXPECT_EQ(seq.notes[0].pitch, 60);
  EXPECT_EQ(seq.notes[1].pitch, 64);
  EXPECT_EQ(seq.notes[2].pitch, 67);
}

TEST(LoadMidi, NoNotesIsEmptyFileError) {
  EXPECT_THROW(parse_midi(encode_midi({}, 4.0), "empty"), EmptyFileError);
}

TEST(LoadMidi, TruncatedHeaderIsParseError) {
  auto bytes = encode_midi(std::vector<NoteEvent>{{60, 0, 1, 90}}, 1.0);
  bytes.resize(10);
  EXPECT_THROW(parse_midi(bytes, "cut"), ParseError);
  const std::vector<std::uint8_t> junk{'R', 'I', 'F', 'F', 0, 0, 0, 6, 0, 0, 0, 1, 0, 96};
  EXPECT_THROW(parse_midi(junk, "junk"), ParseError);
}

TEST(LoadMidi, TruncatedTrackIsParseError) {
  auto bytes = SmfBuilder(96).on(0, 60).off(96, 60).build();
  bytes.resize(bytes.size() - 6);
  EXPECT_THROW(parse_midi(bytes, "cut"), ParseError);
}

TEST(LoadMidi, RunningStatusAndVelocityZeroNoteOff) {
  // 0x90 60 90, then running-status note-on velocity 0 acting as note-off
  std::vector<std::uint8_t> bytes = SmfBuilder(4).build();
  const std::vector<std::uint8_t> body{0x00, 0x90, 60, 90, 0x04, 60, 0x00, 0x00, 64, 80, 0x02, 64, 0x00,
                                       0x00, 0xFF, 0x2F, 0x00};
  bytes.resize(bytes.size() - 8);
  const auto n = static_cast<std::uint8_t>(body.size());
  bytes.insert(bytes.end(), {0, 0, 0, n});
  bytes.insert(bytes.end(), body.begin(), body.end());
  const auto seq = parse_midi(bytes, "running");
  ASSERT_EQ(seq.notes.size(), 2u);
  EXPECT_DOUBLE_EQ(seq.notes[0].duration, 1.0);
  EXPECT_EQ(seq.notes[1].pitch, 64);
  EXPECT_DOUBLE_EQ(seq.notes[1].onset, 1.0);
  EXPECT_DOUBLE_EQ(seq.notes[1].duration, 0.5);
}

TEST(LoadMidi, MissingFileIsIoError) {
  EXPECT_THROW(load_midi("/nonexistent/file.mid"), IoError);
}

// Expected shifts come from tests/oracles/key_oracle.py.
TEST(Normalize, KeyEstimationMatchesOracle) {
  struct Case {
    std::vector<std::pair<int, double>> notes;
    int shift;
  };
  const Case cases[] = {
      {{{67, 2}, {69, 1}, {71, 1}, {72, 1}, {74, 2}, {76, 1}, {78, 1}, {79, 4}, {74, 2}, {71, 2}, {67, 4}}, -7},
      {{{60, 2}, {62, 1}, {64, 1}, {65, 1}, {67, 2}, {69, 1}, {71, 1}, {72, 4}, {67, 2}, {64, 2}, {60, 4}}, 0},
      {{{62, 2}, {66, 2}, {69, 2}, {74, 4}, {73, 1}, {71, 1}, {69, 2}, {67, 1}, {66, 1}, {64, 2}, {62, 4}}, -2},
      {{{63, 3}, {67, 1}, {70, 2}, {75, 2}, {74, 1}, {72, 1}, {70, 2}, {68, 1}, {67, 1}, {65, 2}, {63, 4}}, -3},
      {{{69, 2}, {73, 2}, {76, 2}, {81, 2}, {80, 1}, {78, 1}, {76, 1}, {74, 1}, {73, 2}, {71, 2}, {69, 4}}, -9},
  };
  for (const auto& c : cases) {
    const auto in = tune(c.notes);
    const auto out = normalize(in);
    EXPECT_EQ(out.transposition, c.shift);
    ASSERT_EQ(out.notes.size(), in.notes.size());
    for (std::size_t i = 0; i < in.notes.size(); ++i) EXPECT_EQ(out.notes[i].pitch, in.notes[i].pitch + c.shift);
  }
}

TEST(Normalize, GMajorShiftsDownSeven) {
  const auto out = normalize(
      tune({{67, 2}, {69, 1}, {71, 1}, {72, 1}, {74, 2}, {76, 1}, {78, 1}, {79, 4}, {74, 2}, {71, 2}, {67, 4}}));
  EXPECT_EQ(out.transposition, -7);
  EXPECT_EQ(out.notes.front().pitch, 60);
}

TEST(Normalize, CMajorUnchanged) {
  const auto in = tune({{60, 2}, {64, 1}, {67, 1}, {72, 2}, {65, 1}, {62, 1}, {59, 1}, {60, 4}});
  const auto out = normalize(in);
  EXPECT_EQ(out.transposition, 0);
  for (std::size_t i = 0; i < in.notes.size(); ++i) EXPECT_EQ(out.notes[i], in.notes[i]);
}

TEST(Normalize, SixtyBpmSecondBecomesTwoBeats) {
  // 60 bpm, ppq 480: a 480-tick note lasts one second.
  const auto bytes = SmfBuilder(480).tempo(0, 1'000'000).on(0, 60).off(480, 60).on(0, 64).off(480, 64).build();
  const auto seq = parse_midi(bytes, "slow");
  ASSERT_EQ(seq.tempo_map.size(), 1u);
  EXPECT_DOUBLE_EQ(seq.tempo_map[0].bpm, 60.0);
  const auto out = normalize(seq);
  EXPECT_DOUBLE_EQ(out.notes[0].duration, 2.0);
  EXPECT_DOUBLE_EQ(out.notes[1].onset, 2.0);
  EXPECT_DOUBLE_EQ(out.end_beat, 4.0);
}

TEST(Normalize, TempoChangeMidway) {
  // 120 bpm for one beat, then 60 bpm: beat 2 of the source lands at 1.5 s = beat 3.
  const auto bytes =
      SmfBuilder(4).on(0, 60).tempo(4, 1'000'000).off(0, 60).on(0, 62).off(4, 62).build();
  const auto out = normalize(parse_midi(bytes, "tempo"));
  ASSERT_EQ(out.notes.size(), 2u);
  EXPECT_DOUBLE_EQ(out.notes[0].duration, 1.0);
  EXPECT_DOUBLE_EQ(out.notes[1].onset, 1.0);
  EXPECT_DOUBLE_EQ(out.notes[1].duration, 2.0);
}

TEST(Normalize, EmptyIsKeyEstimationError) {
  EXPECT_THROW(normalize(NoteSequence{}), KeyEstimationError);
  EXPECT_THROW(estimate_major_key({}), KeyEstimationError);
}

TEST(Normalize, IdempotentOnRandomSequences) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pitch(40, 90), beats(1, 8), tempo(40, 200);
  for (int trial = 0; trial < 200; ++trial) {
    NoteSequence seq;
    double t = 0;
    for (int i = 0; i < 24; ++i) {
      const double d = beats(rng) * 0.25;
      seq.notes.push_back({pitch(rng), t, d, 80});
      t += d;
    }
    seq.end_beat = t;
    seq.tempo_map = {{0.0, static_cast<double>(tempo(rng))}, {t / 2, static_cast<double>(tempo(rng))}};
    const auto once = normalize(seq);
    const auto twice = normalize(once);
    EXPECT_EQ(twice.transposition, once.transposition);
    ASSERT_EQ(twice.notes.size(), once.notes.size());
    for (std::size_t i = 0; i < once.notes.size(); ++i) EXPECT_EQ(twice.notes[i], once.notes[i]);
    EXPECT_EQ(twice.end_beat, once.end_beat);
  }
}

TEST(PianoRollConversion, SingleNote) {
  NoteSequence seq;
  seq.notes = {{60, 0.0, 2 * kBeatsPerStep, 90}};
  const auto roll = to_piano_roll(seq);
  ASSERT_EQ(roll.rows(), 2);
  EXPECT_EQ(roll.active_cells(), 2u);
  EXPECT_EQ(roll.at(0, 60), 1);
  EXPECT_EQ(roll.at(1, 60), 1);
}

TEST(PianoRollConversion, EmptyGivesZeroRows) {
  EXPECT_EQ(to_piano_roll(NoteSequence{}).rows(), 0);
}

TEST(PianoRollConversion, PolyphonyPreserved) {
  NoteSequence seq;
  seq.notes = {{60, 3 * kBeatsPerStep, kBeatsPerStep, 90}, {64, 3 * kBeatsPerStep, 2 * kBeatsPerStep, 90}};
  const auto roll = to_piano_roll(seq);
  EXPECT_EQ(roll.at(3, 60), 1);
  EXPECT_EQ(roll.at(3, 64), 1);
  EXPECT_EQ(roll.at(4, 64), 1);
  EXPECT_EQ(roll.at(4, 60), 0);
}

TEST(PianoRollConversion, ShortNoteKeepsOneStep) {
  NoteSequence seq;
  seq.notes = {{72, 1.0, 0.01, 90}};
  const auto roll = to_piano_roll(seq);
  EXPECT_EQ(roll.active_cells(), 1u);
  EXPECT_EQ(roll.at(6, 72), 1);  // 1 beat * 6.25 rounds to step 6
}

TEST(SplitPhrases, Examples) {
  EXPECT_EQ(split_phrases(PianoRoll(850)).size(), 17u);
  EXPECT_EQ(split_phrases(PianoRoll(120)).size(), 2u);
  EXPECT_TRUE(split_phrases(PianoRoll(49)).empty());
}

TEST(SplitPhrases, CountIsFloorAndContentPreserved) {
  std::mt19937_64 rng(3);
  for (int rows = 0; rows < 400; rows += 7) {
    const auto roll = testing::random_song_grid(rng, rows);
    const auto phrases = split_phrases(roll);
    ASSERT_EQ(static_cast<int>(phrases.size()), rows / 50);
    for (std::size_t i = 0; i < phrases.size(); ++i)
      EXPECT_EQ(phrases[i].grid(), roll.slice(static_cast<int>(i) * 50, 50));
  }
}

TEST(SongTensorBuild, BoundaryAndRejection) {
  std::vector<Phrase> phrases;
  for (int i = 0; i < 25; ++i) phrases.push_back(testing::phrase_with_notes({{0, 10, 60}, {40, 10, 67}}));
  const auto dict = FlnDictionary::build(phrases, 1);

  const auto twenty = build_song_tensor(std::span(phrases).first(20), dict);
  EXPECT_EQ(twenty.phrases.size(), 17u);
  EXPECT_EQ(twenty.concatenated().rows(), 850);
  EXPECT_EQ(twenty.labels, std::vector<int>(17, 1));

  EXPECT_EQ(build_song_tensor(std::span(phrases).first(17), dict).phrases.size(), 17u);
  EXPECT_THROW(build_song_tensor(std::span(phrases).first(10), dict), TooShortError);
}

TEST(ExportMidi, AllZeroSongHasNoNotes) {
  TempDir dir("export");
  const auto song = SongTensor::from_grid(PianoRoll(kSongSteps));
  export_midi(song.concatenated(), dir / "zero.mid");
  const auto bytes = read_file(dir / "zero.mid");
  EXPECT_THROW(parse_midi(bytes, "zero"), EmptyFileError);  // structurally valid, no notes
}

TEST(ExportMidi, ThreeStepNoteMerged) {
  PianoRoll roll(kSongSteps);
  for (int t = 10; t < 13; ++t) roll.set(t, 60);
  const auto seq = parse_midi(encode_midi(roll_to_notes(roll), kSongSteps * kBeatsPerStep), "merge");
  ASSERT_EQ(seq.notes.size(), 1u);
  EXPECT_NEAR(seq.notes[0].duration, 3 * kBeatsPerStep, 1e-12);
  EXPECT_NEAR(seq.notes[0].onset, 10 * kBeatsPerStep, 1e-12);
}

TEST(ExportMidi, UnwritablePathIsIoError) {
  EXPECT_THROW(export_midi(PianoRoll(50), "/nonexistent/dir/x.mid"), IoError);
}

TEST(ExportMidi, RoundTripTenRandomSongs) {
  TempDir dir("roundtrip");
  std::mt19937_64 rng(11);
  for (int i = 0; i < 10; ++i) {
    const auto grid = testing::random_song_grid(rng);
    auto song = SongTensor::from_grid(grid);
    song.labels.assign(17, 0);
    const auto path = dir / ("song" + std::to_string(i) + ".mid");
    export_midi(song, path);
    EXPECT_EQ(to_piano_roll(load_midi(path)), grid) << "song " << i;
  }
}

TEST(Store, HeaderLayoutAndRoundTrip) {
  ByteTensor t{{2, 3}, {1, 0, 1, 1, 1, 0}};
  const auto bytes = encode_store(t);
  const std::vector<std::uint8_t> header{'M', 'S', 'W', '1', 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0};
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_TRUE(std::equal(header.begin(), header.end(), bytes.begin()));
  const auto back = decode_store(bytes);
  EXPECT_EQ(back.shape, t.shape);
  EXPECT_EQ(back.data, t.data);

  auto bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_store(bad), ParseError);
  bad = bytes;
  bad[3] = '2';
  EXPECT_THROW(decode_store(bad), ParseError);
}

TEST(Store, PhraseAndSongStacks) {
  TempDir dir("store");
  std::mt19937_64 rng(2);
  const auto phrases = split_phrases(testing::random_song_grid(rng, 500));
  save_phrases(dir / "p.msw", phrases);
  EXPECT_EQ(load_phrases(dir / "p.msw"), phrases);

  auto song = SongTensor::from_grid(testing::random_song_grid(rng));
  song.labels.assign(17, 2);
  save_song_grids(dir / "s.msw", std::vector{song});
  save_label_sequences(dir / "s.labels", {song.labels});
  const auto songs = load_songs(dir / "s.msw", dir / "s.labels", 5);
  ASSERT_EQ(songs.size(), 1u);
  EXPECT_EQ(songs[0].concatenated(), song.concatenated());
  EXPECT_EQ(songs[0].labels, song.labels);
}

TEST(Store, LabelFileValidation) {
  TempDir dir("labels");
  write_text(dir / "ok", "1 2 3\n");
  EXPECT_EQ(load_label_sequences(dir / "ok", 4, 3).front(), (std::vector<int>{1, 2, 3}));
  write_text(dir / "range", "1 2 9\n");
  EXPECT_THROW(load_label_sequences(dir / "range", 4, 3), RangeError);
  write_text(dir / "short", "1 2\n");
  EXPECT_THROW(load_label_sequences(dir / "short", 4, 3), RangeError);
  write_text(dir / "junk", "1 x 2\n");
  EXPECT_THROW(load_label_sequences(dir / "junk", 4, 3), RangeError);
}

}  // namespace
}  // namespace sandwich
