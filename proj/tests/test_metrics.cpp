#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "sandwich/errors.h"
#include "sandwich/metrics.h"
#include "test_util.h"

namespace sandwich {
namespace {

PianoRoll song_with(std::initializer_list<std::tuple<int, int, int>> notes, int rows = kSongSteps) {
  PianoRoll r(rows);
  for (const auto& [start, len, pitch] : notes)
    for (int t = start; t < start + len; ++t) r.set(t, pitch);
  return r;
}

std::vector<PianoRoll> one(PianoRoll r) { return {std::move(r)}; }

TEST(EmptyBars, Extremes) {
  EXPECT_DOUBLE_EQ(empty_bars(one(PianoRoll(kSongSteps))), 100.0);
  PianoRoll full(kSongSteps);
  for (int bar = 0; bar < 34; ++bar) full.set(bar * 25 + 3, 60);
  EXPECT_DOUBLE_EQ(empty_bars(one(full)), 0.0);
  EXPECT_DOUBLE_EQ(empty_bars(one(song_with({{0, 2, 60}}))), 100.0 * 33 / 34);
  EXPECT_THROW(empty_bars({}), EmptyInputError);
}

TEST(UsedPitchClasses, Examples) {
  const auto triad = song_with({{0, 5, 60}, {0, 5, 64}, {0, 5, 67}}, 25);
  EXPECT_DOUBLE_EQ(used_pitch_classes(one(triad)), 3.0);
  EXPECT_DOUBLE_EQ(used_pitch_classes(one(song_with({{0, 5, 60}, {10, 5, 72}}, 25))), 1.0);
  // empty bars count as 0 unless excluded
  const auto half = song_with({{0, 5, 60}, {0, 5, 64}}, 50);
  EXPECT_DOUBLE_EQ(used_pitch_classes(one(half)), 1.0);
  MetricsOptions opts;
  opts.upc_exclude_empty = true;
  EXPECT_DOUBLE_EQ(used_pitch_classes(one(half), opts), 2.0);
}

TEST(QualifiedNotes, ThresholdBehaviour) {
  EXPECT_DOUBLE_EQ(qualified_notes(one(song_with({{0, 1, 60}}))), 0.0);
  EXPECT_DOUBLE_EQ(qualified_notes(one(song_with({{0, 2, 60}, {5, 9, 62}}))), 100.0);
  EXPECT_DOUBLE_EQ(qualified_notes(one(song_with({{0, 1, 60}, {5, 3, 62}}))), 50.0);
  EXPECT_DOUBLE_EQ(qualified_notes(one(PianoRoll(kSongSteps))), 0.0);
}

TEST(QualifiedNotes, MonotoneInThreshold) {
  std::mt19937_64 rng(3);
  std::vector<PianoRoll> songs;
  for (int i = 0; i < 5; ++i) songs.push_back(testing::random_song_grid(rng, kSongSteps));
  double prev = 101;
  for (int k = 1; k <= 10; ++k) {
    MetricsOptions opts;
    opts.qn_min_steps = k;
    const double q = qualified_notes(songs, opts);
    EXPECT_LE(q, prev);
    prev = q;
  }
}

TEST(IrregularTone, Examples) {
  EXPECT_DOUBLE_EQ(irregular_tone(one(song_with({{0, 2, 60}, {4, 2, 62}, {8, 2, 71}}))), 0.0);
  PianoRoll r(kSongSteps);
  for (int i = 0; i < 9; ++i)
    for (int t = 0; t < 3; ++t) r.set(i * 5 + t, 60);
  for (int t = 60; t < 63; ++t) r.set(t, 66);  // F sharp
  EXPECT_DOUBLE_EQ(irregular_tone(one(r)), 10.0);
}

TEST(MergedNotes, SplitsOnGaps) {
  const auto notes = merged_notes(song_with({{0, 3, 60}, {4, 2, 60}, {1, 1, 64}}, 10));
  ASSERT_EQ(notes.size(), 3u);
  EXPECT_EQ(notes[0].start, 0);
  EXPECT_EQ(notes[0].length, 3);
  EXPECT_EQ(notes[1].pitch, 64);
  EXPECT_EQ(notes[2].start, 4);
  EXPECT_EQ(notes[2].length, 2);
}

TEST(Metrics, RangesPurityPermutationAndUnion) {
  std::mt19937_64 rng(8);
  std::vector<PianoRoll> a, b;
  for (int i = 0; i < 4; ++i) a.push_back(testing::random_song_grid(rng, kSongSteps));
  for (int i = 0; i < 3; ++i) b.push_back(testing::random_song_grid(rng, kSongSteps));
  a.push_back(PianoRoll(kSongSteps));
  auto all = a;
  all.insert(all.end(), b.begin(), b.end());

  const auto r = evaluate(all);
  for (const double v : {r.eb_percent, r.qn_percent, r.it_percent}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 100.0);
  }
  EXPECT_GE(r.upc, 0.0);
  EXPECT_LE(r.upc, 12.0);
  EXPECT_EQ(evaluate(all).to_key_values(), r.to_key_values());

  auto shuffled = all;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_EQ(evaluate(shuffled).to_key_values(), r.to_key_values());

  // metric over A u B is the count-weighted combination
  auto bars = [](const std::vector<PianoRoll>& s) { return static_cast<double>(s.size() * 34); };
  auto notes = [](const std::vector<PianoRoll>& s) {
    double n = 0;
    for (const auto& x : s) n += static_cast<double>(merged_notes(x).size());
    return n;
  };
  EXPECT_NEAR(empty_bars(all), (empty_bars(a) * bars(a) + empty_bars(b) * bars(b)) / bars(all), 1e-9);
  EXPECT_NEAR(qualified_notes(all), (qualified_notes(a) * notes(a) + qualified_notes(b) * notes(b)) / notes(all),
              1e-9);
  EXPECT_NEAR(irregular_tone(all), (irregular_tone(a) * notes(a) + irregular_tone(b) * notes(b)) / notes(all), 1e-9);
}

TEST(Metrics, ReportFormats) {
  auto r = evaluate(one(song_with({{0, 2, 60}})), {}, std::vector<std::string>{"tune"});
  r.fln_accuracy_percent = 87.5;
  const auto kv = r.to_key_values();
  EXPECT_NE(kv.find("eb_percent=97.058824\n"), std::string::npos);
  EXPECT_NE(kv.find("fln_accuracy_percent=87.500000\n"), std::string::npos);
  EXPECT_NE(kv.find("qn_min_steps=2\n"), std::string::npos);
  const auto table = r.to_table();
  EXPECT_NE(table.find("EB(%)"), std::string::npos);
  EXPECT_NE(table.find("tune"), std::string::npos);
  EXPECT_NE(table.find("87.50"), std::string::npos);
}

FlnDictionary three_class_dict() {
  std::vector<Phrase> phrases;
  for (int i = 0; i < 5; ++i) phrases.push_back(testing::phrase_with_notes({{0, 5, 60}, {40, 5, 67}}));
  for (int i = 0; i < 4; ++i) phrases.push_back(testing::phrase_with_notes({{0, 5, 62}, {40, 5, 65}}));
  for (int i = 0; i < 3; ++i) phrases.push_back(testing::phrase_with_notes({{0, 5, 64}}));
  return FlnDictionary::build(phrases, 1);
}

TEST(FlnAccuracy, ExemplarsEmptyAndExcludedLabels) {
  const auto dict = three_class_dict();
  ASSERT_EQ(dict.size(), 3);
  const auto exemplar = testing::phrase_with_notes({{0, 5, 60}, {40, 5, 67}});
  const std::vector<Phrase> phrases{exemplar, Phrase{}, exemplar, exemplar};
  const std::vector<int> labels{1, 2, 0, 4};  // 0 and K+1 are not counted
  EXPECT_DOUBLE_EQ(fln_accuracy(phrases, labels, dict), 50.0);
  const std::vector<int> uncounted{0, 4, 0, 4};
  EXPECT_THROW(fln_accuracy(phrases, uncounted, dict), EmptyInputError);
}

TEST(FlnAccuracy, MatchesIndependentRecount) {
  const auto dict = three_class_dict();
  std::mt19937_64 rng(4);
  std::vector<Phrase> phrases;
  std::vector<int> labels;
  const int firsts[] = {60, 62, 64, 67};
  for (int i = 0; i < 400; ++i) {
    const int f = firsts[rng() % 4], l = firsts[rng() % 4];
    phrases.push_back(rng() % 7 == 0 ? Phrase{} : testing::phrase_with_notes({{0, 5, f}, {40, 5, l}}));
    labels.push_back(static_cast<int>(rng() % 5));
  }
  // recount from raw cells: highest pitch on the first and last sounding rows
  long counted = 0, correct = 0;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (labels[i] < 1 || labels[i] > 3) continue;
    ++counted;
    int first_row = -1, last_row = -1;
    for (int t = 0; t < 50; ++t)
      for (int p = 0; p < 128; ++p)
        if (phrases[i].at(t, p)) {
          if (first_row < 0) first_row = t;
          last_row = t;
        }
    if (first_row < 0) continue;
    int first = -1, last = -1;
    for (int p = 0; p < 128; ++p) {
      if (phrases[i].at(first_row, p)) first = p;
      if (phrases[i].at(last_row, p)) last = p;
    }
    const auto& want = dict.entries()[static_cast<std::size_t>(labels[i] - 1)].pair;
    if (first == want.first && last == want.last) ++correct;
  }
  EXPECT_DOUBLE_EQ(fln_accuracy(phrases, labels, dict), 100.0 * static_cast<double>(correct) / static_cast<double>(counted));
}

TEST(LatentDiff, IdentityAndSubtraction) {
  LcvaeConfig cfg;
  cfg.latent_dim = 32;
  cfg.intermediate_dim = 8;
  cfg.class_count = 5;
  auto model = make_lcvae(cfg);
  const auto dict = three_class_dict();
  const auto p = testing::phrase_with_notes({{0, 5, 60}, {40, 5, 67}});
  const auto r = latent_diff(p, p, model, dict);
  ASSERT_EQ(r.diffs.size(), 32u);
  EXPECT_EQ(r.max, 0.0);
  for (const double d : r.diffs) EXPECT_GE(d, 0.0);

  const auto q = testing::phrase_with_notes({{0, 5, 62}, {40, 5, 65}});
  const auto pq = latent_diff(p, q, model, dict);
  EXPECT_GT(pq.max, 0.0);
  EXPECT_NEAR(pq.mean, std::accumulate(pq.diffs.begin(), pq.diffs.end(), 0.0) / 32, 1e-12);
}

}  // namespace
}  // namespace sandwich
