#include "sandwich/metrics.h"

#include <algorithm>
#include <bitset>
#include <cstdio>

#include "sandwich/errors.h"
#include "sandwich/nn.h"

namespace sandwich {

namespace {

void require_songs(std::span<const PianoRoll> songs, const char* what) {
  if (songs.empty()) throw EmptyInputError(std::string(what) + ": no songs");
}

bool diatonic(int pitch) {
  static constexpr bool kMajor[12] = {true, false, true, false, true, true, false, true, false, true, false, true};
  return kMajor[pitch % 12];
}

struct BarCounts {
  long bars = 0;
  long empty = 0;
  long pitch_classes = 0;  // summed over bars
};

BarCounts count_bars(const PianoRoll& song, int bar_steps) {
  BarCounts c;
  for (int start = 0; start + bar_steps <= song.rows(); start += bar_steps) {
    std::bitset<12> used;
    for (int t = start; t < start + bar_steps; ++t) {
      const auto row = song.row(t);
      for (int p = 0; p < kPitchCount; ++p)
        if (row[static_cast<std::size_t>(p)]) used.set(static_cast<std::size_t>(p % 12));
    }
    ++c.bars;
    if (used.none()) ++c.empty;
    c.pitch_classes += static_cast<long>(used.count());
  }
  return c;
}

double percent(long part, long whole) { return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole); }

double upc_of(const BarCounts& c, bool exclude_empty) {
  const long denom = exclude_empty ? c.bars - c.empty : c.bars;
  return denom == 0 ? 0.0 : static_cast<double>(c.pitch_classes) / static_cast<double>(denom);
}

BarCounts total_bars(std::span<const PianoRoll> songs, int bar_steps) {
  BarCounts total;
  for (const auto& s : songs) {
    const auto c = count_bars(s, bar_steps);
    total.bars += c.bars;
    total.empty += c.empty;
    total.pitch_classes += c.pitch_classes;
  }
  return total;
}

}  // namespace

std::vector<RollNote> merged_notes(const PianoRoll& roll) {
  std::vector<RollNote> notes;
  for (int p = 0; p < kPitchCount; ++p) {
    int start = -1;
    for (int t = 0; t <= roll.rows(); ++t) {
      const bool on = t < roll.rows() && roll.at(t, p);
      if (on && start < 0) start = t;
      if (!on && start >= 0) {
        notes.push_back({p, start, t - start});
        start = -1;
      }
    }
  }
  std::sort(notes.begin(), notes.end(), [](const RollNote& a, const RollNote& b) {
    return a.start != b.start ? a.start < b.start : a.pitch < b.pitch;
  });
  return notes;
}

double empty_bars(std::span<const PianoRoll> songs, const MetricsOptions& opts) {
  require_songs(songs, "empty_bars");
  const auto c = total_bars(songs, opts.bar_steps);
  return percent(c.empty, c.bars);
}

double used_pitch_classes(std::span<const PianoRoll> songs, const MetricsOptions& opts) {
  require_songs(songs, "used_pitch_classes");
  return upc_of(total_bars(songs, opts.bar_steps), opts.upc_exclude_empty);
}

double qualified_notes(std::span<const PianoRoll> songs, const MetricsOptions& opts) {
  require_songs(songs, "qualified_notes");
  long total = 0, qualified = 0;
  for (const auto& s : songs)
    for (const auto& n : merged_notes(s)) {
      ++total;
      if (n.length >= opts.qn_min_steps) ++qualified;
    }
  return percent(qualified, total);
}

double irregular_tone(std::span<const PianoRoll> songs) {
  require_songs(songs, "irregular_tone");
  long total = 0, irregular = 0;
  for (const auto& s : songs)
    for (const auto& n : merged_notes(s)) {
      ++total;
      if (!diatonic(n.pitch)) ++irregular;
    }
  return percent(irregular, total);
}

double fln_accuracy(std::span<const Phrase> phrases, std::span<const int> labels, const FlnDictionary& dict) {
  if (phrases.size() != labels.size()) throw ShapeError("fln_accuracy: phrase and label counts differ");
  long counted = 0, correct = 0;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (!dict.is_concrete(labels[i])) continue;
    ++counted;
    if (extract_fln(phrases[i]) == dict.pair_of(labels[i])) ++correct;
  }
  if (counted == 0) throw EmptyInputError("fln_accuracy: no phrases with concrete labels");
  return percent(correct, counted);
}

MetricsReport evaluate(std::span<const PianoRoll> songs, const MetricsOptions& opts,
                       std::span<const std::string> names) {
  require_songs(songs, "evaluate");
  if (!names.empty() && names.size() != songs.size()) throw ShapeError("evaluate: one name per song expected");
  MetricsReport r;
  r.options = opts;
  r.eb_percent = empty_bars(songs, opts);
  r.upc = used_pitch_classes(songs, opts);
  r.qn_percent = qualified_notes(songs, opts);
  r.it_percent = irregular_tone(songs);
  for (std::size_t i = 0; i < songs.size(); ++i) {
    const auto one = songs.subspan(i, 1);
    SongMetrics m;
    m.name = names.empty() ? "song" + std::to_string(i) : names[i];
    m.eb = empty_bars(one, opts);
    m.upc = used_pitch_classes(one, opts);
    m.qn = qualified_notes(one, opts);
    m.it = irregular_tone(one);
    r.per_song.push_back(std::move(m));
  }
  return r;
}

std::string MetricsReport::to_table() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %8s %8s %8s %8s %8s\n", "", "EB(%)", "UPC", "QN(%)", "IT(%)", "FLN(%)");
  out += buf;
  const std::string fln = fln_accuracy_percent ? [&] {
    char f[32];
    std::snprintf(f, sizeof f, "%.2f", *fln_accuracy_percent);
    return std::string(f);
  }()
                                               : std::string("-");
  std::snprintf(buf, sizeof buf, "%-24s %8.2f %8.2f %8.2f %8.2f %8s\n", "all", eb_percent, upc, qn_percent,
                it_percent, fln.c_str());
  out += buf;
  for (const auto& s : per_song) {
    std::snprintf(buf, sizeof buf, "%-24.24s %8.2f %8.2f %8.2f %8.2f %8s\n", s.name.c_str(), s.eb, s.upc, s.qn, s.it,
                  "-");
    out += buf;
  }
  return out;
}

std::string MetricsReport::to_key_values() const {
  std::string out;
  char buf[128];
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%s=%.6f\n", key, v);
    out += buf;
  };
  put("eb_percent", eb_percent);
  put("upc", upc);
  put("qn_percent", qn_percent);
  put("it_percent", it_percent);
  if (fln_accuracy_percent) put("fln_accuracy_percent", *fln_accuracy_percent);
  out += "songs=" + std::to_string(per_song.size()) + "\n";
  out += "bar_steps=" + std::to_string(options.bar_steps) + "\n";
  out += "qn_min_steps=" + std::to_string(options.qn_min_steps) + "\n";
  out += std::string("upc_exclude_empty=") + (options.upc_exclude_empty ? "true" : "false") + "\n";
  out += "scale=C major (C D E F G A B)\n";
  return out;
}

LatentDiffReport latent_diff(const Phrase& a, const Phrase& b, Lcvae& lcvae, const FlnDictionary& dict) {
  torch::NoGradGuard guard;
  const std::vector<Phrase> pair{a, b};
  const auto x = phrases_to_tensor(pair);
  const auto mu = lcvae->encode(x).mu;
  const auto cm = lcvae->class_mean(torch::tensor({static_cast<std::int64_t>(dict.label(a)),
                                                   static_cast<std::int64_t>(dict.label(b))}));
  const auto rel = (mu - cm).to(torch::kFloat64);
  const auto d = (rel[0] - rel[1]).abs().contiguous();
  LatentDiffReport r;
  r.diffs.assign(d.data_ptr<double>(), d.data_ptr<double>() + d.numel());
  r.max = d.max().item<double>();
  r.mean = d.mean().item<double>();
  return r;
}

}  // namespace sandwich
