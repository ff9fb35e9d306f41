#include "sandwich/fln.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sandwich/hash.h"

namespace sandwich {

namespace {

int highest_pitch(const PianoRoll& grid, int step) {
  for (int p = kPitchCount - 1; p >= 0; --p)
    if (grid.at(step, p)) return p;
  return kEmptyPitch;
}

}  // namespace

FlnPair extract_fln(const Phrase& phrase) {
  const auto& grid = phrase.grid();
  FlnPair pair;
  for (int t = 0; t < grid.rows(); ++t) {
    if (const int p = highest_pitch(grid, t); p != kEmptyPitch) {
      pair.first = p;
      break;
    }
  }
  if (pair.first == kEmptyPitch) return pair;
  for (int t = grid.rows() - 1; t >= 0; --t) {
    if (const int p = highest_pitch(grid, t); p != kEmptyPitch) {
      pair.last = p;
      break;
    }
  }
  return pair;
}

ClassLabel::ClassLabel(int value, int class_count) : value_(value), class_count_(class_count) {
  if (class_count < 3) throw RangeError("class count must be at least 3");
  if (value < 0 || value >= class_count)
    throw RangeError("label " + std::to_string(value) + " outside 0.." + std::to_string(class_count - 1));
}

std::vector<float> ClassLabel::one_hot() const {
  std::vector<float> v(static_cast<std::size_t>(class_count_), 0.0f);
  v[static_cast<std::size_t>(value_)] = 1.0f;
  return v;
}

FlnDictionary FlnDictionary::build(std::span<const Phrase> phrases, int min_count) {
  if (phrases.empty()) throw NoPairsError("no phrases to count");
  if (min_count < 1) throw RangeError("min_count must be >= 1");

  std::map<FlnPair, std::int64_t> counts;
  for (const auto& phrase : phrases) {
    const auto pair = extract_fln(phrase);
    if (!pair.empty()) ++counts[pair];
  }

  std::vector<DictionaryEntry> kept;
  for (const auto& [pair, count] : counts)
    if (count > min_count) kept.push_back({0, pair, count});
  if (kept.empty())
    throw NoPairsError("no FLN pair occurs more than " + std::to_string(min_count) + " times");

  // map iteration already gives (first, last) ascending, so a stable sort on
  // count alone keeps that as the tie order.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const DictionaryEntry& a, const DictionaryEntry& b) { return a.count > b.count; });

  FlnDictionary dict;
  dict.min_count_ = min_count;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    kept[i].label = static_cast<int>(i) + 1;
    dict.index_[kept[i].pair] = kept[i].label;
  }
  dict.entries_ = std::move(kept);
  return dict;
}

int FlnDictionary::label_of(const FlnPair& pair) const {
  if (pair.empty()) return 0;
  const auto it = index_.find(pair);
  return it == index_.end() ? other_label() : it->second;
}

const FlnPair& FlnDictionary::pair_of(int label) const {
  if (!is_concrete(label))
    throw RangeError("label " + std::to_string(label) + " has no concrete FLN pair");
  return entries_[static_cast<std::size_t>(label - 1)].pair;
}

std::string FlnDictionary::to_text() const {
  std::ostringstream out;
  out << "K\t" << size() << "\n";
  out << "min_count\t" << min_count_ << "\n";
  for (const auto& e : entries_)
    out << e.label << '\t' << e.pair.first << '\t' << e.pair.last << '\t' << e.count << '\n';
  return out.str();
}

FlnDictionary FlnDictionary::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string key;
  int k = -1;
  FlnDictionary dict;
  if (!(in >> key >> k) || key != "K" || k < 1) throw ParseError("dictionary: bad K header");
  if (!(in >> key >> dict.min_count_) || key != "min_count") throw ParseError("dictionary: bad min_count header");
  for (int i = 0; i < k; ++i) {
    DictionaryEntry e;
    if (!(in >> e.label >> e.pair.first >> e.pair.last >> e.count))
      throw ParseError("dictionary: truncated at entry " + std::to_string(i + 1));
    if (e.label != i + 1 || e.pair.first < 0 || e.pair.first > 127 || e.pair.last < 0 || e.pair.last > 127)
      throw ParseError("dictionary: bad entry " + std::to_string(i + 1));
    dict.index_[e.pair] = e.label;
    dict.entries_.push_back(e);
  }
  if (dict.index_.size() != dict.entries_.size()) throw ParseError("dictionary: duplicate pair");
  return dict;
}

void FlnDictionary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_text();
}

FlnDictionary FlnDictionary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string FlnDictionary::hash() const { return fnv1a_hex(to_text()); }

bool FlnDictionary::operator==(const FlnDictionary& other) const {
  return to_text() == other.to_text();
}

}  // namespace sandwich
