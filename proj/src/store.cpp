#include "sandwich/store.h"

#include <fstream>
#include <iterator>
#include <sstream>

namespace sandwich {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + 4 > bytes.size()) throw ParseError("store: truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

ByteTensor stack(std::span<const PianoRoll* const> grids, int rows) {
  ByteTensor t;
  t.shape = {static_cast<std::uint32_t>(grids.size()), static_cast<std::uint32_t>(rows), kPitchCount};
  t.data.reserve(t.numel());
  for (const auto* g : grids) t.data.insert(t.data.end(), g->cells().begin(), g->cells().end());
  return t;
}

std::vector<PianoRoll> unstack(const ByteTensor& t, int rows) {
  if (t.shape.size() != 3 || t.shape[1] != static_cast<std::uint32_t>(rows) || t.shape[2] != kPitchCount)
    throw ShapeError("store: expected (N, " + std::to_string(rows) + ", 128)");
  std::vector<PianoRoll> out;
  const std::size_t per = static_cast<std::size_t>(rows) * kPitchCount;
  for (std::uint32_t i = 0; i < t.shape[0]; ++i) {
    auto begin = t.data.begin() + static_cast<std::ptrdiff_t>(i * per);
    out.emplace_back(rows, std::vector<std::uint8_t>(begin, begin + static_cast<std::ptrdiff_t>(per)));
  }
  return out;
}

}  // namespace

std::size_t ByteTensor::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::vector<std::uint8_t> encode_store(const ByteTensor& tensor) {
  if (tensor.data.size() != tensor.numel()) throw ShapeError("store: data does not match shape");
  std::vector<std::uint8_t> out{'M', 'S', 'W', '1'};
  put_u32(out, kStoreVersion);
  put_u32(out, static_cast<std::uint32_t>(tensor.shape.size()));
  for (auto d : tensor.shape) put_u32(out, d);
  out.insert(out.end(), tensor.data.begin(), tensor.data.end());
  return out;
}

ByteTensor decode_store(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'M' || bytes[1] != 'S' || bytes[2] != 'W' || bytes[3] != '1')
    throw ParseError("store: bad magic");
  std::size_t pos = 4;
  if (const auto version = get_u32(bytes, pos); version != kStoreVersion)
    throw ParseError("store: unsupported version " + std::to_string(version));
  ByteTensor t;
  const auto ndim = get_u32(bytes, pos);
  if (ndim == 0 || ndim > 8) throw ParseError("store: bad rank");
  for (std::uint32_t i = 0; i < ndim; ++i) t.shape.push_back(get_u32(bytes, pos));
  if (bytes.size() - pos != t.numel()) throw ParseError("store: payload size mismatch");
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return t;
}

void save_store(const std::filesystem::path& path, const ByteTensor& tensor) {
  write_file(path, encode_store(tensor));
}

ByteTensor load_store(const std::filesystem::path& path) { return decode_store(read_file(path)); }

void save_phrases(const std::filesystem::path& path, std::span<const Phrase> phrases) {
  std::vector<const PianoRoll*> grids;
  for (const auto& p : phrases) grids.push_back(&p.grid());
  save_store(path, stack(grids, kPhraseSteps));
}

std::vector<Phrase> load_phrases(const std::filesystem::path& path) {
  std::vector<Phrase> out;
  for (auto& g : unstack(load_store(path), kPhraseSteps)) out.emplace_back(std::move(g));
  return out;
}

void save_song_grids(const std::filesystem::path& path, std::span<const SongTensor> songs) {
  std::vector<PianoRoll> grids;
  for (const auto& s : songs) grids.push_back(s.concatenated());
  std::vector<const PianoRoll*> ptrs;
  for (const auto& g : grids) ptrs.push_back(&g);
  save_store(path, stack(ptrs, kSongSteps));
}

std::vector<PianoRoll> load_song_grids(const std::filesystem::path& path) {
  return unstack(load_store(path), kSongSteps);
}

void save_label_sequences(const std::filesystem::path& path, const std::vector<std::vector<int>>& seqs) {
  std::ostringstream out;
  for (const auto& seq : seqs) {
    for (std::size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << seq[i];
    out << '\n';
  }
  write_text(path, out.str());
}

std::vector<std::vector<int>> load_label_sequences(const std::filesystem::path& path, int class_count,
                                                   int length) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<int>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<int> seq;
    std::string token;
    while (ls >> token) {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size())
        throw RangeError(path.string() + ":" + std::to_string(lineno) + ": not an integer: " + token);
      if (v < 0 || v >= class_count)
        throw RangeError(path.string() + ":" + std::to_string(lineno) + ": label " + token +
                         " outside 0.." + std::to_string(class_count - 1));
      seq.push_back(v);
    }
    if (length > 0 && static_cast<int>(seq.size()) != length)
      throw RangeError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(length) + " labels, got " + std::to_string(seq.size()));
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<SongTensor> load_songs(const std::filesystem::path& grids, const std::filesystem::path& labels,
                                   int class_count) {
  const auto rolls = load_song_grids(grids);
  const auto seqs = load_label_sequences(labels, class_count);
  if (rolls.size() != seqs.size()) throw ShapeError("song grids and label lines differ in count");
  std::vector<SongTensor> songs;
  for (std::size_t i = 0; i < rolls.size(); ++i) {
    auto song = SongTensor::from_grid(rolls[i]);
    song.labels = seqs[i];
    songs.push_back(std::move(song));
  }
  return songs;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace sandwich
