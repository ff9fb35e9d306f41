#include "sandwich/midi.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <iterator>
#include <map>

#include "sandwich/errors.h"

namespace sandwich {

namespace {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  bool done() const { return pos_ >= bytes_.size(); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint8_t peek() {
    need(1);
    return bytes_[pos_];
  }
  std::uint16_t u16() {
    const auto hi = u8();
    return static_cast<std::uint16_t>((hi << 8) | u8());
  }
  std::uint32_t u32() {
    const std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  std::uint32_t varlen() {
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
      const auto b = u8();
      value = (value << 7) | (b & 0x7F);
      if ((b & 0x80) == 0) return value;
    }
    fail("variable-length quantity longer than 4 bytes");
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError(source_ + ": " + why + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail("unexpected end of data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string source_;
};

struct RawNote {
  std::int64_t on_tick;
  std::int64_t off_tick;
  int pitch;
  int velocity;
};

struct TrackData {
  std::vector<RawNote> notes;
  std::vector<std::pair<std::int64_t, double>> tempos;  // tick, bpm
  std::int64_t end_tick = 0;
};

TrackData parse_track(ByteReader& in) {
  TrackData track;
  std::int64_t tick = 0;
  std::uint8_t running = 0;
  // FIFO of pending note-ons per (channel, pitch).
  std::map<std::pair<int, int>, std::deque<std::pair<std::int64_t, int>>> pending;

  while (!in.done()) {
    tick += in.varlen();
    std::uint8_t status = in.peek();
    if (status & 0x80) {
      in.u8();
    } else {
      if (running == 0) in.fail("data byte without running status");
      status = running;
    }

    if (status == 0xFF) {
      const auto type = in.u8();
      const auto len = in.varlen();
      auto payload = in.take(len);
      if (type == 0x51) {
        if (len != 3) in.fail("tempo meta event must have 3 bytes");
        const std::uint32_t usec = (payload[0] << 16) | (payload[1] << 8) | payload[2];
        if (usec == 0) in.fail("zero tempo");
        track.tempos.emplace_back(tick, 60'000'000.0 / usec);
      } else if (type == 0x2F) {
        break;
      }
      continue;
    }
    if (status == 0xF0 || status == 0xF7) {
      in.skip(in.varlen());
      continue;
    }
    if (status >= 0xF0) in.fail("unsupported system message");

    running = status;
    const int kind = status & 0xF0;
    const int channel = status & 0x0F;
    const int data1 = in.u8() & 0x7F;
    const int data2 = (kind == 0xC0 || kind == 0xD0) ? 0 : (in.u8() & 0x7F);

    if (kind == 0x90 && data2 > 0) {
      pending[{channel, data1}].emplace_back(tick, data2);
    } else if (kind == 0x80 || kind == 0x90) {
      auto it = pending.find({channel, data1});
      if (it != pending.end() && !it->second.empty()) {
        const auto [on, vel] = it->second.front();
        it->second.pop_front();
        track.notes.push_back({on, tick, data1, vel});
      }
    }
  }
  track.end_tick = tick;
  // Notes still sounding at the end of the track are closed there.
  for (auto& [key, queue] : pending) {
    for (const auto& [on, vel] : queue) track.notes.push_back({on, tick, key.second, vel});
  }
  return track;
}

void put_varlen(std::vector<std::uint8_t>& out, std::uint32_t value) {
  std::array<std::uint8_t, 5> buf{};
  int n = 0;
  buf[n++] = value & 0x7F;
  while ((value >>= 7) != 0) buf[n++] = static_cast<std::uint8_t>((value & 0x7F) | 0x80);
  while (n > 0) out.push_back(buf[--n]);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

NoteSequence parse_midi(std::span<const std::uint8_t> bytes, const std::string& source) {
  ByteReader in(bytes, source);
  if (in.remaining() < 14) in.fail("truncated header");
  const auto magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), "MThd")) in.fail("missing MThd chunk");
  const auto header_len = in.u32();
  if (header_len < 6) in.fail("header chunk too short");
  const auto format = in.u16();
  const auto ntracks = in.u16();
  const auto division = in.u16();
  in.skip(header_len - 6);
  if (format > 1) in.fail("format " + std::to_string(format) + " not supported");
  if (division == 0) in.fail("zero time division");

  // SMPTE division measures ticks in absolute time; express it as PPQ at 120 bpm.
  double ticks_per_beat = division;
  bool smpte = false;
  if (division & 0x8000) {
    const int fps = -static_cast<std::int8_t>(division >> 8);
    const int per_frame = division & 0xFF;
    if (fps <= 0 || per_frame == 0) in.fail("bad SMPTE division");
    ticks_per_beat = fps * per_frame * 0.5;
    smpte = true;
  }

  std::vector<RawNote> notes;
  std::vector<std::pair<std::int64_t, double>> tempos;
  std::int64_t end_tick = 0;
  for (int t = 0; t < ntracks; ++t) {
    if (in.remaining() < 8) in.fail("truncated track header");
    const auto id = in.take(4);
    const auto len = in.u32();
    auto body = in.take(len);
    if (!std::equal(id.begin(), id.end(), "MTrk")) continue;  // unknown chunk
    ByteReader track_in(body, source);
    auto track = parse_track(track_in);
    notes.insert(notes.end(), track.notes.begin(), track.notes.end());
    tempos.insert(tempos.end(), track.tempos.begin(), track.tempos.end());
    end_tick = std::max(end_tick, track.end_tick);
  }

  NoteSequence seq;
  seq.source = source;
  if (notes.empty()) throw EmptyFileError(source + ": no note events");

  seq.tempo_map.clear();
  if (!smpte) {
    std::stable_sort(tempos.begin(), tempos.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [tick, bpm] : tempos) {
      const double beat = tick / ticks_per_beat;
      if (!seq.tempo_map.empty() && seq.tempo_map.back().beat == beat)
        seq.tempo_map.back().bpm = bpm;
      else
        seq.tempo_map.push_back({beat, bpm});
    }
  }
  if (seq.tempo_map.empty() || seq.tempo_map.front().beat > 0.0)
    seq.tempo_map.insert(seq.tempo_map.begin(), TempoChange{0.0, 120.0});

  seq.notes.reserve(notes.size());
  for (const auto& n : notes) {
    if (n.off_tick <= n.on_tick) continue;  // zero-length note
    seq.notes.push_back({n.pitch, n.on_tick / ticks_per_beat,
                         (n.off_tick - n.on_tick) / ticks_per_beat, n.velocity});
    end_tick = std::max(end_tick, n.off_tick);
  }
  if (seq.notes.empty()) throw EmptyFileError(source + ": only zero-length notes");
  std::sort(seq.notes.begin(), seq.notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
  });
  seq.end_beat = end_tick / ticks_per_beat;
  return seq;
}

NoteSequence load_midi(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  return parse_midi(bytes, path.string());
}

std::vector<std::uint8_t> encode_midi(std::span<const NoteEvent> notes, double end_beat) {
  struct Event {
    long long tick;
    int order;  // note-offs before note-ons at the same tick
    int pitch;
    int velocity;
  };
  std::vector<Event> events;
  events.reserve(notes.size() * 2);
  long long end_tick = std::llround(end_beat * kExportTicksPerBeat);
  for (const auto& n : notes) {
    const auto on = std::llround(n.onset * kExportTicksPerBeat);
    const auto off = std::max(on + 1, std::llround((n.onset + n.duration) * kExportTicksPerBeat));
    events.push_back({on, 1, n.pitch, std::clamp(n.velocity, 1, 127)});
    events.push_back({off, 0, n.pitch, 0});
    end_tick = std::max(end_tick, off);
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    if (a.order != b.order) return a.order < b.order;
    return a.pitch < b.pitch;
  });

  std::vector<std::uint8_t> track;
  // tempo 500000 us/beat = 120 bpm, 4/4 time
  track.insert(track.end(), {0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20});
  track.insert(track.end(), {0x00, 0xFF, 0x58, 0x04, 0x04, 0x02, 0x18, 0x08});
  long long last = 0;
  for (const auto& e : events) {
    put_varlen(track, static_cast<std::uint32_t>(e.tick - last));
    last = e.tick;
    track.push_back(e.order == 0 ? 0x80 : 0x90);
    track.push_back(static_cast<std::uint8_t>(e.pitch));
    track.push_back(static_cast<std::uint8_t>(e.order == 0 ? 0x40 : e.velocity));
  }
  put_varlen(track, static_cast<std::uint32_t>(end_tick - last));
  track.insert(track.end(), {0xFF, 0x2F, 0x00});

  std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
  put_u32(out, 6);
  put_u16(out, 0);
  put_u16(out, 1);
  put_u16(out, kExportTicksPerBeat);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_u32(out, static_cast<std::uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

void write_midi(const std::filesystem::path& path, std::span<const NoteEvent> notes,
                double end_beat) {
  const auto bytes = encode_midi(notes, end_beat);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw IoError("write failed for " + path.string());
}

}  // namespace sandwich
