#include "amt/midi.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <utility>

#include "amt/error.hpp"

namespace amt {

void NoteSequence::normalize() {
  std::stable_sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    if (a.onset != b.onset) return a.onset < b.onset;
    return a.pitch < b.pitch;
  });
  std::stable_sort(pedals.begin(), pedals.end(),
                   [](const PedalEvent& a, const PedalEvent& b) { return a.time < b.time; });
  for (const auto& n : notes) duration = std::max(duration, n.offset);
}

// ---------------------------------------------------------------------------
// SMF reading

namespace {

class ByteReader {
public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }

  void require(std::size_t n, const char* what) const {
    if (remaining() < n) throw ParseError(std::string("truncated ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    require(1, what);
    return bytes_[pos_++];
  }
  std::uint8_t peek(const char* what) const {
    require(1, what);
    return bytes_[pos_];
  }
  std::uint16_t u16(const char* what) {
    require(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] << 8 | bytes_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::uint32_t varlen(const char* what) {
    const std::size_t start = pos_;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint8_t b = u8(what);
      v = (v << 7) | (b & 0x7f);
      if ((b & 0x80) == 0) return v;
    }
    throw ParseError(std::string("variable-length quantity too long in ") + what, start);
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    require(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n, const char* what) { take(n, what); }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

enum class RawKind { NoteOn, NoteOff, Sustain, Tempo, TrackName };

struct RawEvent {
  std::uint64_t tick = 0;
  RawKind kind = RawKind::NoteOn;
  int channel = 0;
  int data1 = 0;
  int data2 = 0;
  std::uint32_t tempo_us = 0;
  std::string text;
};

struct RawTrack {
  std::vector<RawEvent> events;
  std::uint64_t end_tick = 0;
};

RawTrack read_track(ByteReader& in, std::size_t chunk_end) {
  RawTrack track;
  std::uint64_t tick = 0;
  int running = -1;
  while (in.pos() < chunk_end) {
    tick += in.varlen("event delta time");
    const std::size_t event_pos = in.pos();
    int status = in.peek("event status");
    if (status & 0x80) {
      in.u8("event status");
    } else {
      if (running < 0) throw ParseError("data byte without running status", event_pos);
      status = running;
    }

    if (status == 0xff) {
      running = -1;
      const int type = in.u8("meta type");
      const std::uint32_t len = in.varlen("meta length");
      auto payload = in.take(len, "meta payload");
      if (type == 0x51) {
        if (len != 3) throw ParseError("tempo meta event must have 3 bytes", event_pos);
        RawEvent e;
        e.tick = tick;
        e.kind = RawKind::Tempo;
        e.tempo_us = static_cast<std::uint32_t>(payload[0] << 16 | payload[1] << 8 | payload[2]);
        if (e.tempo_us == 0) throw ParseError("zero tempo", event_pos);
        track.events.push_back(e);
      } else if (type == 0x03) {
        RawEvent e;
        e.tick = tick;
        e.kind = RawKind::TrackName;
        e.text.assign(payload.begin(), payload.end());
        track.events.push_back(std::move(e));
      } else if (type == 0x2f) {
        track.end_tick = tick;
        break;
      }
      continue;
    }
    if (status == 0xf0 || status == 0xf7) {
      running = -1;
      in.skip(in.varlen("sysex length"), "sysex payload");
      continue;
    }
    if (status >= 0xf0) throw ParseError("unexpected system message in track", event_pos);

    running = status;
    const int type = status & 0xf0;
    const int channel = status & 0x0f;
    const int d1 = in.u8("channel message data");
    int d2 = 0;
    if (type != 0xc0 && type != 0xd0) d2 = in.u8("channel message data");
    if ((d1 | d2) & 0x80) throw ParseError("data byte with high bit set", event_pos);

    RawEvent e;
    e.tick = tick;
    e.channel = channel;
    e.data1 = d1;
    e.data2 = d2;
    if (type == 0x90 && d2 > 0) {
      e.kind = RawKind::NoteOn;
    } else if (type == 0x80 || type == 0x90) {
      e.kind = RawKind::NoteOff;
    } else if (type == 0xb0 && d1 == 64) {
      e.kind = RawKind::Sustain;
    } else {
      continue;
    }
    track.events.push_back(e);
  }
  track.end_tick = std::max(track.end_tick, tick);
  return track;
}

// Piecewise-constant tempo integration from tick to seconds.
class TempoMap {
public:
  TempoMap(int ppq, std::vector<std::pair<std::uint64_t, std::uint32_t>> changes) : ppq_(ppq) {
    std::stable_sort(changes.begin(), changes.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    segments_.push_back({0, 0.0, 500000});
    for (const auto& [tick, tempo] : changes) {
      auto& last = segments_.back();
      if (tick == last.tick) {
        last.tempo_us = tempo;
        continue;
      }
      const double start = seconds_at(last, tick);
      segments_.push_back({tick, start, tempo});
    }
  }

  static TempoMap smpte(double seconds_per_tick) {
    TempoMap m(1, {});
    m.fixed_seconds_per_tick_ = seconds_per_tick;
    return m;
  }

  double seconds(std::uint64_t tick) const {
    if (fixed_seconds_per_tick_ > 0) return static_cast<double>(tick) * fixed_seconds_per_tick_;
    auto it = std::upper_bound(segments_.begin(), segments_.end(), tick,
                               [](std::uint64_t t, const Segment& s) { return t < s.tick; });
    return seconds_at(*std::prev(it), tick);
  }

private:
  struct Segment {
    std::uint64_t tick;
    double start_seconds;
    std::uint32_t tempo_us;
  };

  double seconds_at(const Segment& s, std::uint64_t tick) const {
    return s.start_seconds +
           static_cast<double>(tick - s.tick) * (s.tempo_us * 1e-6) / static_cast<double>(ppq_);
  }

  int ppq_;
  double fixed_seconds_per_tick_ = 0.0;
  std::vector<Segment> segments_;
};

}  // namespace

NoteSequence parse_midi(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const auto header_tag = in.take(4, "header chunk id");
  if (std::string(header_tag.begin(), header_tag.end()) != "MThd")
    throw ParseError("missing MThd header", 0);
  const std::uint32_t header_len = in.u32("header length");
  if (header_len < 6) throw ParseError("header chunk shorter than 6 bytes", 4);
  const std::size_t header_end = in.pos() + header_len;
  const std::uint16_t format = in.u16("format");
  const std::uint16_t ntracks = in.u16("track count");
  const std::uint16_t division = in.u16("division");
  if (format > 1) throw ParseError("unsupported SMF format " + std::to_string(format), 8);
  if (division == 0) throw ParseError("zero time division", 12);
  in.skip(header_end - in.pos(), "header chunk");

  std::vector<RawTrack> tracks;
  while (!in.at_end() && tracks.size() < ntracks) {
    const std::size_t chunk_pos = in.pos();
    const auto tag = in.take(4, "chunk id");
    const std::uint32_t len = in.u32("chunk length");
    if (in.remaining() < len) throw ParseError("chunk extends past end of file", chunk_pos);
    if (std::string(tag.begin(), tag.end()) != "MTrk") {
      in.skip(len, "unknown chunk");
      continue;
    }
    const std::size_t end = in.pos() + len;
    tracks.push_back(read_track(in, end));
    if (in.pos() > end) throw ParseError("event runs past end of track chunk", end);
    in.skip(end - in.pos(), "track padding");
  }
  if (tracks.size() < ntracks) throw ParseError("fewer track chunks than declared", in.pos());

  std::vector<std::pair<std::uint64_t, std::uint32_t>> tempo_changes;
  for (const auto& t : tracks)
    for (const auto& e : t.events)
      if (e.kind == RawKind::Tempo) tempo_changes.emplace_back(e.tick, e.tempo_us);

  TempoMap tempo(1, {});
  if (division & 0x8000) {
    const int fps_code = -static_cast<std::int8_t>(division >> 8);
    const double fps = fps_code == 29 ? 29.97 : static_cast<double>(fps_code);
    const int ticks_per_frame = division & 0xff;
    if (fps <= 0 || ticks_per_frame == 0) throw ParseError("invalid SMPTE division", 12);
    tempo = TempoMap::smpte(1.0 / (fps * ticks_per_frame));
  } else {
    tempo = TempoMap(division, std::move(tempo_changes));
  }

  NoteSequence seq;
  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    const auto& track = tracks[ti];
    const double track_end = tempo.seconds(track.end_tick);
    seq.duration = std::max(seq.duration, track_end);

    // FIFO of pending (onset seconds, velocity) per channel/pitch.
    std::map<std::pair<int, int>, std::deque<std::pair<double, int>>> pending;
    auto close = [&](int pitch, double onset, int velocity, double offset) {
      if (offset <= onset) {
        seq.warnings.push_back("dropped zero-length note " + std::to_string(pitch) + " at " +
                               std::to_string(onset) + " s");
        return;
      }
      seq.notes.push_back({pitch, onset, offset, velocity / 127.0});
    };

    for (const auto& e : track.events) {
      const double t = tempo.seconds(e.tick);
      switch (e.kind) {
        case RawKind::NoteOn:
          pending[{e.channel, e.data1}].emplace_back(t, e.data2);
          break;
        case RawKind::NoteOff: {
          auto& queue = pending[{e.channel, e.data1}];
          if (queue.empty()) break;  // stray note-off
          auto [onset, vel] = queue.front();
          queue.pop_front();
          close(e.data1, onset, vel, t);
          break;
        }
        case RawKind::Sustain:
          seq.pedals.push_back({t, e.data2 >= kPedalThreshold});
          break;
        case RawKind::TrackName:
          if (seq.title.empty() && !e.text.empty()) seq.title = e.text;
          break;
        case RawKind::Tempo:
          break;
      }
    }
    for (auto& [key, queue] : pending) {
      for (auto [onset, vel] : queue) {
        seq.warnings.push_back("unterminated note " + std::to_string(key.second) + " at " +
                               std::to_string(onset) + " s closed at track end");
        close(key.second, onset, vel, track_end);
      }
    }
  }
  seq.normalize();
  return seq;
}

// ---------------------------------------------------------------------------
// SMF writing

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_varlen(std::vector<std::uint8_t>& out, std::uint32_t v) {
  std::uint8_t buf[5];
  int n = 0;
  buf[n++] = v & 0x7f;
  while (v >>= 7) buf[n++] = static_cast<std::uint8_t>((v & 0x7f) | 0x80);
  while (n) out.push_back(buf[--n]);
}

std::uint64_t to_tick(double seconds) {
  return static_cast<std::uint64_t>(std::llround(std::max(0.0, seconds) * kWriteTicksPerSecond));
}

}  // namespace

std::vector<std::uint8_t> write_midi(const NoteSequence& seq) {
  struct Out {
    std::uint64_t tick;
    int order;  // note-off, pedal, note-on at equal ticks
    std::uint8_t status, d1, d2;
  };
  std::vector<Out> events;
  for (const auto& n : seq.notes) {
    if (n.pitch < 0 || n.pitch > 127)
      throw SerializeError("pitch " + std::to_string(n.pitch) + " outside MIDI range 0..127");
    const std::uint64_t on = to_tick(n.onset);
    const std::uint64_t off = std::max(on + 1, to_tick(n.offset));
    const long vel = std::clamp(std::lround(n.velocity * 127.0), 1L, 127L);
    events.push_back({on, 2, 0x90, static_cast<std::uint8_t>(n.pitch), static_cast<std::uint8_t>(vel)});
    events.push_back({off, 0, 0x80, static_cast<std::uint8_t>(n.pitch), 0});
  }
  for (const auto& p : seq.pedals)
    events.push_back({to_tick(p.time), 1, 0xb0, 64, static_cast<std::uint8_t>(p.engaged ? 127 : 0)});
  std::stable_sort(events.begin(), events.end(), [](const Out& a, const Out& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    return a.order < b.order;
  });

  std::vector<std::uint8_t> track;
  // 500000 us per quarter = 120 BPM
  track.insert(track.end(), {0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20});
  if (!seq.title.empty()) {
    track.insert(track.end(), {0x00, 0xff, 0x03});
    put_varlen(track, static_cast<std::uint32_t>(seq.title.size()));
    track.insert(track.end(), seq.title.begin(), seq.title.end());
  }
  std::uint64_t last = 0;
  for (const auto& e : events) {
    put_varlen(track, static_cast<std::uint32_t>(e.tick - last));
    last = e.tick;
    track.insert(track.end(), {e.status, e.d1, e.d2});
  }
  const std::uint64_t end = std::max(last, to_tick(seq.duration));
  put_varlen(track, static_cast<std::uint32_t>(end - last));
  track.insert(track.end(), {0xff, 0x2f, 0x00});

  std::vector<std::uint8_t> out = {'M', 'T', 'h', 'd'};
  put_u32(out, 6);
  put_u16(out, 0);
  put_u16(out, 1);
  put_u16(out, kWritePpq);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  put_u32(out, static_cast<std::uint32_t>(track.size()));
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

// ---------------------------------------------------------------------------
// Sustain

NoteSequence resolve_sustain(const NoteSequence& seq) {
  NoteSequence out = seq;
  if (seq.pedals.empty()) return out;

  // Engaged intervals (start, end). Back-to-back release/press at the same
  // instant is treated as one continuous interval.
  std::vector<std::pair<double, double>> intervals;
  auto pedals = seq.pedals;
  std::stable_sort(pedals.begin(), pedals.end(),
                   [](const PedalEvent& a, const PedalEvent& b) { return a.time < b.time; });
  double end_of_seq = seq.duration;
  for (const auto& n : seq.notes) end_of_seq = std::max(end_of_seq, n.offset);
  for (const auto& p : pedals) end_of_seq = std::max(end_of_seq, p.time);

  bool down = false;
  double start = 0.0;
  for (const auto& p : pedals) {
    if (p.engaged && !down) {
      if (!intervals.empty() && intervals.back().second == p.time) {
        start = intervals.back().first;
        intervals.pop_back();
      } else {
        start = p.time;
      }
      down = true;
    } else if (!p.engaged && down) {
      intervals.emplace_back(start, p.time);
      down = false;
    }
  }
  if (down) intervals.emplace_back(start, end_of_seq);

  // Next onset of the same pitch, for each note.
  std::map<int, std::vector<double>> onsets_by_pitch;
  for (const auto& n : seq.notes) onsets_by_pitch[n.pitch].push_back(n.onset);
  for (auto& [pitch, v] : onsets_by_pitch) std::sort(v.begin(), v.end());

  for (auto& n : out.notes) {
    // Interval with start < offset < end; a release coinciding with the
    // pedal press is resolved release-first (not sustained).
    auto it = std::upper_bound(intervals.begin(), intervals.end(), n.offset,
                               [](double t, const auto& iv) { return t <= iv.first; });
    if (it == intervals.begin()) continue;
    const auto& iv = *std::prev(it);
    if (!(iv.first < n.offset && n.offset < iv.second)) continue;

    double new_offset = std::min(iv.second, end_of_seq);
    const auto& onsets = onsets_by_pitch[n.pitch];
    auto next = std::upper_bound(onsets.begin(), onsets.end(), n.onset);
    if (next != onsets.end()) new_offset = std::min(new_offset, *next);
    n.offset = std::max(n.offset, new_offset);
  }
  out.duration = std::max(out.duration, end_of_seq);
  return out;
}

// ---------------------------------------------------------------------------
// Note table

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
T parse_number(std::string_view token, std::size_t line_no, const char* field) {
  T value{};
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && token.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError("line " + std::to_string(line_no) + ": non-numeric " + field + " '" +
                         std::string(token) + "'",
                     line_no);
  return value;
}

}  // namespace

NoteSequence read_notes_table(std::string_view text) {
  NoteSequence seq;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool seen_content = false;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    const auto fields = split_ws(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    if (!seen_content && fields.front() == "onset_sec") {
      seen_content = true;
      continue;
    }
    seen_content = true;
    if (fields.size() != 4)
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    NoteEvent n;
    n.onset = parse_number<double>(fields[0], line_no, "onset_sec");
    n.offset = parse_number<double>(fields[1], line_no, "offset_sec");
    n.pitch = parse_number<int>(fields[2], line_no, "pitch");
    n.velocity = parse_number<double>(fields[3], line_no, "velocity");
    if (!(n.onset >= 0.0) || !(n.offset > n.onset))
      throw ParseError("line " + std::to_string(line_no) + ": need 0 <= onset < offset", line_no);
    if (!(n.velocity >= 0.0 && n.velocity <= 1.0))
      throw ParseError("line " + std::to_string(line_no) + ": velocity outside [0,1]", line_no);
    seq.notes.push_back(n);
  }
  seq.normalize();
  return seq;
}

std::string write_notes_table(const NoteSequence& seq) {
  std::string out = "onset_sec\toffset_sec\tpitch\tvelocity\n";
  char buf[128];
  for (const auto& n : seq.notes) {
    std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%d\t%.6f\n", n.onset, n.offset, n.pitch, n.velocity);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("short write to " + path);
}

namespace {
bool is_midi_path(const std::string& path) {
  auto ends = [&](std::string_view s) {
    return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  return ends(".mid") || ends(".midi") || ends(".MID") || ends(".MIDI");
}
}  // namespace

NoteSequence load_notes(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    if (is_midi_path(path)) return parse_midi(bytes);
    return read_notes_table(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.position());
  }
}

void save_notes(const NoteSequence& seq, const std::string& path) {
  if (is_midi_path(path)) {
    write_file_bytes(path, write_midi(seq));
  } else {
    const std::string text = write_notes_table(seq);
    write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  }
}

}  // namespace amt
