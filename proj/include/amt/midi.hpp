#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace amt {

inline constexpr int kPianoPitchMin = 21;
inline constexpr int kPianoPitchMax = 108;

struct NoteEvent {
  int pitch = 60;         // MIDI note number
  double onset = 0.0;     // seconds
  double offset = 0.0;    // seconds, > onset
  double velocity = 0.0;  // MIDI velocity / 127

  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

struct PedalEvent {
  double time = 0.0;
  bool engaged = false;

  friend bool operator==(const PedalEvent&, const PedalEvent&) = default;
};

struct NoteSequence {
  std::vector<NoteEvent> notes;  // sorted by (onset, pitch)
  std::vector<PedalEvent> pedals;
  double duration = 0.0;

  std::string composer;
  std::string title;
  std::string year;

  // Recoverable oddities met while parsing (unterminated notes, zero-length
  // notes dropped). Informational only.
  std::vector<std::string> warnings;

  /// Sort notes by (onset, pitch) and raise `duration` to cover every offset.
  void normalize();
};

inline constexpr int kPedalThreshold = 64;

/// Parses a Standard MIDI File (format 0 or 1). Throws ParseError carrying
/// the byte offset of the first malformed structure.
NoteSequence parse_midi(std::span<const std::uint8_t> bytes);

/// Serializes as a format-0 file at 480 PPQ and a fixed 120 BPM. Pedal
/// events are written as CC64 (127 engaged, 0 released).
std::vector<std::uint8_t> write_midi(const NoteSequence& seq);

inline constexpr int kWritePpq = 480;
inline constexpr double kWriteTicksPerSecond = 960.0;  // 480 PPQ at 120 BPM

/// Extends notes released while the sustain pedal is down until the pedal
/// lifts, the same pitch is struck again, or the sequence ends.
NoteSequence resolve_sustain(const NoteSequence& seq);

/// Whitespace-separated note table with header
/// `onset_sec offset_sec pitch velocity`. The header line is optional on read.
NoteSequence read_notes_table(std::string_view text);
std::string write_notes_table(const NoteSequence& seq);

// File helpers used by the CLI. Both formats are chosen by extension
// (.mid/.midi vs anything else = note table).
NoteSequence load_notes(const std::string& path);
void save_notes(const NoteSequence& seq, const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace amt
