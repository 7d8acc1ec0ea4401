#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amt/matrix.hpp"
#include "amt/midi.hpp"
#include "amt/waveform.hpp"

namespace amt {

struct RollConfig {
  double delta_t = 0.024;  // seconds per frame
  int pitch_min = kPianoPitchMin;
  int pitch_max = kPianoPitchMax;
  // 0 derives the frame count from the sequence duration.
  std::size_t num_frames = 0;

  int num_keys() const { return pitch_max - pitch_min + 1; }
  void validate() const;
};

// Wire values of the roll file header; do not renumber.
enum class RollKind : std::uint32_t {
  OnsetIndicator = 0,
  Velocity = 1,
  FrameIndicator = 2,
  ProlongedOnset = 3,
  ProlongedVelocity = 4,
  Prediction = 5,
  Spectro = 6,
};

const char* to_string(RollKind kind);
bool is_indicator(RollKind kind);

struct PianoRoll {
  Matrix values;  // num_keys x T'
  RollConfig config;
  RollKind kind = RollKind::Prediction;

  std::size_t num_frames() const { return values.cols(); }
};

/// Frame index of time `t`: round-half-away-from-zero of t / delta_t, with
/// ties detected to within 1e-9 frames so decimal inputs like 0.036/0.024
/// land on the upper frame.
long frame_index(double t, double delta_t);

/// Frame count covering `duration` with frames centered on k * delta_t
/// (matches centered STFT framing: floor(duration / delta_t) + 1).
std::size_t frames_for_duration(double duration, double delta_t);

struct QuantizedRolls {
  PianoRoll onset;
  PianoRoll velocity;
  PianoRoll frames;
};

/// Throws OutOfRange for pitches outside the roll or, with a fixed frame
/// count, onsets past the last frame.
QuantizedRolls quantize(const NoteSequence& seq, const RollConfig& cfg);

struct ProlongedRolls {
  PianoRoll onset;     // 1_o3
  PianoRoll velocity;  // R_V3
};

inline constexpr int kProlongFrames = 3;

ProlongedRolls prolong_onsets(const PianoRoll& onset, const PianoRoll& velocity,
                              int span = kProlongFrames);

inline constexpr double kDefaultOnsetLength = 0.032;

NoteSequence truncate_for_onset_labels(const NoteSequence& seq,
                                       double onset_length = kDefaultOnsetLength);

struct SplitResult {
  std::vector<std::size_t> indices;  // sample indices
  std::vector<std::string> warnings;
};

/// Chooses cut points near multiples of `target` seconds. Each cut prefers a
/// note-free gap within +-1 s of the target and snaps to the nearest audio
/// zero crossing (inside the gap when one exists there).
SplitResult split_points(const Waveform& audio, const NoteSequence& seq, double target = 20.0);

// ---------------------------------------------------------------------------
// Roll files: "AMTR", u32 rows, u32 cols, u32 kind, then little-endian f32
// row-major. Spectro files carry two planes (x then dx) after the header.

std::vector<std::uint8_t> encode_roll(const Matrix& values, RollKind kind);
std::vector<std::uint8_t> encode_planes(std::span<const Matrix> planes, RollKind kind);

struct DecodedRoll {
  std::vector<Matrix> planes;
  RollKind kind = RollKind::Prediction;
};

DecodedRoll decode_roll(std::span<const std::uint8_t> bytes);

void save_roll(const PianoRoll& roll, const std::string& path);
PianoRoll load_roll(const std::string& path, const RollConfig& cfg = {});

std::string roll_to_csv(const Matrix& values);

}  // namespace amt
