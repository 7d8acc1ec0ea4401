#include "amt/pianoroll.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "amt/error.hpp"

namespace amt {

void RollConfig::validate() const {
  if (!(delta_t > 0.0)) throw InvalidParam("delta_t must be positive");
  if (pitch_max < pitch_min) throw InvalidParam("pitch_max below pitch_min");
}

const char* to_string(RollKind kind) {
  switch (kind) {
    case RollKind::OnsetIndicator: return "onset_indicator";
    case RollKind::Velocity: return "velocity";
    case RollKind::FrameIndicator: return "frame_indicator";
    case RollKind::ProlongedOnset: return "prolonged_onset";
    case RollKind::ProlongedVelocity: return "prolonged_velocity";
    case RollKind::Prediction: return "prediction";
    case RollKind::Spectro: return "spectro";
  }
  return "unknown";
}

bool is_indicator(RollKind kind) {
  return kind == RollKind::OnsetIndicator || kind == RollKind::FrameIndicator ||
         kind == RollKind::ProlongedOnset;
}

long frame_index(double t, double delta_t) {
  const double q = t / delta_t;
  const double lower = std::floor(q);
  const double frac = q - lower;
  if (std::abs(frac - 0.5) < 1e-9) return static_cast<long>(q >= 0 ? lower + 1 : lower);
  return std::lround(q);
}

std::size_t frames_for_duration(double duration, double delta_t) {
  if (duration <= 0.0) return 1;
  return static_cast<std::size_t>(std::floor(duration / delta_t + 1e-9)) + 1;
}

QuantizedRolls quantize(const NoteSequence& seq, const RollConfig& cfg) {
  cfg.validate();
  const int keys = cfg.num_keys();

  for (const auto& n : seq.notes) {
    if (n.pitch < cfg.pitch_min || n.pitch > cfg.pitch_max)
      throw OutOfRange("pitch " + std::to_string(n.pitch) + " outside roll range [" +
                       std::to_string(cfg.pitch_min) + "," + std::to_string(cfg.pitch_max) + "]");
  }

  std::size_t frames = cfg.num_frames;
  if (frames == 0) {
    double end = seq.duration;
    long last_onset = 0;
    for (const auto& n : seq.notes) {
      end = std::max(end, n.offset);
      last_onset = std::max(last_onset, frame_index(n.onset, cfg.delta_t));
    }
    frames = std::max(frames_for_duration(end, cfg.delta_t), static_cast<std::size_t>(last_onset) + 1);
  }

  RollConfig out_cfg = cfg;
  out_cfg.num_frames = frames;
  QuantizedRolls rolls{{Matrix(keys, frames), out_cfg, RollKind::OnsetIndicator},
                       {Matrix(keys, frames), out_cfg, RollKind::Velocity},
                       {Matrix(keys, frames), out_cfg, RollKind::FrameIndicator}};

  const long frame_count = static_cast<long>(frames);
  for (const auto& n : seq.notes) {
    const long on = frame_index(n.onset, cfg.delta_t);
    if (on >= frame_count)
      throw OutOfRange("note onset at " + std::to_string(n.onset) + " s maps to frame " +
                       std::to_string(on) + " beyond " + std::to_string(frames) + " frames");
    const std::size_t key = static_cast<std::size_t>(n.pitch - cfg.pitch_min);
    rolls.onset.values(key, on) = 1.0;
    rolls.velocity.values(key, on) = std::clamp(n.velocity, 0.0, 1.0);
    // Both endpoints snapped to the frame grid; the onset frame is always lit.
    const long off = std::min(frame_count, std::max(on + 1, frame_index(n.offset, cfg.delta_t)));
    for (long t = on; t < off; ++t) rolls.frames.values(key, t) = 1.0;
  }
  return rolls;
}

ProlongedRolls prolong_onsets(const PianoRoll& onset, const PianoRoll& velocity, int span) {
  require_same_shape(onset.values, velocity.values, "prolong_onsets");
  if (span < 1) throw InvalidParam("prolongation span must be >= 1");
  ProlongedRolls out{{Matrix(onset.values.rows(), onset.values.cols()), onset.config,
                      RollKind::ProlongedOnset},
                     {Matrix(onset.values.rows(), onset.values.cols()), onset.config,
                      RollKind::ProlongedVelocity}};
  const std::size_t frames = onset.values.cols();
  for (std::size_t k = 0; k < onset.values.rows(); ++k) {
    for (std::size_t t = 0; t < frames; ++t) {
      if (onset.values(k, t) < 0.5) continue;
      const double v = velocity.values(k, t);
      for (std::size_t u = t; u < std::min(frames, t + static_cast<std::size_t>(span)); ++u) {
        out.onset.values(k, u) = 1.0;
        out.velocity.values(k, u) = v;  // later onsets overwrite
      }
    }
  }
  return out;
}

NoteSequence truncate_for_onset_labels(const NoteSequence& seq, double onset_length) {
  if (!(onset_length > 0.0)) throw InvalidParam("onset_length must be positive");
  NoteSequence out = seq;
  for (auto& n : out.notes) n.offset = n.onset + std::min(n.offset - n.onset, onset_length);
  return out;
}

// ---------------------------------------------------------------------------

SplitResult split_points(const Waveform& audio, const NoteSequence& seq, double target) {
  if (!(target > 0.0)) throw InvalidParam("split target must be positive");
  SplitResult result;
  const double duration = audio.duration();
  if (duration < target || audio.samples.empty()) return result;

  const auto& x = audio.samples;
  const std::size_t n = x.size();
  std::vector<std::size_t> crossings;
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] == 0.0 || (x[i - 1] < 0.0) != (x[i] < 0.0)) crossings.push_back(i);

  // Merged note-active intervals.
  std::vector<std::pair<double, double>> active;
  for (const auto& note : seq.notes) active.emplace_back(note.onset, note.offset);
  std::sort(active.begin(), active.end());
  std::vector<std::pair<double, double>> merged;
  for (const auto& iv : active) {
    if (!merged.empty() && iv.first <= merged.back().second)
      merged.back().second = std::max(merged.back().second, iv.second);
    else
      merged.push_back(iv);
  }

  const double sr = audio.sample_rate;
  auto to_sample = [&](double t) {
    return static_cast<std::size_t>(std::clamp(std::llround(t * sr), 0LL, static_cast<long long>(n - 1)));
  };
  // Zero crossing nearest to `center` within [lo, hi]; n when none.
  auto nearest_crossing = [&](std::size_t center, std::size_t lo, std::size_t hi) {
    auto it = std::lower_bound(crossings.begin(), crossings.end(), center);
    std::size_t best = n;
    std::size_t best_dist = std::numeric_limits<std::size_t>::max();
    auto consider = [&](std::size_t c) {
      if (c < lo || c > hi) return;
      const std::size_t d = c > center ? c - center : center - c;
      if (d < best_dist) {
        best = c;
        best_dist = d;
      }
    };
    if (it != crossings.end()) consider(*it);
    if (it != crossings.begin()) consider(*std::prev(it));
    return best;
  };

  for (int k = 1; k * target < duration; ++k) {
    const double t = k * target;
    const double lo = t - 1.0;
    const double hi = t + 1.0;

    // Note-free stretches of positive length inside [lo, hi].
    double best_point = 0.0, best_dist = std::numeric_limits<double>::infinity();
    double gap_lo = 0.0, gap_hi = 0.0;
    double cursor = lo;
    auto consider_gap = [&](double a, double b) {
      a = std::max(a, lo);
      b = std::min(b, hi);
      if (!(b > a)) return;
      const double p = std::clamp(t, a, b);
      if (std::abs(p - t) < best_dist) {
        best_dist = std::abs(p - t);
        best_point = p;
        gap_lo = a;
        gap_hi = b;
      }
    };
    for (const auto& iv : merged) {
      if (iv.second <= lo) continue;
      if (iv.first >= hi) break;
      consider_gap(cursor, iv.first);
      cursor = std::max(cursor, iv.second);
    }
    consider_gap(cursor, hi);

    std::size_t chosen = n;
    if (std::isfinite(best_dist)) {
      chosen = nearest_crossing(to_sample(best_point), to_sample(gap_lo), to_sample(gap_hi));
      if (chosen == n) chosen = nearest_crossing(to_sample(best_point), 0, n - 1);
    } else {
      result.warnings.push_back("no silent gap near " + std::to_string(t) + " s; cutting inside notes");
      chosen = nearest_crossing(to_sample(t), 0, n - 1);
    }
    if (chosen == n) {
      result.warnings.push_back("no zero crossing in audio; cutting at exactly " + std::to_string(t) + " s");
      chosen = to_sample(t);
    }
    if (result.indices.empty() || chosen > result.indices.back()) result.indices.push_back(chosen);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32le(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = v << 8 | b[at + i];
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_planes(std::span<const Matrix> planes, RollKind kind) {
  if (planes.empty()) throw SerializeError("no planes to encode");
  for (const auto& p : planes) require_same_shape(planes.front(), p, "encode_planes");
  std::vector<std::uint8_t> out = {'A', 'M', 'T', 'R'};
  put_u32le(out, static_cast<std::uint32_t>(planes.front().rows()));
  put_u32le(out, static_cast<std::uint32_t>(planes.front().cols()));
  put_u32le(out, static_cast<std::uint32_t>(kind));
  out.reserve(out.size() + planes.size() * planes.front().size() * 4);
  for (const auto& p : planes)
    for (double v : p.data()) put_u32le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

std::vector<std::uint8_t> encode_roll(const Matrix& values, RollKind kind) {
  return encode_planes(std::span<const Matrix>(&values, 1), kind);
}

DecodedRoll decode_roll(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "AMTR", 4) != 0)
    throw ParseError("not an AMTR roll file", 0);
  const std::size_t rows = get_u32le(bytes, 4);
  const std::size_t cols = get_u32le(bytes, 8);
  const std::uint32_t kind = get_u32le(bytes, 12);
  if (kind > static_cast<std::uint32_t>(RollKind::Spectro))
    throw ParseError("unknown roll kind " + std::to_string(kind), 12);
  const std::size_t planes = kind == static_cast<std::uint32_t>(RollKind::Spectro) ? 2 : 1;
  const std::size_t expected = 16 + planes * rows * cols * 4;
  if (bytes.size() != expected)
    throw ParseError("roll payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                         std::to_string(expected),
                     16);
  DecodedRoll out;
  out.kind = static_cast<RollKind>(kind);
  std::size_t at = 16;
  for (std::size_t p = 0; p < planes; ++p) {
    Matrix m(rows, cols);
    for (double& v : m.data()) {
      v = std::bit_cast<float>(get_u32le(bytes, at));
      at += 4;
    }
    out.planes.push_back(std::move(m));
  }
  return out;
}

void save_roll(const PianoRoll& roll, const std::string& path) {
  write_file_bytes(path, encode_roll(roll.values, roll.kind));
}

PianoRoll load_roll(const std::string& path, const RollConfig& cfg) {
  DecodedRoll d;
  try {
    d = decode_roll(read_file_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.position());
  }
  if (d.kind == RollKind::Spectro) throw ParseError(path + ": expected a piano roll, got spectro", 12);
  PianoRoll roll{std::move(d.planes.front()), cfg, d.kind};
  roll.config.num_frames = roll.values.cols();
  return roll;
}

std::string roll_to_csv(const Matrix& values) {
  std::string out;
  char buf[32];
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, c ? ",%.6g" : "%.6g", values(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace amt
