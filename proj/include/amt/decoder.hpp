#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "amt/matrix.hpp"
#include "amt/midi.hpp"

namespace amt {

struct DecoderParams {
  double sigma = 1.0;   // frames
  double rho = 0.74;    // inclusive threshold
  double mu = -0.01;    // seconds added to every onset time

  void validate() const;
};

struct ScoreEvent {
  int pitch = 0;
  double velocity = 0.0;
  double time = 0.0;

  friend bool operator==(const ScoreEvent&, const ScoreEvent&) = default;
};

/// Onset events sorted by (time, pitch).
struct ScorePrediction {
  std::vector<ScoreEvent> events;
};

/// Gaussian kernel of standard deviation sigma truncated at +-ceil(3 sigma)
/// taps and normalized to unit sum. sigma == 0 gives the single tap {1}.
std::vector<double> gaussian_kernel(double sigma);

/// Smooths every row along time with zero padding at both ends.
Matrix gaussian_smooth(const Matrix& roll, double sigma);

/// Zeroes every cell strictly smaller than its left or right neighbor.
/// Edge cells only compare against the neighbor that exists; ties survive.
Matrix nms(const Matrix& roll);

/// (key, frame) cells of nms(smooth(roll)) that reach rho, ordered by key
/// then frame.
std::vector<std::pair<std::size_t, std::size_t>> pick_onsets(const Matrix& roll, const DecoderParams& params);

ScorePrediction decode(const Matrix& onset_roll, const Matrix& velocity_roll, const DecoderParams& params,
                       double delta_t, int pitch_min = kPianoPitchMin);

/// Onset-only events as notes with a fixed nominal length, for writing
/// note tables or MIDI.
NoteSequence score_to_notes(const ScorePrediction& score, double note_length = 0.1);
ScorePrediction notes_to_score(const NoteSequence& seq);

}  // namespace amt
