#pragma once

#include <cmath>

#include "amt/midi.hpp"
#include "amt/waveform.hpp"

namespace amt {

struct AugmentParams {
  double alpha = 1.0;  // time-stretch factor, output duration = alpha * input
  double beta = 1.0;   // pitch-shift factor, frequencies scale by beta
  double min_factor = 0.5;
  double max_factor = 2.0;

  static AugmentParams from_semitones(double alpha, double semitones) {
    return {alpha, std::exp2(semitones / 12.0)};
  }
  double semitones() const { return 12.0 * std::log2(beta); }
  void validate() const;
};

struct VocoderConfig {
  int window = 2048;
  int hop = 512;
  // Relative positive spectral flux above which an input frame counts as a
  // transient and the synthesis phase is reset to the analysis phase.
  double transient_flux = 0.3;
};

/// Phase-vocoder time stretch: duration scales by alpha, pitch is kept.
Waveform time_stretch(const Waveform& w, double alpha, const VocoderConfig& cfg = {});

/// Time stretch by beta followed by resampling by 1/beta: duration kept,
/// frequencies multiplied by beta.
Waveform pitch_shift(const Waveform& w, double beta, const VocoderConfig& cfg = {});

struct AugmentedPair {
  Waveform audio;
  NoteSequence labels;
  int dropped_notes = 0;  // shifted outside the piano range
};

/// Applies stretch then shift to the audio and the matching label edit:
/// times scale by alpha, pitches move by round(12 log2 beta) semitones.
AugmentedPair augment_pair(const Waveform& w, const NoteSequence& seq, const AugmentParams& p,
                           const VocoderConfig& cfg = {});

}  // namespace amt
