#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "amt/midi.hpp"
#include "amt/waveform.hpp"

namespace amt::fixtures {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi);
int uniform_int(Rng& rng, int lo, int hi);  // inclusive

struct SequenceShape {
  int max_notes = 50;
  double max_duration = 10.0;
  bool pedals = false;
  // Minimum onset spacing for notes of the same pitch, in seconds.
  double same_pitch_gap = 0.0;
};

/// Random piano notes (pitches 21..108, velocities k/127), normalized.
NoteSequence random_sequence(Rng& rng, const SequenceShape& shape = {});

Waveform sine(double freq, double seconds, double amplitude = 0.5, int sample_rate = kModelSampleRate);

/// Sum of decaying partial-rich tones, one per note, for pipeline fixtures.
Waveform render(const NoteSequence& seq, int sample_rate = kModelSampleRate);

/// Frequency of the strongest spectral peak: Hann window, zero padding to at
/// least 8x, parabolic interpolation on log magnitude.
double dominant_frequency(std::span<const double> x, int sample_rate);

double rms(std::span<const double> x);
double rms_difference(std::span<const double> a, std::span<const double> b);

}  // namespace amt::fixtures
