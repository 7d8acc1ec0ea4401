#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amt/matrix.hpp"
#include "amt/waveform.hpp"

namespace amt {

struct FrontendConfig {
  int sample_rate = kModelSampleRate;
  int window = 2048;  // Hann, also the FFT size
  int hop = 384;
  int n_mels = 229;
  double f_min = 50.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;

  double frame_seconds() const { return static_cast<double>(hop) / sample_rate; }
  int num_bins() const { return window / 2 + 1; }
  void validate() const;

  /// Named presets: "ov-2023" (hop 384, 24 ms frames) and "of-2017"
  /// (hop 512). Throws InvalidParam for anything else.
  static FrontendConfig preset(const std::string& name);
};

struct SpectroInput {
  Matrix x;   // n_mels x T' log-mel
  Matrix dx;  // first time difference, column 0 is zero

  std::size_t num_frames() const { return x.cols(); }
};

std::size_t stft_frame_count(std::size_t num_samples, int hop);

/// Power spectrogram |FFT|^2 of centered, reflect-padded Hann frames:
/// (window/2 + 1) x (floor(T / hop) + 1).
Matrix stft_power(const Waveform& w, const FrontendConfig& cfg, int threads = 1);

/// Triangular HTK-mel filters, each scaled by 2 / (upper - lower) Hz.
Matrix mel_filterbank(const FrontendConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Frequencies (Hz) of the n_mels + 2 filter edge points.
std::vector<double> mel_edges(const FrontendConfig& cfg);

/// ln(max(filterbank * power, log_floor)), rounded to a multiple of 2^-32 so
/// that cumulative sums of the time derivative reproduce x bit for bit.
Matrix log_mel(const Waveform& w, const FrontendConfig& cfg, int threads = 1);

Matrix time_derivative(const Matrix& x);

/// log_mel plus its time derivative.
SpectroInput compute_frontend(const Waveform& w, const FrontendConfig& cfg, int threads = 1);

std::vector<std::uint8_t> encode_spectro(const SpectroInput& s);
SpectroInput decode_spectro(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// WAV I/O and resampling

/// RIFF/WAVE with 16-bit PCM or 32-bit float samples (plain or
/// WAVE_FORMAT_EXTENSIBLE). Multi-channel input is averaged to mono.
/// Anything else throws UnsupportedFormat.
Waveform read_wav(std::span<const std::uint8_t> bytes);

enum class WavEncoding { Pcm16, Float32 };
std::vector<std::uint8_t> write_wav(const Waveform& w, WavEncoding enc = WavEncoding::Float32);

Waveform load_wav(const std::string& path);
void save_wav(const Waveform& w, const std::string& path, WavEncoding enc = WavEncoding::Float32);

/// Kaiser-windowed sinc interpolation (32 zero crossings per side, beta 8.6,
/// cutoff at the lower Nyquist). Returns the input unchanged when the rates
/// already match.
Waveform resample(const Waveform& w, int target_rate);

/// Same interpolator for an arbitrary rate ratio (output samples per input
/// sample); output length is round(size * ratio).
std::vector<double> resample_ratio(std::span<const double> x, double ratio);

}  // namespace amt
