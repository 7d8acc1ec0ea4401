#include "amt/augment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "amt/dsp.hpp"
#include "amt/error.hpp"
#include "fft.hpp"

namespace amt {

void AugmentParams::validate() const {
  auto check = [&](double v, const char* name) {
    if (!(v > 0)) throw InvalidParam(std::string(name) + " must be positive");
    if (v < min_factor || v > max_factor)
      throw InvalidParam(std::string(name) + " = " + std::to_string(v) + " outside [" +
                         std::to_string(min_factor) + ", " + std::to_string(max_factor) + "]");
  };
  check(alpha, "alpha");
  check(beta, "beta");
}

namespace {

using Spectrum = std::vector<std::complex<double>>;

double wrap_phase(double p) {
  return p - 2.0 * std::numbers::pi * std::round(p / (2.0 * std::numbers::pi));
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

// Centered, zero-padded analysis frames.
std::vector<Spectrum> analyze(const std::vector<double>& x, std::size_t n, std::size_t hop,
                              const std::vector<double>& win) {
  const std::size_t frames = x.size() / hop + 1;
  detail::RealFft fft(n);
  std::vector<double> buf(n);
  std::vector<Spectrum> out(frames, Spectrum(fft.bins()));
  const long long half = static_cast<long long>(n / 2);
  for (std::size_t t = 0; t < frames; ++t) {
    const long long start = static_cast<long long>(t * hop) - half;
    for (std::size_t i = 0; i < n; ++i) {
      const long long j = start + static_cast<long long>(i);
      buf[i] = (j >= 0 && j < static_cast<long long>(x.size())) ? x[static_cast<std::size_t>(j)] * win[i] : 0.0;
    }
    fft.forward(buf, out[t]);
  }
  return out;
}

// Weighted overlap-add with squared-window normalization, center removed.
std::vector<double> synthesize(const std::vector<Spectrum>& frames, std::size_t n, std::size_t hop,
                               const std::vector<double>& win, std::size_t out_len) {
  const std::size_t total = (frames.empty() ? 0 : (frames.size() - 1) * hop) + n;
  std::vector<double> acc(total, 0.0), norm(total, 0.0), buf(n);
  detail::RealFft fft(n);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    fft.inverse(frames[t], buf);
    for (std::size_t i = 0; i < n; ++i) {
      acc[t * hop + i] += buf[i] / static_cast<double>(n) * win[i];
      norm[t * hop + i] += win[i] * win[i];
    }
  }
  std::vector<double> y(out_len, 0.0);
  const std::size_t half = n / 2;
  for (std::size_t i = 0; i < out_len && i + half < total; ++i) {
    const double nv = norm[i + half];
    y[i] = nv > 1e-10 ? acc[i + half] / nv : 0.0;
  }
  return y;
}

// Index of the peak whose region of influence contains each bin; regions
// split at the lowest-magnitude bin between neighboring peaks.
std::vector<std::size_t> peak_regions(const std::vector<double>& mag) {
  const std::size_t bins = mag.size();
  std::vector<std::size_t> peaks;
  for (std::size_t k = 0; k < bins; ++k) {
    const double left = k > 0 ? mag[k - 1] : -1.0;
    const double right = k + 1 < bins ? mag[k + 1] : -1.0;
    if (mag[k] > left && mag[k] >= right) peaks.push_back(k);
  }
  std::vector<std::size_t> owner(bins);
  if (peaks.empty()) {
    for (std::size_t k = 0; k < bins; ++k) owner[k] = k;
    return owner;
  }
  std::size_t start = 0;
  for (std::size_t p = 0; p < peaks.size(); ++p) {
    std::size_t end = bins;
    if (p + 1 < peaks.size()) {
      end = peaks[p];
      for (std::size_t k = peaks[p]; k <= peaks[p + 1]; ++k)
        if (mag[k] < mag[end]) end = k;
      end += 1;
    }
    for (std::size_t k = start; k < end; ++k) owner[k] = peaks[p];
    start = end;
  }
  return owner;
}

}  // namespace

Waveform time_stretch(const Waveform& w, double alpha, const VocoderConfig& cfg) {
  if (!(alpha > 0)) throw InvalidParam("alpha must be positive");
  const std::size_t n = static_cast<std::size_t>(cfg.window);
  const std::size_t hop = static_cast<std::size_t>(cfg.hop);
  const std::size_t out_len = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(w.samples.size())));
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (w.samples.empty()) return out;

  const auto win = hann(n);
  auto frames = analyze(w.samples, n, hop, win);
  const std::size_t bins = n / 2 + 1;
  const std::size_t in_frames = frames.size();
  frames.emplace_back(bins);  // zero frame for interpolation past the end

  std::vector<std::vector<double>> mags(frames.size(), std::vector<double>(bins));
  std::vector<std::vector<double>> phases(frames.size(), std::vector<double>(bins));
  std::vector<bool> transient(frames.size(), false);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    double rise = 0.0, total = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      mags[t][k] = std::abs(frames[t][k]);
      phases[t][k] = std::arg(frames[t][k]);
      total += mags[t][k];
      if (t > 0) rise += std::max(0.0, mags[t][k] - mags[t - 1][k]);
    }
    transient[t] = t > 0 && total > 1e-9 && rise / total > cfg.transient_flux;
  }

  std::vector<double> advance(bins);
  for (std::size_t k = 0; k < bins; ++k)
    advance[k] = 2.0 * std::numbers::pi * static_cast<double>(k * hop) / static_cast<double>(n);

  const double step = 1.0 / alpha;
  const std::size_t out_frames = static_cast<std::size_t>(std::ceil(static_cast<double>(in_frames) * alpha));
  std::vector<Spectrum> synth(out_frames, Spectrum(bins));
  std::vector<double> phase_acc = phases[0];
  std::vector<double> mag(bins);
  std::size_t last_base = 0;
  for (std::size_t j = 0; j < out_frames; ++j) {
    const double pos = static_cast<double>(j) * step;
    const std::size_t base = std::min(static_cast<std::size_t>(pos), in_frames - 1);
    const double frac = std::min(pos - static_cast<double>(base), 1.0);
    for (std::size_t u = last_base + 1; u <= base; ++u)
      if (transient[u]) phase_acc = phases[u];
    last_base = base;

    for (std::size_t k = 0; k < bins; ++k) mag[k] = (1.0 - frac) * mags[base][k] + frac * mags[base + 1][k];
    const auto owner = peak_regions(mag);
    for (std::size_t k = 0; k < bins; ++k) {
      const std::size_t p = owner[k];
      const double phase = p == k ? phase_acc[k] : phase_acc[p] + phases[base][k] - phases[base][p];
      synth[j][k] = std::polar(mag[k], phase);
    }
    for (std::size_t k = 0; k < bins; ++k) {
      const double dphi = wrap_phase(phases[base + 1][k] - phases[base][k] - advance[k]);
      phase_acc[k] += advance[k] + dphi;
    }
  }
  out.samples = synthesize(synth, n, hop, win, out_len);
  return out;
}

Waveform pitch_shift(const Waveform& w, double beta, const VocoderConfig& cfg) {
  if (!(beta > 0)) throw InvalidParam("beta must be positive");
  const Waveform stretched = time_stretch(w, beta, cfg);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = beta == 1.0 ? stretched.samples : resample_ratio(stretched.samples, 1.0 / beta);
  out.samples.resize(w.samples.size(), 0.0);
  return out;
}

AugmentedPair augment_pair(const Waveform& w, const NoteSequence& seq, const AugmentParams& p,
                           const VocoderConfig& cfg) {
  p.validate();
  AugmentedPair out;
  Waveform audio = p.alpha == 1.0 ? w : time_stretch(w, p.alpha, cfg);
  out.audio = p.beta == 1.0 ? std::move(audio) : pitch_shift(audio, p.beta, cfg);

  const int shift = static_cast<int>(std::lround(p.semitones()));
  out.labels = seq;
  out.labels.notes.clear();
  for (auto n : seq.notes) {
    n.onset *= p.alpha;
    n.offset *= p.alpha;
    n.pitch += shift;
    if (n.pitch < kPianoPitchMin || n.pitch > kPianoPitchMax) {
      ++out.dropped_notes;
      continue;
    }
    out.labels.notes.push_back(n);
  }
  for (auto& pedal : out.labels.pedals) pedal.time *= p.alpha;
  out.labels.duration = seq.duration * p.alpha;
  if (out.dropped_notes > 0)
    out.labels.warnings.push_back(std::to_string(out.dropped_notes) +
                                  " notes shifted outside the piano range were dropped");
  out.labels.normalize();
  return out;
}

}  // namespace amt
