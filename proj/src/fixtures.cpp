#include "amt/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "fft.hpp"

namespace amt::fixtures {

double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

NoteSequence random_sequence(Rng& rng, const SequenceShape& shape) {
  NoteSequence seq;
  const int n = uniform_int(rng, 0, shape.max_notes);
  for (int i = 0; i < n; ++i) {
    NoteEvent e;
    for (int attempt = 0; attempt < 100; ++attempt) {
      e.pitch = uniform_int(rng, kPianoPitchMin, kPianoPitchMax);
      e.onset = uniform(rng, 0.0, shape.max_duration * 0.9);
      const bool clash = std::any_of(seq.notes.begin(), seq.notes.end(), [&](const NoteEvent& o) {
        return o.pitch == e.pitch && std::abs(o.onset - e.onset) < shape.same_pitch_gap;
      });
      if (!clash) break;
      e.pitch = -1;
    }
    if (e.pitch < 0) continue;
    e.offset = e.onset + uniform(rng, 0.03, 1.5);
    e.velocity = uniform_int(rng, 1, 127) / 127.0;
    seq.notes.push_back(e);
  }
  if (shape.pedals) {
    double t = 0.0;
    while (true) {
      t += uniform(rng, 0.2, 2.0);
      if (t >= shape.max_duration) break;
      seq.pedals.push_back({t, true});
      t += uniform(rng, 0.1, 2.0);
      if (t >= shape.max_duration) break;
      seq.pedals.push_back({t, false});
    }
  }
  seq.duration = 0.0;
  seq.normalize();
  return seq;
}

Waveform sine(double freq, double seconds, double amplitude, int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(static_cast<std::size_t>(std::llround(seconds * sample_rate)));
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sample_rate);
  return w;
}

Waveform render(const NoteSequence& seq, int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(static_cast<std::size_t>(std::ceil(seq.duration * sample_rate)) + 1, 0.0);
  for (const auto& n : seq.notes) {
    const double f0 = 440.0 * std::exp2((n.pitch - 69) / 12.0);
    const auto begin = static_cast<std::size_t>(n.onset * sample_rate);
    const auto end = std::min(w.samples.size(), static_cast<std::size_t>(n.offset * sample_rate));
    for (std::size_t i = begin; i < end; ++i) {
      const double t = static_cast<double>(i - begin) / sample_rate;
      double v = 0.0;
      for (int h = 1; h <= 4 && h * f0 < sample_rate / 2.0; ++h)
        v += std::sin(2.0 * std::numbers::pi * h * f0 * t) / h;
      w.samples[i] += 0.1 * n.velocity * std::exp(-3.0 * t) * v;
    }
  }
  return w;
}

double dominant_frequency(std::span<const double> x, int sample_rate) {
  if (x.empty()) return 0.0;
  std::size_t n = 1;
  while (n < 8 * x.size()) n <<= 1;
  std::vector<double> buf(n, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    buf[i] = x[i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(x.size())));
  detail::RealFft fft(n);
  std::vector<std::complex<double>> spec(fft.bins());
  fft.forward(buf, spec);
  std::size_t best = 1;
  for (std::size_t k = 1; k + 1 < spec.size(); ++k)
    if (std::norm(spec[k]) > std::norm(spec[best])) best = k;
  double shift = 0.0;
  if (best > 0 && best + 1 < spec.size()) {
    const double a = std::log(std::abs(spec[best - 1]) + 1e-300);
    const double b = std::log(std::abs(spec[best]) + 1e-300);
    const double c = std::log(std::abs(spec[best + 1]) + 1e-300);
    const double den = a - 2 * b + c;
    if (den < 0) shift = 0.5 * (a - c) / den;
  }
  return (static_cast<double>(best) + shift) * sample_rate / static_cast<double>(n);
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

double rms_difference(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::max(a.size(), b.size());
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (i < a.size() ? a[i] : 0.0) - (i < b.size() ? b[i] : 0.0);
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(n));
}

}  // namespace amt::fixtures
