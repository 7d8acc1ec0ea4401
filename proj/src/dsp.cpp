#include "amt/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>

#include "amt/error.hpp"
#include "amt/midi.hpp"
#include "amt/parallel.hpp"
#include "amt/pianoroll.hpp"
#include "fft.hpp"

namespace amt {

void FrontendConfig::validate() const {
  if (sample_rate <= 0) throw InvalidParam("sample_rate must be positive");
  if (window < 2 || (window & (window - 1)) != 0) throw InvalidParam("window must be a power of two");
  if (hop <= 0 || hop > window) throw InvalidParam("hop must be in (0, window]");
  if (n_mels <= 0) throw InvalidParam("n_mels must be positive");
  if (!(f_min >= 0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw InvalidParam("need 0 <= f_min < f_max <= sample_rate / 2");
  if (!(log_floor > 0)) throw InvalidParam("log_floor must be positive");
}

FrontendConfig FrontendConfig::preset(const std::string& name) {
  FrontendConfig cfg;
  if (name == "ov-2023") return cfg;
  if (name == "of-2017") {
    cfg.hop = 512;
    return cfg;
  }
  throw InvalidParam("unknown frontend preset '" + name + "' (expected ov-2023 or of-2017)");
}

std::size_t stft_frame_count(std::size_t num_samples, int hop) {
  return num_samples / static_cast<std::size_t>(hop) + 1;
}

Matrix stft_power(const Waveform& w, const FrontendConfig& cfg, int threads) {
  cfg.validate();
  if (w.samples.empty()) throw EmptyInput("stft_power: empty waveform");
  if (w.sample_rate != cfg.sample_rate)
    throw InvalidParam("stft_power: waveform is " + std::to_string(w.sample_rate) + " Hz, expected " +
                       std::to_string(cfg.sample_rate) + " Hz (resample first)");

  const std::size_t n = static_cast<std::size_t>(cfg.window);
  const std::size_t half = n / 2;
  const std::size_t len = w.samples.size();
  const std::size_t frames = stft_frame_count(len, cfg.hop);
  const std::size_t bins = n / 2 + 1;

  std::vector<double> hann(n);
  for (std::size_t i = 0; i < n; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));

  // Reflect (edge excluded) for any signal length.
  auto sample_at = [&](long long j) {
    if (len == 1) return w.samples[0];
    const long long period = 2 * (static_cast<long long>(len) - 1);
    j %= period;
    if (j < 0) j += period;
    if (j >= static_cast<long long>(len)) j = period - j;
    return w.samples[static_cast<std::size_t>(j)];
  };

  Matrix power(bins, frames);
  const std::size_t workers = static_cast<std::size_t>(std::max(threads, 1));
  const std::size_t chunk = (frames + workers - 1) / workers;
  parallel_for(workers, threads, [&](std::size_t wkr) {
    detail::RealFft fft(n);
    std::vector<double> frame(n);
    std::vector<std::complex<double>> spec(bins);
    const std::size_t end = std::min(frames, (wkr + 1) * chunk);
    for (std::size_t t = wkr * chunk; t < end; ++t) {
      const long long start = static_cast<long long>(t) * cfg.hop - static_cast<long long>(half);
      for (std::size_t i = 0; i < n; ++i) frame[i] = sample_at(start + static_cast<long long>(i)) * hann[i];
      fft.forward(frame, spec);
      for (std::size_t k = 0; k < bins; ++k) power(k, t) = std::norm(spec[k]);
    }
  });
  return power;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_edges(const FrontendConfig& cfg) {
  const double lo = hz_to_mel(cfg.f_min);
  const double hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(edges.size() - 1));
  edges.front() = cfg.f_min;
  edges.back() = cfg.f_max;
  return edges;
}

Matrix mel_filterbank(const FrontendConfig& cfg) {
  cfg.validate();
  const auto edges = mel_edges(cfg);
  const std::size_t bins = static_cast<std::size_t>(cfg.num_bins());
  Matrix fb(static_cast<std::size_t>(cfg.n_mels), bins);
  for (std::size_t m = 0; m < fb.rows(); ++m) {
    const double lower = edges[m], center = edges[m + 1], upper = edges[m + 2];
    const double norm = 2.0 / (upper - lower);
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.window;
      const double rise = (f - lower) / (center - lower);
      const double fall = (upper - f) / (upper - center);
      fb(m, k) = std::max(0.0, std::min(rise, fall)) * norm;
    }
  }
  return fb;
}

Matrix log_mel(const Waveform& w, const FrontendConfig& cfg, int threads) {
  const Matrix power = stft_power(w, cfg, threads);
  const Matrix fb = mel_filterbank(cfg);
  Matrix x(fb.rows(), power.cols());
  parallel_for(power.cols(), threads, [&](std::size_t t) {
    for (std::size_t m = 0; m < fb.rows(); ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < fb.cols(); ++k) acc += fb(m, k) * power(k, t);
      // Dyadic grid: time differences and their running sums stay exact.
      x(m, t) = std::nearbyint(std::log(std::max(acc, cfg.log_floor)) * 0x1p32) * 0x1p-32;
    }
  });
  return x;
}

Matrix time_derivative(const Matrix& x) {
  Matrix dx(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t t = 1; t < x.cols(); ++t) dx(r, t) = x(r, t) - x(r, t - 1);
  return dx;
}

SpectroInput compute_frontend(const Waveform& w, const FrontendConfig& cfg, int threads) {
  SpectroInput s;
  s.x = log_mel(w, cfg, threads);
  s.dx = time_derivative(s.x);
  return s;
}

std::vector<std::uint8_t> encode_spectro(const SpectroInput& s) {
  const Matrix planes[] = {s.x, s.dx};
  return encode_planes(planes, RollKind::Spectro);
}

SpectroInput decode_spectro(std::span<const std::uint8_t> bytes) {
  auto d = decode_roll(bytes);
  if (d.kind != RollKind::Spectro) throw ParseError("expected a spectro file", 12);
  return {std::move(d.planes[0]), std::move(d.planes[1])};
}

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}
std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}
void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

Waveform read_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw UnsupportedFormat("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::string id(reinterpret_cast<const char*>(b.data() + at), 4);
    std::size_t len = le32(b, at + 4);
    const std::size_t body = at + 8;
    if (body + len > b.size()) {
      if (id != "data") throw UnsupportedFormat("chunk '" + id + "' runs past end of file");
      len = b.size() - body;  // tolerate streams written with a bogus data size
    }
    if (id == "fmt ") {
      if (len < 16) throw UnsupportedFormat("fmt chunk too short");
      format = le16(b, body);
      channels = le16(b, body + 2);
      rate = le32(b, body + 4);
      bits = le16(b, body + 14);
      if (format == 0xfffe) {
        if (len < 40) throw UnsupportedFormat("extensible fmt chunk too short");
        format = le16(b, body + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      data = b.subspan(body, len);
      have_data = true;
    }
    at = body + len + (len & 1);
  }
  if (!have_fmt || !have_data) throw UnsupportedFormat("missing fmt or data chunk");
  if (channels == 0 || rate == 0) throw UnsupportedFormat("invalid channel count or sample rate");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw UnsupportedFormat("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                            std::to_string(bits) + " bits); need PCM16 or float32");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data.size() / frame_bytes;
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = i * frame_bytes + c * bytes_per_sample;
      if (pcm16)
        acc += static_cast<std::int16_t>(le16(data, off)) / 32768.0;
      else
        acc += static_cast<double>(std::bit_cast<float>(le32(data, off)));
    }
    w.samples[i] = acc / channels;
  }
  return w;
}

std::vector<std::uint8_t> write_wav(const Waveform& w, WavEncoding enc) {
  const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * bits / 8);
  std::vector<std::uint8_t> out = {'R', 'I', 'F', 'F'};
  put_le32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_le32(out, 16);
  put_le16(out, enc == WavEncoding::Pcm16 ? 1 : 3);
  put_le16(out, 1);
  put_le32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_le32(out, static_cast<std::uint32_t>(w.sample_rate) * bits / 8);
  put_le16(out, bits / 8);
  put_le16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_le32(out, data_bytes);
  for (double s : w.samples) {
    if (enc == WavEncoding::Pcm16) {
      const long v = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
      put_le16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    } else {
      put_le32(out, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
    }
  }
  return out;
}

Waveform load_wav(const std::string& path) {
  try {
    return read_wav(read_file_bytes(path));
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(path + ": " + e.what());
  }
}

void save_wav(const Waveform& w, const std::string& path, WavEncoding enc) {
  write_file_bytes(path, write_wav(w, enc));
}

// ---------------------------------------------------------------------------
// Resampling

std::vector<double> resample_ratio(std::span<const double> x, double ratio) {
  if (!(ratio > 0)) throw InvalidParam("resample ratio must be positive");
  constexpr int kZeroCrossings = 32;
  constexpr double kBeta = 8.6;
  const std::size_t out_len = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * ratio));
  std::vector<double> y(out_len);
  if (x.empty()) return y;

  const double cutoff = std::min(1.0, ratio);  // fraction of the input Nyquist
  const double half_width = kZeroCrossings / cutoff;
  // Kaiser window tabulated over |r| in [0, 1], linearly interpolated.
  constexpr std::size_t kTable = 8192;
  static const std::vector<double> kaiser = [] {
    std::vector<double> tab(kTable + 2);
    const double i0_beta = std::cyl_bessel_i(0.0, kBeta);
    for (std::size_t i = 0; i <= kTable; ++i) {
      const double r = static_cast<double>(i) / kTable;
      tab[i] = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    }
    tab[kTable + 1] = tab[kTable];
    return tab;
  }();

  for (std::size_t m = 0; m < out_len; ++m) {
    const double t = static_cast<double>(m) / ratio;
    const long long first = static_cast<long long>(std::ceil(t - half_width));
    const long long last = static_cast<long long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long long k = std::max(first, 0LL); k <= std::min(last, static_cast<long long>(x.size()) - 1); ++k) {
      const double d = t - static_cast<double>(k);
      const double pos = std::abs(d) / half_width * kTable;
      const std::size_t idx = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(idx);
      const double window = kaiser[idx] + frac * (kaiser[idx + 1] - kaiser[idx]);
      const double arg = cutoff * d;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      acc += x[static_cast<std::size_t>(k)] * cutoff * sinc * window;
    }
    y[m] = acc;
  }
  return y;
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw InvalidParam("target rate must be positive");
  if (w.sample_rate == target_rate) return w;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples = resample_ratio(w.samples, static_cast<double>(target_rate) / w.sample_rate);
  return out;
}

}  // namespace amt
