#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>

#include "amt/dsp.hpp"
#include "amt/error.hpp"
#include "amt/fixtures.hpp"
#include "amt/pianoroll.hpp"
#include "doctest.h"

using namespace amt;

namespace {

void le(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Hand-rolled RIFF writer; `extensible` wraps the format tag in a
// WAVE_FORMAT_EXTENSIBLE fmt chunk.
std::vector<std::uint8_t> wav_bytes(int format, int channels, int rate, int bits,
                                    const std::vector<std::uint8_t>& payload, bool extensible = false) {
  std::vector<std::uint8_t> fmt;
  le(fmt, extensible ? 0xfffe : static_cast<std::uint32_t>(format), 2);
  le(fmt, static_cast<std::uint32_t>(channels), 2);
  le(fmt, static_cast<std::uint32_t>(rate), 4);
  le(fmt, static_cast<std::uint32_t>(rate * channels * bits / 8), 4);
  le(fmt, static_cast<std::uint32_t>(channels * bits / 8), 2);
  le(fmt, static_cast<std::uint32_t>(bits), 2);
  if (extensible) {
    le(fmt, 22, 2);
    le(fmt, static_cast<std::uint32_t>(bits), 2);
    le(fmt, 0, 4);
    le(fmt, static_cast<std::uint32_t>(format), 2);
    const std::uint8_t guid_tail[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80,
                                        0x00, 0x00, 0xaa, 0x00, 0x38, 0x9b, 0x71};
    fmt.insert(fmt.end(), guid_tail, guid_tail + 14);
  }
  std::vector<std::uint8_t> out = {'R', 'I', 'F', 'F'};
  le(out, static_cast<std::uint32_t>(4 + 8 + fmt.size() + 8 + payload.size()), 4);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  le(out, static_cast<std::uint32_t>(fmt.size()), 4);
  out.insert(out.end(), fmt.begin(), fmt.end());
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  le(out, static_cast<std::uint32_t>(payload.size()), 4);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::vector<std::uint8_t> pcm16_payload(const std::vector<int>& values) {
  std::vector<std::uint8_t> p;
  for (int v : values) le(p, static_cast<std::uint32_t>(static_cast<std::uint16_t>(static_cast<std::int16_t>(v))), 2);
  return p;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Frames whose window lies fully inside the signal.
bool interior(std::size_t t, std::size_t len, const FrontendConfig& cfg) {
  const long long start = static_cast<long long>(t) * cfg.hop - cfg.window / 2;
  return start >= 0 && start + cfg.window <= static_cast<long long>(len);
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("440 Hz sine peaks at bin 56 in interior frames") {
    FrontendConfig cfg;
    const auto w = fixtures::sine(440.0, 1.0);
    const auto p = stft_power(w, cfg);
    CHECK(p.rows() == 1025);
    CHECK(p.cols() == 16000 / 384 + 1);
    CHECK(std::lround(440.0 * 2048 / 16000) == 56);
    int checked = 0;
    for (std::size_t t = 0; t < p.cols(); ++t) {
      if (!interior(t, w.samples.size(), cfg)) continue;
      std::vector<double> col(p.rows());
      for (std::size_t k = 0; k < p.rows(); ++k) col[k] = p(k, t);
      CHECK(argmax(col) == 56);
      ++checked;
    }
    CHECK(checked > 30);
  }

  TEST_CASE("silence gives a zero spectrum and a floor log-mel") {
    Waveform z;
    z.samples.assign(8000, 0.0);
    FrontendConfig cfg;
    const auto pz = stft_power(z, cfg);
    for (double v : pz.data()) CHECK(v == 0.0);
    const auto x = log_mel(z, cfg);
    const double floor_value = std::nearbyint(std::log(1e-10) * 0x1p32) * 0x1p-32;
    bool all = true;
    for (double v : x.data()) all &= v == floor_value;
    CHECK(all);
    CHECK(std::abs(floor_value - std::log(1e-10)) <= 0x1p-33);
    Waveform empty;
    CHECK_THROWS_AS(stft_power(empty, cfg), EmptyInput);
  }

  TEST_CASE("small-window STFT matches a naive DFT with reflect padding") {
    FrontendConfig cfg;
    cfg.window = 64;
    cfg.hop = 16;
    cfg.n_mels = 8;
    fixtures::Rng rng(4);
    Waveform w;
    for (int i = 0; i < 300; ++i) w.samples.push_back(fixtures::uniform(rng, -1, 1));
    const auto p = stft_power(w, cfg);
    const long long n = static_cast<long long>(w.samples.size());
    auto reflect = [&](long long j) {
      while (j < 0 || j >= n) j = j < 0 ? -j : 2 * (n - 1) - j;
      return w.samples[static_cast<std::size_t>(j)];
    };
    REQUIRE(p.cols() == 300 / 16 + 1);
    for (std::size_t t = 0; t < p.cols(); ++t) {
      std::vector<double> frame(64);
      double energy = 0;
      for (int i = 0; i < 64; ++i) {
        const double win = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / 64);
        frame[static_cast<std::size_t>(i)] = reflect(static_cast<long long>(t) * 16 - 32 + i) * win;
        energy += frame[static_cast<std::size_t>(i)] * frame[static_cast<std::size_t>(i)];
      }
      double parseval = 0;
      for (std::size_t k = 0; k <= 32; ++k) {
        std::complex<double> acc = 0;
        for (std::size_t i = 0; i < 64; ++i)
          acc += frame[i] * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(k * i) / 64);
        CHECK(p(k, t) == doctest::Approx(std::norm(acc)).epsilon(1e-9).scale(1e-9));
        parseval += (k == 0 || k == 32 ? 1.0 : 2.0) * p(k, t);
      }
      CHECK(parseval == doctest::Approx(64 * energy).epsilon(1e-10));
    }
  }

  TEST_CASE("mel filterbank shape, range and coverage") {
    FrontendConfig cfg;
    const auto fb = mel_filterbank(cfg);
    REQUIRE(fb.rows() == 229);
    REQUIRE(fb.cols() == 1025);
    const auto edges = mel_edges(cfg);
    CHECK(edges.size() == 231);
    CHECK(edges.front() == 50.0);
    CHECK(edges.back() == 8000.0);
    // Centers equally spaced in HTK mel.
    const double step = (2595 * std::log10(1 + 8000.0 / 700) - 2595 * std::log10(1 + 50.0 / 700)) / 230;
    for (std::size_t i = 1; i + 1 < edges.size(); ++i)
      CHECK(hz_to_mel(edges[i]) - hz_to_mel(edges[i - 1]) == doctest::Approx(step).epsilon(1e-9));
    CHECK(hz_to_mel(mel_to_hz(1234.5)) == doctest::Approx(1234.5));
    CHECK(edges[1] > 50.0);
    CHECK(edges[1] < 70.0);

    for (std::size_t m = 0; m < fb.rows(); ++m) {
      const auto row = fb.row(m);
      bool nonneg = true;
      for (double v : row) nonneg &= v >= 0;
      CHECK(nonneg);
      // Unimodal: non-decreasing up to the peak, non-increasing after.
      const std::size_t peak = argmax(row);
      bool up = true, down = true;
      for (std::size_t k = 1; k <= peak; ++k) up &= row[k] >= row[k - 1];
      for (std::size_t k = peak + 1; k < row.size(); ++k) down &= row[k] <= row[k - 1];
      CHECK(up);
      CHECK(down);
    }
    const double bin_hz = 16000.0 / 2048;
    for (std::size_t k = 0; k < fb.cols(); ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      if (f <= edges[1] || f >= edges[229]) continue;
      double total = 0;
      for (std::size_t m = 0; m < fb.rows(); ++m) total += fb(m, k);
      CHECK(total > 0);
    }
    // Top filter ends at 8000 Hz: nothing above the Nyquist-side edge.
    for (std::size_t k = 0; k < fb.cols(); ++k)
      if (static_cast<double>(k) * bin_hz >= 8000.0) CHECK(fb(228, k) == 0.0);
  }

  TEST_CASE("log-mel: doubling amplitude adds ln 4, 440 Hz lands in its filter") {
    FrontendConfig cfg;
    fixtures::Rng rng(8);
    Waveform a;
    for (int i = 0; i < 16000; ++i) a.samples.push_back(fixtures::uniform(rng, -0.3, 0.3));
    Waveform b = a;
    for (double& s : b.samples) s *= 2;
    const auto xa = log_mel(a, cfg);
    const auto xb = log_mel(b, cfg);
    double worst = 0;
    for (std::size_t i = 0; i < xa.size(); ++i)
      if (xa.data()[i] > std::log(1e-10) + 1) worst = std::max(worst, std::abs(xb.data()[i] - xa.data()[i] - std::log(4.0)));
    CHECK(worst < 1e-8);

    const auto w = fixtures::sine(440.0, 1.0);
    const auto x = log_mel(w, cfg);
    const auto edges = mel_edges(cfg);
    for (std::size_t t = 0; t < x.cols(); ++t) {
      if (!interior(t, w.samples.size(), cfg)) continue;
      std::vector<double> col(x.rows());
      for (std::size_t m = 0; m < x.rows(); ++m) col[m] = x(m, t);
      const std::size_t m = argmax(col);
      CHECK(edges[m] < 440.0);
      CHECK(edges[m + 2] > 440.0);
    }
  }

  TEST_CASE("time derivative examples and exact telescoping") {
    Matrix c(3, 5, 2.5);
    const auto dc = time_derivative(c);
    for (double v : dc.data()) CHECK(v == 0.0);
    Matrix ramp(2, 6);
    for (std::size_t t = 0; t < 6; ++t) ramp(0, t) = ramp(1, t) = static_cast<double>(t);
    const auto d = time_derivative(ramp);
    for (std::size_t t = 0; t < 6; ++t) CHECK(d(1, t) == (t == 0 ? 0.0 : 1.0));

    fixtures::Rng rng(21);
    Waveform w;
    for (int i = 0; i < 24000; ++i) w.samples.push_back(fixtures::uniform(rng, -0.5, 0.5) * std::sin(i * 0.001));
    const auto s = compute_frontend(w, {});
    for (std::size_t m = 0; m < s.x.rows(); ++m) {
      double acc = s.x(m, 0);
      bool exact = true;
      for (std::size_t t = 1; t < s.x.cols(); ++t) {
        acc += s.dx(m, t);
        exact &= acc == s.x(m, t);
      }
      CHECK(exact);
    }
  }

  TEST_CASE("frontend frame count matches the roll frame count") {
    for (const char* name : {"ov-2023", "of-2017"}) {
      const auto cfg = FrontendConfig::preset(name);
      for (int len : {1, 383, 384, 16000, 16001, 40000}) {
        Waveform w;
        w.samples.assign(static_cast<std::size_t>(len), 0.1);
        const double d = static_cast<double>(len) / 16000;
        CHECK(compute_frontend(w, cfg).num_frames() == frames_for_duration(d, cfg.frame_seconds()));
      }
    }
    CHECK_THROWS_AS(FrontendConfig::preset("nope"), InvalidParam);
  }

  TEST_CASE("log-mel is translation covariant by whole hops") {
    FrontendConfig cfg;
    fixtures::Rng rng(2);
    Waveform a;
    for (int i = 0; i < 20000; ++i) a.samples.push_back(fixtures::uniform(rng, -0.5, 0.5));
    const std::size_t k = 3;
    Waveform b;
    b.samples.assign(k * 384, 0.0);
    b.samples.insert(b.samples.end(), a.samples.begin(), a.samples.end());
    const auto xa = log_mel(a, cfg);
    const auto xb = log_mel(b, cfg);
    double worst = 0;
    for (std::size_t t = 0; t < xa.cols(); ++t) {
      if (!interior(t, a.samples.size(), cfg)) continue;
      for (std::size_t m = 0; m < xa.rows(); ++m) worst = std::max(worst, std::abs(xa(m, t) - xb(m, t + k)));
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("results do not depend on the thread count") {
    const auto w = fixtures::render([] {
      NoteSequence s;
      s.notes = {{60, 0.1, 0.8, 0.6}, {67, 0.3, 1.2, 0.4}};
      s.normalize();
      return s;
    }());
    const auto one = compute_frontend(w, {}, 1);
    for (int t : {2, 4, 8}) {
      const auto many = compute_frontend(w, {}, t);
      CHECK(many.x == one.x);
      CHECK(many.dx == one.dx);
    }
  }

  TEST_CASE("spectro file round trip") {
    const auto s = compute_frontend(fixtures::sine(300.0, 0.5), {});
    const auto back = decode_spectro(encode_spectro(s));
    REQUIRE(back.x.same_shape(s.x));
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      CHECK(back.x.data()[i] == static_cast<double>(static_cast<float>(s.x.data()[i])));
      CHECK(back.dx.data()[i] == static_cast<double>(static_cast<float>(s.dx.data()[i])));
    }
  }

  TEST_CASE("wav: pcm16, float, stereo, extensible, unsupported") {
    const auto mono = read_wav(wav_bytes(1, 1, 16000, 16, pcm16_payload({0, 16384, -32768, 32767})));
    CHECK(mono.sample_rate == 16000);
    REQUIRE(mono.samples.size() == 4);
    CHECK(mono.samples[1] == 0.5);
    CHECK(mono.samples[2] == -1.0);
    CHECK(mono.samples[3] == 32767.0 / 32768);
    // Already at the model rate: resampling is a pass-through.
    CHECK(resample(mono, 16000).samples == mono.samples);

    const auto stereo = read_wav(wav_bytes(1, 2, 16000, 16, pcm16_payload({16384, 0, -8192, -8192})));
    REQUIRE(stereo.samples.size() == 2);
    CHECK(stereo.samples[0] == 0.25);
    CHECK(stereo.samples[1] == -0.25);

    std::vector<std::uint8_t> fp;
    for (float f : {0.125f, -0.75f}) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      le(fp, u, 4);
    }
    const auto fw = read_wav(wav_bytes(3, 1, 22050, 32, fp));
    CHECK(fw.sample_rate == 22050);
    CHECK(fw.samples == std::vector<double>{0.125, -0.75});
    CHECK(read_wav(wav_bytes(3, 1, 22050, 32, fp, true)).samples == fw.samples);
    CHECK(read_wav(wav_bytes(1, 1, 16000, 16, pcm16_payload({16384}), true)).samples[0] == 0.5);

    CHECK_THROWS_AS(read_wav(wav_bytes(2, 1, 16000, 4, {0, 0})), UnsupportedFormat);  // ADPCM
    CHECK_THROWS_AS(read_wav(wav_bytes(1, 1, 16000, 24, {0, 0, 0})), UnsupportedFormat);
    std::vector<std::uint8_t> junk = {'R', 'I', 'F', 'F', 0, 0, 0, 0, 'A', 'V', 'I', ' '};
    CHECK_THROWS_AS(read_wav(junk), UnsupportedFormat);

    Waveform w = fixtures::sine(440.0, 0.1);
    const auto back = read_wav(write_wav(w, WavEncoding::Float32));
    REQUIRE(back.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      CHECK(back.samples[i] == static_cast<double>(static_cast<float>(w.samples[i])));
    const auto back16 = read_wav(write_wav(w, WavEncoding::Pcm16));
    CHECK(fixtures::rms_difference(back16.samples, w.samples) < 1.0 / 32768);
  }

  TEST_CASE("48 kHz sine resamples to 16 kHz with the peak kept") {
    const auto hi = fixtures::sine(440.0, 1.0, 0.5, 48000);
    const auto lo = resample(hi, 16000);
    CHECK(lo.sample_rate == 16000);
    CHECK(lo.samples.size() == 16000);
    CHECK(std::abs(fixtures::dominant_frequency(lo.samples, 16000) - 440.0) < 16000.0 / 2048);
    // Away from the edges the waveform itself matches the analytic sine.
    const auto ref = fixtures::sine(440.0, 1.0, 0.5, 16000);
    const std::span<const double> a(lo.samples.data() + 1000, 14000), b(ref.samples.data() + 1000, 14000);
    CHECK(fixtures::rms_difference(a, b) < 1e-3);
  }
}
