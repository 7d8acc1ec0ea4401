#include <cmath>
#include <cstdlib>

#include "amt/augment.hpp"
#include "amt/error.hpp"
#include "amt/fixtures.hpp"
#include "doctest.h"

using namespace amt;

namespace {

double peak(const Waveform& w) {
  // Skip the edges, where the vocoder ramps in and out.
  const std::size_t skip = w.samples.size() / 8;
  return fixtures::dominant_frequency(std::span<const double>(w.samples).subspan(skip, w.samples.size() - 2 * skip),
                                      w.sample_rate);
}

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("unit factors are the identity") {
    fixtures::Rng rng(1);
    Waveform w;
    for (int i = 0; i < 12000; ++i) w.samples.push_back(fixtures::uniform(rng, -0.5, 0.5));
    CHECK(fixtures::rms_difference(time_stretch(w, 1.0).samples, w.samples) < 1e-6);
    CHECK(fixtures::rms_difference(pitch_shift(w, 1.0).samples, w.samples) < 1e-6);
  }

  TEST_CASE("stretch scales duration and keeps pitch") {
    const auto w = fixtures::sine(440.0, 1.0);
    for (double alpha : {2.0, 0.5, 1.3}) {
      const auto y = time_stretch(w, alpha);
      CHECK(std::abs(static_cast<double>(y.samples.size()) - alpha * 16000) <= 1.0);
      CHECK(std::abs(peak(y) - 440.0) < 4.4);
    }
    CHECK_THROWS_AS(time_stretch(w, 0.0), InvalidParam);
    CHECK_THROWS_AS(time_stretch(w, -1.0), InvalidParam);
  }

  TEST_CASE("shift scales frequency and keeps duration") {
    const auto w = fixtures::sine(440.0, 1.0);
    const struct {
      double beta, expect;
    } cases[] = {{2.0, 880.0}, {std::exp2(1.0 / 12), 440.0 * std::exp2(1.0 / 12)}, {0.75, 330.0}};
    for (const auto& c : cases) {
      const auto y = pitch_shift(w, c.beta);
      CHECK(std::abs(static_cast<double>(y.samples.size()) - 16000.0) <= 1.0);
      CHECK(std::abs(peak(y) - c.expect) < 0.01 * c.expect);
    }
    CHECK(440.0 * std::exp2(1.0 / 12) == doctest::Approx(466.164).epsilon(1e-5));
    CHECK_THROWS_AS(pitch_shift(w, 0.0), InvalidParam);
  }

  TEST_CASE("stretch there and back keeps duration and loudness") {
    const auto w = fixtures::render([] {
      NoteSequence s;
      s.notes = {{57, 0.05, 0.6, 0.7}, {64, 0.3, 1.0, 0.5}, {69, 0.5, 1.1, 0.6}};
      s.normalize();
      return s;
    }());
    for (double a : {1.5, 0.8}) {
      const auto back = time_stretch(time_stretch(w, a), 1.0 / a);
      CHECK(back.samples.size() == w.samples.size());
      CHECK(std::abs(fixtures::rms(back.samples) / fixtures::rms(w.samples) - 1.0) < 0.10);
    }
  }

  TEST_CASE("label edits follow the audio edits") {
    NoteSequence s;
    s.notes = {{60, 0.5, 1.0, 0.5}, {104, 1.0, 2.0, 0.7}, {22, 0.2, 0.4, 0.3}};
    s.pedals = {{0.1, true}, {1.5, false}};
    s.normalize();
    const auto w = fixtures::render(s);

    const auto same = augment_pair(w, s, {});
    CHECK(same.labels.notes == s.notes);
    CHECK(same.audio.samples == w.samples);

    const auto slow = augment_pair(w, s, {2.0, 1.0});
    REQUIRE(slow.labels.notes.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(slow.labels.notes[i].onset == 2 * s.notes[i].onset);
      CHECK(slow.labels.notes[i].offset == 2 * s.notes[i].offset);
    }
    CHECK(slow.labels.pedals[1].time == 3.0);

    const auto fifth = augment_pair(w, s, AugmentParams::from_semitones(1.0, 7));
    CHECK(fifth.dropped_notes == 1);  // 104 + 7 > 108
    REQUIRE(fifth.labels.notes.size() == 2);
    CHECK(fifth.labels.notes[0].pitch == 29);
    CHECK(fifth.labels.notes[1].pitch == 67);

    const auto down = augment_pair(w, s, AugmentParams::from_semitones(1.0, -2));
    CHECK(down.dropped_notes == 1);  // 22 - 2 < 21
    CHECK(down.labels.notes.size() == 2);

    CHECK_THROWS_AS(augment_pair(w, s, {3.0, 1.0}), InvalidParam);
    CHECK_THROWS_AS(augment_pair(w, s, {1.0, 0.4}), InvalidParam);
  }

  TEST_CASE("note count is kept when nothing leaves the piano range") {
    fixtures::Rng rng(12);
    Waveform silent;
    silent.samples.assign(1600, 0.0);
    for (int i = 0; i < 30; ++i) {
      auto s = fixtures::random_sequence(rng, {20, 5.0});
      for (auto& n : s.notes) n.pitch = std::clamp(n.pitch, 40, 90);
      s.normalize();
      const double semis = fixtures::uniform_int(rng, -12, 12);
      const auto r = augment_pair(silent, s, AugmentParams::from_semitones(fixtures::uniform(rng, 0.5, 2.0), semis));
      CHECK(r.dropped_notes == 0);
      CHECK(r.labels.notes.size() == s.notes.size());
    }
  }
}
