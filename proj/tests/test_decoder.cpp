#include <algorithm>
#include <set>

#include "amt/decoder.hpp"
#include "amt/error.hpp"
#include "amt/fixtures.hpp"
#include "amt/pianoroll.hpp"
#include "doctest.h"

using namespace amt;

namespace {

// exp(-k^2 / 2) for k = 0..3, written out.
constexpr double kTap[4] = {1.0, 0.6065306597126334, 0.1353352832366127, 0.011108996538242306};
constexpr double kTapSum = kTap[0] + 2 * (kTap[1] + kTap[2] + kTap[3]);

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.data().begin());
  return m;
}

}  // namespace

TEST_SUITE("decoder") {
  TEST_CASE("sigma 1 kernel is the normalized seven-tap table") {
    const auto k = gaussian_kernel(1.0);
    REQUIRE(k.size() == 7);
    for (int i = -3; i <= 3; ++i)
      CHECK(k[static_cast<std::size_t>(i + 3)] == doctest::Approx(kTap[std::abs(i)] / kTapSum).epsilon(1e-14));
    double s = 0;
    for (double v : k) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(gaussian_kernel(0.0) == std::vector<double>{1.0});
    CHECK(gaussian_kernel(0.5).size() == 5);  // ceil(1.5) = 2 taps per side
  }

  TEST_CASE("smoothing: identity at sigma 0, impulse response, constant rows") {
    fixtures::Rng rng(1);
    Matrix r(3, 20);
    for (double& v : r.data()) v = fixtures::uniform(rng, 0, 1);
    CHECK(gaussian_smooth(r, 0.0) == r);

    Matrix imp(1, 15);
    imp(0, 7) = 1.0;
    const auto s = gaussian_smooth(imp, 1.0);
    for (int t = 0; t < 15; ++t) {
      const int d = std::abs(t - 7);
      CHECK(s(0, static_cast<std::size_t>(t)) == doctest::Approx(d <= 3 ? kTap[d] / kTapSum : 0.0).epsilon(1e-14));
    }

    const auto c = gaussian_smooth(Matrix(1, 12, 0.8), 1.0);
    for (std::size_t t = 3; t < 9; ++t) CHECK(c(0, t) == doctest::Approx(0.8).epsilon(1e-14));
    // Column 0 sees only the center and right half of the kernel.
    CHECK(c(0, 0) == doctest::Approx(0.8 * (kTap[0] + kTap[1] + kTap[2] + kTap[3]) / kTapSum).epsilon(1e-14));
    CHECK(c(0, 1) == doctest::Approx(0.8 * (kTapSum - kTap[2] - kTap[3]) / kTapSum).epsilon(1e-14));
  }

  TEST_CASE("nms examples") {
    CHECK(nms(row({0.1, 0.9, 0.5, 0.9, 0.2})) == row({0, 0.9, 0, 0.9, 0}));
    CHECK(nms(row({0.1, 0.2, 0.3, 0.4})) == row({0, 0, 0, 0.4}));
    CHECK(nms(row({0.5, 0.5, 0.5})) == row({0.5, 0.5, 0.5}));
    CHECK(nms(row({0.7})) == row({0.7}));
    CHECK(nms(row({0.3, 0.8, 0.8, 0.1})) == row({0, 0.8, 0.8, 0}));
  }

  TEST_CASE("nms properties on random rows") {
    fixtures::Rng rng(2);
    for (int i = 0; i < 200; ++i) {
      Matrix m(4, static_cast<std::size_t>(fixtures::uniform_int(rng, 1, 30)));
      // Coarse values so ties and plateaus show up.
      for (double& v : m.data()) v = fixtures::uniform_int(rng, 0, 5) / 5.0;
      const auto once = nms(m);
      CHECK(nms(once) == once);
      bool never_up = true;
      for (std::size_t k = 0; k < m.size(); ++k)
        never_up &= once.data()[k] == 0.0 || once.data()[k] == m.data()[k];
      CHECK(never_up);
    }
  }

  TEST_CASE("picking: thresholds and the kernel arithmetic") {
    CHECK(pick_onsets(Matrix(88, 20), {}).empty());

    Matrix one(88, 20);
    one(5, 10) = 0.9;
    const auto direct = pick_onsets(one, {0.0, 0.74, 0.0});
    REQUIRE(direct.size() == 1);
    CHECK(direct[0] == std::pair<std::size_t, std::size_t>{5, 10});

    // Smoothed peak is 0.9 * k0 = 0.359..., below 0.74.
    CHECK(0.9 * kTap[0] / kTapSum < 0.74);
    CHECK(pick_onsets(one, {1.0, 0.74, 0.0}).empty());
    // Threshold exactly at the smoothed value is inclusive.
    const double smoothed = gaussian_smooth(one, 1.0)(5, 10);
    CHECK(pick_onsets(one, {1.0, smoothed, 0.0}).size() == 1);

    // A three-frame plateau at 1.0: k0 + 2 k1 = 0.883... survives.
    Matrix plateau(88, 20);
    for (std::size_t t = 9; t <= 11; ++t) plateau(5, t) = 1.0;
    CHECK((kTap[0] + 2 * kTap[1]) / kTapSum > 0.74);
    const auto picked = pick_onsets(plateau, {});
    REQUIRE(picked.size() == 1);
    CHECK(picked[0].second == 10);

    CHECK(pick_onsets(one, {0.0, 0.9, 0.0}).size() == 1);
    CHECK(pick_onsets(one, {0.0, 0.90001, 0.0}).empty());
  }

  TEST_CASE("picking is monotone in rho") {
    fixtures::Rng rng(3);
    Matrix r(88, 40);
    for (double& v : r.data()) v = fixtures::uniform(rng, 0, 1);
    std::vector<double> rhos = {0.1, 0.3, 0.5, 0.74, 0.9};
    for (double sigma : {0.0, 1.0}) {
      std::set<std::pair<std::size_t, std::size_t>> prev;
      bool first = true;
      for (double rho : rhos) {
        const auto p = pick_onsets(r, {sigma, rho, 0.0});
        const std::set<std::pair<std::size_t, std::size_t>> cur(p.begin(), p.end());
        if (!first) CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
        prev = cur;
        first = false;
      }
    }
  }

  TEST_CASE("decode examples") {
    CHECK(decode(Matrix(88, 20), Matrix(88, 20), {}, 0.024).events.empty());

    Matrix on(88, 20), vel(88, 20);
    on(39, 10) = 0.95;
    vel(39, 10) = 0.63;
    const auto s = decode(on, vel, {0.0, 0.74, -0.01}, 0.024);
    REQUIRE(s.events.size() == 1);
    CHECK(s.events[0].pitch == 60);
    CHECK(s.events[0].time == doctest::Approx(0.230).epsilon(1e-14));
    CHECK(s.events[0].velocity == 0.63);

    // First-frame onsets with a negative shift clamp to zero.
    Matrix early(88, 5);
    early(0, 0) = 1.0;
    const auto e = decode(early, early, {0.0, 0.74, -0.01}, 0.024);
    REQUIRE(e.events.size() == 1);
    CHECK(e.events[0].time == 0.0);

    CHECK_THROWS_AS(decode(on, Matrix(88, 19), {}, 0.024), ShapeError);
    DecoderParams bad;
    bad.rho = 1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidParam);
    bad = {};
    bad.sigma = -1;
    CHECK_THROWS_AS(bad.validate(), InvalidParam);
  }

  TEST_CASE("quantize then decode recovers onsets at sigma 0, mu 0") {
    fixtures::Rng rng(4);
    for (int i = 0; i < 50; ++i) {
      fixtures::SequenceShape shape;
      shape.same_pitch_gap = 0.1;  // distinct frames per key
      const auto seq = fixtures::random_sequence(rng, shape);
      const auto q = quantize(seq, {});
      const auto score = decode(q.onset.values, q.velocity.values, {0.0, 0.5, 0.0}, 0.024);
      REQUIRE(score.events.size() == seq.notes.size());
      std::vector<ScoreEvent> expect;
      for (const auto& n : seq.notes)
        expect.push_back({n.pitch, n.velocity, static_cast<double>(frame_index(n.onset, 0.024)) * 0.024});
      std::sort(expect.begin(), expect.end(),
                [](const auto& a, const auto& b) { return a.time != b.time ? a.time < b.time : a.pitch < b.pitch; });
      for (std::size_t k = 0; k < expect.size(); ++k) {
        CHECK(score.events[k].pitch == expect[k].pitch);
        CHECK(score.events[k].velocity == expect[k].velocity);
        CHECK(score.events[k].time == doctest::Approx(expect[k].time).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("score and note conversions") {
    ScorePrediction s;
    s.events = {{60, 0.5, 1.0}, {64, 0.25, 1.5}};
    const auto notes = score_to_notes(s, 0.1);
    REQUIRE(notes.notes.size() == 2);
    CHECK(notes.notes[1].offset == doctest::Approx(1.6));
    CHECK(notes_to_score(notes).events == s.events);
  }
}
