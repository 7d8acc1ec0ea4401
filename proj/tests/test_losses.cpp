#include <cmath>
#include <numbers>

#include "amt/error.hpp"
#include "amt/fixtures.hpp"
#include "amt/losses.hpp"
#include "doctest.h"

using namespace amt;

namespace {

Matrix random_matrix(fixtures::Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  Matrix m(r, c);
  for (double& v : m.data()) v = fixtures::uniform(rng, lo, hi);
  return m;
}

Matrix random_binary(fixtures::Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data()) v = fixtures::uniform_int(rng, 0, 1);
  return m;
}

// Elementwise cross-entropy of one cell, clamped.
double ce(double p, double y, double eps) {
  p = std::clamp(p, eps, 1 - eps);
  return -(y * std::log(p) + (1 - y) * std::log(1 - p));
}

double oracle(const Matrix& p, const Matrix& y, const Matrix* w, const Matrix* mask, double eps) {
  long double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mask && mask->data()[i] == 0) continue;
    s += (w ? w->data()[i] : 1.0) * ce(p.data()[i], y.data()[i], eps);
  }
  return static_cast<double>(s);
}

LossLabels random_labels(fixtures::Rng& rng, std::size_t r, std::size_t c) {
  LossLabels l;
  l.onset = random_binary(rng, r, c);
  l.frames = random_binary(rng, r, c);
  l.frame_weights = Matrix(r, c, 1.0);
  for (double& v : l.frame_weights.data()) v = fixtures::uniform_int(rng, 0, 2) == 0 ? 2.0 : 1.0;
  l.onset3 = random_binary(rng, r, c);
  l.velocity3 = random_matrix(rng, r, c, 0, 1);
  return l;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("bce examples and oracle") {
    const double eps = 1e-7;
    CHECK(bce(Matrix(1, 1, 0.5), Matrix(1, 1, 1.0), eps) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));

    fixtures::Rng rng(1);
    const auto t = random_binary(rng, 88, 20);
    CHECK(bce(t, t, eps) <= 88 * 20 * -std::log1p(-eps) * (1 + 1e-9));

    const auto p = random_matrix(rng, 4, 4, 0, 1);
    const auto y = random_matrix(rng, 4, 4, 0, 1);
    CHECK(bce(p, y, eps) == doctest::Approx(oracle(p, y, nullptr, nullptr, eps)).epsilon(1e-13));
    CHECK_THROWS_AS(bce(p, Matrix(4, 5), eps), ShapeError);
  }

  TEST_CASE("onset loss against truncated labels") {
    LossConfig cfg;
    RollConfig roll;
    roll.num_frames = 30;
    NoteSequence s;
    s.notes = {{60, 0.1, 0.5, 0.5}};
    s.normalize();
    const auto labels = make_labels(s, roll, cfg);
    // 32 ms from 0.1 s: frames round(0.1/0.024)=4 up to round(0.132/0.024)=6, exclusive.
    double lit = 0;
    for (double v : labels.onset.data()) lit += v;
    CHECK(lit == 2.0);
    CHECK(labels.onset(39, 4) == 1.0);
    CHECK(labels.onset(39, 5) == 1.0);

    CHECK(onset_loss(labels.onset, s, roll, cfg) / static_cast<double>(labels.onset.size()) < 1e-4);
    CHECK(onset_loss(Matrix(88, 30, 0.5), s, roll, cfg) == doctest::Approx(88 * 30 * std::numbers::ln2));

    fixtures::Rng rng(2);
    const auto p = random_matrix(rng, 88, 30, 0.01, 0.99);
    CHECK(onset_loss(p, s, roll, cfg) == doctest::Approx(oracle(p, labels.onset, nullptr, nullptr, cfg.eps)).epsilon(1e-12));
  }

  TEST_CASE("frame weighting: w = 1 is raw, and the two-frame hand computation") {
    LossConfig cfg;
    cfg.completion_frames = 2;
    RollConfig roll;
    roll.num_frames = 12;
    NoteSequence s;
    s.notes = {{60, 0.048, 0.240, 0.5}};  // frames 2..9
    s.normalize();
    const auto labels = make_labels(s, roll, cfg);
    for (std::size_t t = 0; t < 12; ++t) CHECK(labels.frames(39, t) == (t >= 2 && t <= 9 ? 1.0 : 0.0));
    for (std::size_t t = 0; t < 12; ++t) CHECK(labels.frame_weights(39, t) == (t == 2 || t == 3 ? 2.0 : 1.0));

    fixtures::Rng rng(3);
    const auto p = random_matrix(rng, 88, 12, 0.01, 0.99);
    const double raw = frame_loss(p, labels.frames, cfg);
    const double weighted = frame_loss_weighted(p, labels.frames, labels.frame_weights, cfg);
    const double extra = ce(p(39, 2), 1, cfg.eps) + ce(p(39, 3), 1, cfg.eps);
    CHECK(weighted == doctest::Approx(raw + extra).epsilon(1e-13));
    CHECK(frame_loss_weighted(p, labels.frames, Matrix(88, 12, 1.0), cfg) == raw);

    LossConfig unit = cfg;
    unit.frame_weight = 1.0;
    CHECK(frame_loss_weighted(p, labels.frames, frame_weight_roll(s, roll, unit), unit) == raw);

    CHECK(frame_loss(Matrix(88, 12, cfg.eps), Matrix(88, 12), cfg) < 1e-3);
  }

  TEST_CASE("total loss is exactly additive and monotone away from the target") {
    LossConfig cfg;
    fixtures::Rng rng(4);
    const auto labels = random_labels(rng, 8, 8);
    const auto po = random_matrix(rng, 8, 8, 0.02, 0.98);
    const auto pf = random_matrix(rng, 8, 8, 0.02, 0.98);
    for (bool weighted : {false, true}) {
      const auto t = total_loss(po, pf, labels, cfg, weighted);
      CHECK(t.total == t.onset + t.frame);
      CHECK(t.onset == onset_loss(po, labels.onset, cfg));
    }
    // Perfect onset prediction leaves only the frame part (up to eps terms).
    const auto t0 = total_loss(labels.onset, pf, labels, cfg, false);
    CHECK(t0.total - t0.frame <= 64 * -std::log1p(-cfg.eps) * (1 + 1e-9));

    for (int trial = 0; trial < 200; ++trial) {
      auto p2 = pf;
      const std::size_t cell = static_cast<std::size_t>(fixtures::uniform_int(rng, 0, 63));
      const double y = labels.frames.data()[cell];
      const double before = total_loss(po, p2, labels, cfg, true).total;
      const double step = fixtures::uniform(rng, 0, 0.5);
      p2.data()[cell] = y == 1 ? std::max(0.0, p2.data()[cell] - step) : std::min(1.0, p2.data()[cell] + step);
      CHECK(total_loss(po, p2, labels, cfg, true).total >= before);
    }
  }

  TEST_CASE("masked velocity loss") {
    LossConfig cfg;
    fixtures::Rng rng(5);
    const auto pv = random_matrix(rng, 6, 6, 0, 1);
    const auto v3 = random_matrix(rng, 6, 6, 0, 1);
    CHECK(velocity_masked_loss(pv, v3, Matrix(6, 6), cfg) == 0.0);

    Matrix one(1, 1, 1.0);
    CHECK(velocity_masked_loss(Matrix(1, 1, 0.5), Matrix(1, 1, 0.5), one, cfg) ==
          doctest::Approx(std::numbers::ln2).epsilon(1e-15));

    const auto mask = random_binary(rng, 6, 6);
    const double l = velocity_masked_loss(pv, v3, mask, cfg);
    CHECK(l == doctest::Approx(oracle(pv, v3, nullptr, &mask, cfg.eps)).epsilon(1e-13));
    // Cells outside the mask do not matter.
    auto pv2 = pv;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask.data()[i] == 0) pv2.data()[i] = fixtures::uniform(rng, 0, 1);
    CHECK(velocity_masked_loss(pv2, v3, mask, cfg) == l);
  }

  TEST_CASE("multitask loss: additivity and linearity in lambda") {
    LossConfig cfg;
    fixtures::Rng rng(6);
    const auto labels = random_labels(rng, 8, 8);
    const auto stage = random_matrix(rng, 8, 8, 0.05, 0.95);
    const auto pv = random_matrix(rng, 8, 8, 0.05, 0.95);
    const auto m = multitask_loss({stage, stage, stage}, pv, labels, cfg);
    REQUIRE(m.stages.size() == 3);
    CHECK(m.stages[0] == m.stages[1]);
    CHECK(m.stages[1] == m.stages[2]);
    CHECK(m.total == doctest::Approx(3 * m.stages[0] + m.velocity).epsilon(1e-15));

    LossConfig twice = cfg;
    twice.lambda = 2.0;
    const auto m2 = multitask_loss({stage, stage, stage}, pv, labels, twice);
    CHECK(m2.velocity == m.velocity);
    CHECK(m2.total - m.total == doctest::Approx(m.velocity).epsilon(1e-12));

    LossConfig none = cfg;
    none.lambda = 0.0;
    const auto perfect = multitask_loss({labels.onset3, labels.onset3, labels.onset3}, pv, labels, none);
    CHECK(perfect.total < 64 * 3 * 1e-6);
  }

  TEST_CASE("gradients match central differences for every loss") {
    LossConfig cfg;
    fixtures::Rng rng(7);
    const auto labels = random_labels(rng, 8, 8);
    const double h = 1e-5;
    for (auto kind : {LossKind::Onset, LossKind::FrameRaw, LossKind::FrameWeighted, LossKind::Total,
                      LossKind::TotalWeighted, LossKind::VelocityMasked, LossKind::Multitask}) {
      const std::size_t n = kind == LossKind::Multitask ? 4 : (kind == LossKind::Total || kind == LossKind::TotalWeighted) ? 2 : 1;
      std::vector<Matrix> preds;
      for (std::size_t i = 0; i < n; ++i) preds.push_back(random_matrix(rng, 8, 8, 0.05, 0.95));
      const auto grad = loss_gradient(kind, preds, labels, cfg);
      REQUIRE(grad.size() == n);
      double worst = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 64; ++c) {
          auto up = preds, down = preds;
          up[i].data()[c] += h;
          down[i].data()[c] -= h;
          const double fd = (evaluate_loss(kind, up, labels, cfg) - evaluate_loss(kind, down, labels, cfg)) / (2 * h);
          const double a = grad[i].data()[c];
          worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3}));
        }
      INFO(to_string(kind));
      CHECK(worst < 1e-4);
    }
  }

  TEST_CASE("gradient special cells") {
    LossConfig cfg;
    Matrix half(1, 1, 0.5);
    LossLabels l;
    l.onset = half;
    l.frames = half;
    l.frame_weights = Matrix(1, 1, 1.0);
    l.onset3 = Matrix(1, 1, 1.0);
    l.velocity3 = half;
    CHECK(loss_gradient(LossKind::Onset, {half}, l, cfg)[0](0, 0) == 0.0);
    CHECK(loss_gradient(LossKind::VelocityMasked, {half}, l, cfg)[0](0, 0) == 0.0);

    // Clamped cells get zero.
    CHECK(loss_gradient(LossKind::Onset, {Matrix(1, 1, 0.0)}, l, cfg)[0](0, 0) == 0.0);
    // Masked cells get exactly zero.
    l.onset3 = Matrix(1, 1, 0.0);
    CHECK(loss_gradient(LossKind::VelocityMasked, {Matrix(1, 1, 0.3)}, l, cfg)[0](0, 0) == 0.0);
    // Sign: below a positive target the loss falls as the prediction rises.
    l.onset = Matrix(1, 1, 1.0);
    CHECK(loss_gradient(LossKind::Onset, {Matrix(1, 1, 0.3)}, l, cfg)[0](0, 0) < 0.0);
  }

  TEST_CASE("loss kinds and config validation") {
    for (const char* name : {"onset", "frame", "frame-weighted", "total", "total-weighted", "velocity", "multitask"})
      CHECK(std::string(to_string(loss_kind_from_string(name))) == name);
    CHECK_THROWS_AS(loss_kind_from_string("hinge"), InvalidParam);
    LossConfig bad;
    bad.eps = 0.2;
    CHECK_THROWS_AS(bad.validate(), InvalidParam);
    bad = {};
    bad.frame_weight = 0.5;
    CHECK_THROWS_AS(bad.validate(), InvalidParam);
    bad = {};
    bad.lambda = -1;
    CHECK_THROWS_AS(bad.validate(), InvalidParam);
    fixtures::Rng rng(8);
    CHECK_THROWS_AS(evaluate_loss(LossKind::Total, {Matrix(8, 8, 0.5)}, random_labels(rng, 8, 8), {}), InvalidParam);
  }
}
