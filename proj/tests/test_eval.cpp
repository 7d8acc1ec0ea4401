#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "amt/error.hpp"
#include "amt/eval.hpp"
#include "amt/fixtures.hpp"
#include "doctest.h"

using namespace amt;

namespace {

ScorePrediction score(std::vector<ScoreEvent> ev) {
  std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) { return a.time != b.time ? a.time < b.time : a.pitch < b.pitch; });
  return {std::move(ev)};
}

bool compatible(const ScoreEvent& r, const ScoreEvent& e, const MatchConfig& cfg) {
  if (cfg.require_pitch_equal && r.pitch != e.pitch) return false;
  if (std::abs(r.time - e.time) > cfg.onset_tolerance + 1e-9) return false;
  if (cfg.require_velocity && std::abs(r.velocity - e.velocity) > cfg.velocity_tolerance + 1e-9) return false;
  return true;
}

// Every matching by recursion over refs: best size, then smallest total distance.
std::pair<std::size_t, double> exhaustive(const ScorePrediction& ref, const ScorePrediction& est, const MatchConfig& cfg) {
  std::pair<std::size_t, double> best{0, 0.0};
  std::vector<bool> used(est.events.size());
  std::function<void(std::size_t, std::size_t, double)> go = [&](std::size_t i, std::size_t n, double dist) {
    if (i == ref.events.size()) {
      if (n > best.first || (n == best.first && dist < best.second - 1e-12)) best = {n, dist};
      return;
    }
    go(i + 1, n, dist);
    for (std::size_t j = 0; j < est.events.size(); ++j) {
      if (used[j] || !compatible(ref.events[i], est.events[j], cfg)) continue;
      used[j] = true;
      go(i + 1, n + 1, dist + std::abs(ref.events[i].time - est.events[j].time));
      used[j] = false;
    }
  };
  go(0, 0, 0.0);
  return best;
}

ScorePrediction random_score(fixtures::Rng& rng, int n) {
  std::vector<ScoreEvent> ev;
  for (int i = 0; i < n; ++i)
    ev.push_back({fixtures::uniform_int(rng, 60, 62), fixtures::uniform_int(rng, 0, 10) / 10.0,
                  fixtures::uniform_int(rng, 0, 20) * 0.01});
  return score(ev);
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("matching examples") {
    const auto a = score({{60, 0.5, 1.0}, {62, 0.5, 1.5}, {64, 0.5, 2.0}});
    CHECK(match_notes(a, a, {}).size() == 3);
    CHECK(match_notes(score({{60, 0.5, 1.000}}), score({{60, 0.5, 1.060}}), {}).empty());
    CHECK(match_notes(score({{60, 0.5, 1.00}}), score({{60, 0.5, 1.05}}), {}).size() == 1);  // inclusive
    CHECK(match_notes(score({{60, 0.5, 1.00}}), score({{61, 0.5, 1.00}}), {}).empty());

    const auto two = score({{60, 0.5, 0.00}, {60, 0.5, 0.04}});
    const auto one = score({{60, 0.5, 0.02}});
    CHECK(match_notes(two, one, {}).size() == 1);
    CHECK(exhaustive(two, one, {}).first == 1);
  }

  TEST_CASE("matching is maximal with minimal distance against an exhaustive oracle") {
    fixtures::Rng rng(1);
    for (int i = 0; i < 300; ++i) {
      const auto ref = random_score(rng, fixtures::uniform_int(rng, 0, 7));
      const auto est = random_score(rng, fixtures::uniform_int(rng, 0, 7));
      MatchConfig cfg;
      cfg.onset_tolerance = 0.03;
      cfg.require_velocity = fixtures::uniform_int(rng, 0, 1) == 1;
      const auto m = match_notes(ref, est, cfg);
      const auto best = exhaustive(ref, est, cfg);
      CHECK(m.size() == best.first);
      double dist = 0;
      std::vector<int> seen_ref(ref.events.size()), seen_est(est.events.size());
      bool valid = true;
      for (auto [r, e] : m) {
        valid &= compatible(ref.events[r], est.events[e], cfg);
        valid &= ++seen_ref[r] == 1 && ++seen_est[e] == 1;
        dist += std::abs(ref.events[r].time - est.events[e].time);
      }
      CHECK(valid);
      CHECK(dist == doctest::Approx(best.second).epsilon(1e-9).scale(1));
      CHECK(m.size() <= std::min(ref.events.size(), est.events.size()));
    }
  }

  TEST_CASE("prf arithmetic and degenerate cases") {
    const auto p = prf(9, 12, 10);
    CHECK(p.precision == doctest::Approx(0.9));
    CHECK(p.recall == doctest::Approx(0.75));
    CHECK(p.f1 == doctest::Approx(2 * 0.9 * 0.75 / 1.65));
    CHECK(p.f1 == doctest::Approx(0.8182).epsilon(1e-4));

    const auto perfect = prf(5, 5, 5);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    const auto empty_est = prf(0, 4, 0);
    CHECK(empty_est.precision == 0.0);
    CHECK(empty_est.precision_undefined);
    CHECK(empty_est.recall == 0.0);
    CHECK_FALSE(empty_est.recall_undefined);
    CHECK(empty_est.f1 == 0.0);

    const auto empty_ref = prf(0, 0, 3);
    CHECK(empty_ref.recall_undefined);
    CHECK(empty_ref.f1 == 0.0);
  }

  TEST_CASE("duality and tolerance monotonicity") {
    fixtures::Rng rng(2);
    for (int i = 0; i < 200; ++i) {
      const auto a = random_score(rng, fixtures::uniform_int(rng, 1, 8));
      const auto b = random_score(rng, fixtures::uniform_int(rng, 1, 8));
      const auto ab = onset_eval(a, b, {});
      const auto ba = onset_eval(b, a, {});
      CHECK(ab.precision == ba.recall);
      CHECK(ab.recall == ba.precision);

      MatchConfig tight;
      tight.onset_tolerance = 0.02;
      CHECK(onset_eval(a, b, tight).matched <= ab.matched);
      CHECK(onset_velocity_eval(a, b, {}).matched <= ab.matched);
      MatchConfig vtight;
      vtight.velocity_tolerance = 0.05;
      CHECK(onset_velocity_eval(a, b, vtight).matched <= onset_velocity_eval(a, b, {}).matched);
    }
  }

  TEST_CASE("velocity window") {
    const auto ref = score({{60, 0.5, 1.0}});
    CHECK(onset_velocity_eval(ref, score({{60, 0.65, 1.0}}), {}).matched == 0);
    CHECK(onset_velocity_eval(ref, score({{60, 0.6, 1.0}}), {}).matched == 1);
    CHECK(onset_velocity_eval(ref, score({{60, 0.4, 1.0}}), {}).matched == 1);
    fixtures::Rng rng(3);
    const auto a = random_score(rng, 8);
    CHECK(onset_velocity_eval(a, a, {}).f1 == onset_eval(a, a, {}).f1);
  }

  TEST_CASE("alignment statistics") {
    const auto a = score({{60, 0.5, 0.1}, {62, 0.5, 0.5}});
    const auto same = alignment_stats(a, a, {});
    CHECK(same.error_rate == 0.0);
    CHECK(same.substitutions == 0.0);

    const auto none = alignment_stats(a, ScorePrediction{}, {});
    CHECK(none.deletions == 1.0);
    CHECK(none.insertions == 0.0);
    CHECK(none.substitutions == 0.0);
    CHECK(none.error_rate == 1.0);

    const auto undefined = alignment_stats(ScorePrediction{}, a, {});
    CHECK(undefined.undefined);
    CHECK(std::isnan(undefined.error_rate));

    // 100 reference notes 0.2 s apart: drop 5, add 2 far from any note, shift 1 pitch.
    std::vector<ScoreEvent> ref, est;
    for (int i = 0; i < 100; ++i) ref.push_back({40 + i % 40, 0.5, 0.2 * i});
    for (int i = 0; i < 100; ++i) {
      if (i % 20 == 3) continue;
      ScoreEvent e = ref[static_cast<std::size_t>(i)];
      if (i == 50) e.pitch += 1;
      est.push_back(e);
    }
    est.push_back({70, 0.5, 0.2 * 10 + 0.1});
    est.push_back({71, 0.5, 0.2 * 60 + 0.1});
    const auto s = alignment_stats(score(ref), score(est), {});
    CHECK(s.deletion_count == 5);
    CHECK(s.insertion_count == 2);
    CHECK(s.substitution_count == 1);
    CHECK(s.deletions == doctest::Approx(0.05));
    CHECK(s.insertions == doctest::Approx(0.02));
    CHECK(s.substitutions == doctest::Approx(0.01));
    CHECK(s.error_rate == doctest::Approx(0.08));
    CHECK(s.error_rate == s.substitutions + s.deletions + s.insertions);
  }

  TEST_CASE("corpus medians") {
    CHECK(median({0.2, 0.0, 0.1}) == 0.1);
    CHECK(median({1, 2, 3, 4}) == 2.5);

    AlignmentStats p;
    p.substitutions = 0.01;
    p.deletions = 0.02;
    p.insertions = 0.03;
    p.error_rate = 0.06;
    p.ref_count = 10;
    const auto one = corpus_aggregate(std::vector<AlignmentStats>{p});
    CHECK(one.at("S").median == 0.01);
    CHECK(one.at("ER").median == 0.06);
    CHECK(one.at("ER").count == 1);

    std::vector<AlignmentStats> three(3);
    for (int i = 0; i < 3; ++i) three[static_cast<std::size_t>(i)].error_rate = 0.1 * i;
    CHECK(corpus_aggregate(three).at("ER").median == doctest::Approx(0.1));
    CHECK(corpus_aggregate(three).at("ER").mean == doctest::Approx(0.1));
  }

  TEST_CASE("median of per-piece error rates differs from the sum of component medians") {
    // Ten reference notes per piece; each piece has one kind of error only.
    std::vector<ScoreEvent> ref;
    for (int i = 0; i < 10; ++i) ref.push_back({60 + i, 0.5, 0.3 * i});
    std::vector<ScoreEvent> subs = ref, dels(ref.begin() + 3, ref.end()), ins = ref;
    for (int i = 0; i < 3; ++i) subs[static_cast<std::size_t>(i)].pitch += 12;
    for (int i = 0; i < 3; ++i) ins.push_back({90, 0.5, 0.3 * i + 0.15});
    std::vector<AlignmentStats> pieces = {alignment_stats(score(ref), score(subs), {}),
                                          alignment_stats(score(ref), score(dels), {}),
                                          alignment_stats(score(ref), score(ins), {})};
    for (const auto& p : pieces) CHECK(p.error_rate == doctest::Approx(0.3));
    const auto c = corpus_aggregate(pieces);
    CHECK(c.at("S").median == 0.0);
    CHECK(c.at("D").median == 0.0);
    CHECK(c.at("I").median == 0.0);
    CHECK(c.at("ER").median == doctest::Approx(0.3));
  }

  TEST_CASE("report aggregation skips undefined values") {
    std::vector<EvalReport> r = {prf(1, 2, 2), prf(0, 3, 0), prf(2, 2, 2)};
    const auto c = corpus_aggregate(r);
    CHECK(c.at("precision").count == 2);
    CHECK(c.at("recall").count == 3);
    CHECK(c.at("recall").median == 0.5);
    MatchConfig bad;
    bad.onset_tolerance = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidParam);
  }
}
