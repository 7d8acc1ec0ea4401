#include "amt/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "amt/augment.hpp"
#include "amt/dataset.hpp"
#include "amt/decoder.hpp"
#include "amt/dsp.hpp"
#include "amt/eval.hpp"
#include "amt/fixtures.hpp"
#include "amt/losses.hpp"
#include "amt/midi.hpp"
#include "amt/network.hpp"
#include "amt/pianoroll.hpp"
#include "amt/pipeline.hpp"

namespace amt::acceptance {

using fixtures::Rng;
using fixtures::uniform;
using fixtures::uniform_int;

namespace {

// Collects failures; a criterion passes when nothing was recorded.
class Check {
public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  bool ok() const { return failed_ == 0; }
  std::string detail() const {
    std::string s = std::to_string(checks_ - failed_) + "/" + std::to_string(checks_) + " checks";
    if (!notes_.empty()) s += "; " + notes_;
    for (const auto& f : failures_) s += "; FAIL " + f;
    return s;
  }

private:
  std::size_t checks_ = 0, failed_ = 0;
  std::vector<std::string> failures_;
  std::string notes_;
};

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = uniform(rng, lo, hi);
  return m;
}

Matrix random_binary(Rng& rng, std::size_t r, std::size_t c, double p = 0.3) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = uniform(rng, 0, 1) < p ? 1.0 : 0.0;
  return m;
}

LossLabels random_labels(Rng& rng, std::size_t r, std::size_t c, double w) {
  LossLabels l;
  l.onset = random_binary(rng, r, c);
  l.frames = random_binary(rng, r, c, 0.5);
  l.frame_weights = random_binary(rng, r, c, 0.3);
  for (auto& v : l.frame_weights.data()) v = v > 0 ? w : 1.0;
  l.onset3 = random_binary(rng, r, c, 0.4);
  l.velocity3 = random_matrix(rng, r, c, 0.0, 1.0);
  return l;
}

std::size_t num_preds(LossKind k) {
  switch (k) {
    case LossKind::Total:
    case LossKind::TotalWeighted: return 2;
    case LossKind::Multitask: return 4;
    default: return 1;
  }
}

constexpr LossKind kAllKinds[] = {LossKind::Onset,         LossKind::FrameRaw,       LossKind::FrameWeighted,
                                  LossKind::Total,         LossKind::TotalWeighted,  LossKind::VelocityMasked,
                                  LossKind::Multitask};

// ---------------------------------------------------------------------------

void loss_gradients(Check& c, std::uint64_t seed) {
  Rng rng(seed);
  const auto start = std::chrono::steady_clock::now();
  const double h = 1e-5;
  double worst = 0.0;
  for (int f = 0; f < 20; ++f) {
    LossConfig cfg;
    cfg.frame_weight = uniform(rng, 1.0, 4.0);
    cfg.lambda = uniform(rng, 0.0, 3.0);
    const auto labels = random_labels(rng, 8, 8, cfg.frame_weight);
    for (LossKind kind : kAllKinds) {
      std::vector<Matrix> preds;
      for (std::size_t i = 0; i < num_preds(kind); ++i) preds.push_back(random_matrix(rng, 8, 8, 0.05, 0.95));
      const auto grad = loss_gradient(kind, preds, labels, cfg);
      for (std::size_t i = 0; i < preds.size(); ++i) {
        for (std::size_t k = 0; k < preds[i].size(); ++k) {
          auto p = preds;
          const double x0 = p[i].data()[k];
          p[i].data()[k] = x0 + h;
          const double up = evaluate_loss(kind, p, labels, cfg);
          p[i].data()[k] = x0 - h;
          const double down = evaluate_loss(kind, p, labels, cfg);
          const double fd = (up - down) / (2 * h);
          const double an = grad[i].data()[k];
          const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
          worst = std::max(worst, rel);
        }
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.expect(worst < 1e-4, "max relative error " + fmt(worst));
  c.expect(secs < 10.0, "runtime " + fmt(secs) + " s");
  c.note("max rel err " + fmt(worst, "%.2e") + " over 7 losses x 20 fixtures, " + fmt(secs, "%.2f") + " s");
}

void loss_identities(Check& c, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t masked_cells = 0;
  for (int f = 0; f < 50; ++f) {
    LossConfig cfg;
    cfg.frame_weight = uniform(rng, 1.0, 4.0);
    const std::size_t rows = static_cast<std::size_t>(uniform_int(rng, 1, 12));
    const std::size_t cols = static_cast<std::size_t>(uniform_int(rng, 1, 12));
    const auto labels = random_labels(rng, rows, cols, cfg.frame_weight);
    const Matrix po = random_matrix(rng, rows, cols, 0.0, 1.0);
    const Matrix pf = random_matrix(rng, rows, cols, 0.0, 1.0);
    for (bool weighted : {false, true}) {
      const auto t = total_loss(po, pf, labels, cfg, weighted);
      const double onset = onset_loss(po, labels.onset, cfg);
      const double frame =
          weighted ? frame_loss_weighted(pf, labels.frames, labels.frame_weights, cfg) : frame_loss(pf, labels.frames, cfg);
      c.expect(t.onset == onset && t.frame == frame && t.total == onset + frame, "L_total additivity fixture " + std::to_string(f));
    }

    std::vector<Matrix> stages;
    for (int s = 0; s < 3; ++s) stages.push_back(random_matrix(rng, rows, cols, 0.0, 1.0));
    const Matrix rv = random_matrix(rng, rows, cols, 0.0, 1.0);
    cfg.lambda = 0.0;
    const auto base = multitask_loss(stages, rv, labels, cfg);
    const double lv = velocity_masked_loss(rv, labels.velocity3, labels.onset3, cfg);
    double stage_sum = 0.0;
    for (double s : base.stages) stage_sum += s;
    for (double lambda : {0.5, 1.0, 2.0, 3.75}) {
      cfg.lambda = lambda;
      const auto m = multitask_loss(stages, rv, labels, cfg);
      const double expected = stage_sum + lambda * lv;
      c.expect(m.stages == base.stages && m.velocity == lv &&
                   std::abs(m.total - expected) <= 1e-12 * std::max(1.0, std::abs(expected)),
               "L_oV lambda linearity fixture " + std::to_string(f));
      cfg.lambda = 2 * lambda;
      const auto m2 = multitask_loss(stages, rv, labels, cfg);
      c.expect(std::abs((m2.total - stage_sum) - 2 * (m.total - stage_sum)) <= 1e-12 * std::max(1.0, m2.total),
               "L_oV velocity term doubles");
    }

    // Masked cells: exactly zero gradient and no effect on L_V'.
    cfg.lambda = 1.0;
    const auto g = loss_gradient(LossKind::VelocityMasked, {rv}, labels, cfg);
    for (std::size_t k = 0; k < rv.size(); ++k) {
      if (labels.onset3.data()[k] != 0.0) continue;
      ++masked_cells;
      c.expect(g[0].data()[k] == 0.0, "masked gradient non-zero");
      Matrix moved = rv;
      moved.data()[k] = 1.0 - moved.data()[k];
      c.expect(velocity_masked_loss(moved, labels.velocity3, labels.onset3, cfg) == lv, "masked cell changes L_V'");
    }
  }
  c.note(std::to_string(masked_cells) + " masked cells checked");
}

// Spreads every nonzero cell over frames f-1..f+1 (a 1.0 plateau for onset rolls).
Matrix plateau_roll(const Matrix& onset) {
  Matrix out(onset.rows(), onset.cols());
  for (std::size_t k = 0; k < onset.rows(); ++k)
    for (std::size_t t = 0; t < onset.cols(); ++t)
      if (onset(k, t) > 0)
        for (std::size_t u = t > 0 ? t - 1 : 0; u <= std::min(onset.cols() - 1, t + 1); ++u)
          out(k, u) = std::max(out(k, u), onset(k, t));
  return out;
}

void decoder_roundtrip(Check& c, std::uint64_t seed) {
  Rng rng(seed);
  RollConfig rc;
  std::size_t isolated = 0, recovered = 0, exact_notes = 0;
  for (int f = 0; f < 100; ++f) {
    fixtures::SequenceShape shape;
    shape.same_pitch_gap = 0.025;  // one quantized onset per cell
    const auto seq = fixtures::random_sequence(rng, shape);
    const auto q = quantize(seq, rc);

    const auto exact = decode(q.onset.values, q.velocity.values, {0.0, 0.74, 0.0}, rc.delta_t);
    std::set<std::tuple<int, long, double>> got;
    for (const auto& e : exact.events) got.insert({e.pitch, std::lround(e.time / rc.delta_t), e.velocity});
    c.expect(exact.events.size() == seq.notes.size(), "sigma=0 event count fixture " + std::to_string(f));
    for (const auto& n : seq.notes) {
      ++exact_notes;
      c.expect(got.contains({n.pitch, frame_index(n.onset, rc.delta_t), n.velocity}),
               "sigma=0 missed pitch " + std::to_string(n.pitch) + " at " + fmt(n.onset));
    }

    const DecoderParams defaults;
    const Matrix smooth_in = plateau_roll(q.onset.values);
    const auto score = decode(smooth_in, plateau_roll(q.velocity.values), defaults, rc.delta_t);
    const double tol = rc.delta_t / 2 + std::abs(defaults.mu) + 1e-9;
    for (const auto& n : seq.notes) {
      const long fr = frame_index(n.onset, rc.delta_t);
      const bool alone = std::none_of(seq.notes.begin(), seq.notes.end(), [&](const NoteEvent& o) {
        return &o != &n && o.pitch == n.pitch && std::abs(frame_index(o.onset, rc.delta_t) - fr) < 3;
      });
      if (!alone) continue;
      ++isolated;
      if (std::any_of(score.events.begin(), score.events.end(), [&](const ScoreEvent& e) {
            return e.pitch == n.pitch && std::abs(e.time - n.onset) <= tol;
          }))
        ++recovered;
    }
  }
  const double rate = isolated ? static_cast<double>(recovered) / static_cast<double>(isolated) : 0.0;
  c.expect(isolated > 0 && rate >= 0.95, "sigma=1 recovery " + fmt(rate));
  c.note("sigma=0: " + std::to_string(exact_notes) + " notes; sigma=1: " + std::to_string(recovered) + "/" +
         std::to_string(isolated) + " isolated onsets recovered (" + fmt(100 * rate, "%.2f") + "%)");
}

std::vector<double> nms_oracle(const std::vector<double>& x) {
  std::vector<double> out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const bool left = t > 0 && x[t] < x[t - 1];
    const bool right = t + 1 < x.size() && x[t] < x[t + 1];
    out[t] = left || right ? 0.0 : x[t];
  }
  return out;
}

void nms_properties(Check& c, std::uint64_t seed) {
  Rng rng(seed);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 40));
    const bool coarse = i % 2 == 0;  // coarse values force plateaus
    Matrix row(1, n);
    for (auto& v : row.data()) v = coarse ? uniform_int(rng, 0, 4) / 4.0 : uniform(rng, 0, 1);
    const Matrix once = nms(row);
    c.expect(nms(once) == once, "idempotence row " + std::to_string(i));
    bool non_increase = true;
    for (std::size_t t = 0; t < n; ++t)
      non_increase &= once.data()[t] <= row.data()[t] && (row.data()[t] != 0.0 || once.data()[t] == 0.0);
    c.expect(non_increase, "non-increase row " + std::to_string(i));
    c.expect(once.data() == nms_oracle(row.data()), "oracle mismatch row " + std::to_string(i));
  }
}

// Exhaustive maximum matching by memoized enumeration over est subsets.
std::size_t brute_max_matching(const ScorePrediction& ref, const ScorePrediction& est, const MatchConfig& cfg) {
  auto ok = [&](std::size_t r, std::size_t e) {
    const auto& a = ref.events[r];
    const auto& b = est.events[e];
    return a.pitch == b.pitch && std::abs(a.time - b.time) <= cfg.onset_tolerance + kToleranceSlack &&
           (!cfg.require_velocity || std::abs(a.velocity - b.velocity) <= cfg.velocity_tolerance + kToleranceSlack);
  };
  std::map<std::pair<std::size_t, unsigned>, std::size_t> memo;
  std::function<std::size_t(std::size_t, unsigned)> go = [&](std::size_t r, unsigned used) -> std::size_t {
    if (r == ref.events.size()) return 0;
    auto key = std::make_pair(r, used);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = go(r + 1, used);
    for (std::size_t e = 0; e < est.events.size(); ++e)
      if (!(used >> e & 1u) && ok(r, e)) best = std::max(best, 1 + go(r + 1, used | 1u << e));
    return memo[key] = best;
  };
  return go(0, 0);
}

ScorePrediction random_score(Rng& rng, int max_n, double span) {
  ScorePrediction s;
  const int n = uniform_int(rng, 0, max_n);
  for (int i = 0; i < n; ++i)
    s.events.push_back({uniform_int(rng, 60, 62), uniform_int(rng, 0, 20) / 20.0, uniform(rng, 0.0, span)});
  std::sort(s.events.begin(), s.events.end(),
            [](const ScoreEvent& a, const ScoreEvent& b) { return std::tie(a.time, a.pitch) < std::tie(b.time, b.pitch); });
  return s;
}

void eval_oracle(Check& c, std::uint64_t seed) {
  Rng rng(seed);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 200; ++i) {
    const auto ref = random_score(rng, 10, 0.3);
    const auto est = random_score(rng, 10, 0.3);
    MatchConfig cfg;
    cfg.require_velocity = i % 2 == 1;
    const auto m = match_notes(ref, est, cfg);
    std::set<std::size_t> rs, es;
    bool valid = true;
    for (auto [r, e] : m) {
      valid &= rs.insert(r).second && es.insert(e).second;
      valid &= ref.events[r].pitch == est.events[e].pitch &&
               std::abs(ref.events[r].time - est.events[e].time) <= cfg.onset_tolerance + kToleranceSlack;
    }
    c.expect(valid, "invalid matching instance " + std::to_string(i));
    c.expect(m.size() == brute_max_matching(ref, est, cfg), "cardinality instance " + std::to_string(i));
  }

  auto one = [](double t, double v) { return ScorePrediction{{ScoreEvent{60, v, t}}}; };
  MatchConfig onset_only;
  MatchConfig with_velocity;
  with_velocity.require_velocity = true;
  c.expect(match_notes(one(1.000, 0.5), one(1.060, 0.5), onset_only).empty(), "60 ms must reject");
  c.expect(match_notes(one(1.000, 0.5), one(1.050, 0.5), onset_only).size() == 1, "50 ms must accept");
  c.expect(match_notes(one(1.000, 0.5), one(0.950, 0.5), onset_only).size() == 1, "-50 ms must accept");
  c.expect(match_notes(one(1.000, 0.5), one(1.000, 0.6), with_velocity).size() == 1, "velocity 0.1 must accept");
  c.expect(match_notes(one(1.000, 0.5), one(1.000, 0.61), with_velocity).empty(), "velocity 0.11 must reject");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.expect(secs < 30.0, "runtime " + fmt(secs));
  c.note("200 instances vs exhaustive oracle, " + fmt(secs, "%.2f") + " s");
}

void alignment_fixture(Check& c, std::uint64_t seed) {
  ScorePrediction ref, est;
  for (int i = 0; i < 100; ++i) ref.events.push_back({40 + i % 40, 0.5, 0.5 * i});
  for (int i = 0; i < 100; ++i) {
    if (i % 20 == 3) continue;  // 5 deletions
    ScoreEvent e = ref.events[static_cast<std::size_t>(i)];
    if (i == 50) e.pitch += 1;  // 1 substitution
    est.events.push_back(e);
  }
  est.events.push_back({70, 0.5, 10.25});  // 2 insertions, far from any reference
  est.events.push_back({71, 0.5, 30.25});
  std::sort(est.events.begin(), est.events.end(),
            [](const ScoreEvent& a, const ScoreEvent& b) { return std::tie(a.time, a.pitch) < std::tie(b.time, b.pitch); });
  const auto s = alignment_stats(ref, est, {});
  c.expect(s.deletions == 0.05 && s.insertions == 0.02 && s.substitutions == 0.01 && s.error_rate == 0.08,
           "fixture D=" + fmt(s.deletions) + " I=" + fmt(s.insertions) + " S=" + fmt(s.substitutions) +
               " ER=" + fmt(s.error_rate, "%.17g"));

  Rng rng(seed);
  for (int i = 0; i < 200; ++i) {
    const auto r = random_score(rng, 30, 3.0);
    const auto e = random_score(rng, 30, 3.0);
    const auto st = alignment_stats(r, e, {});
    if (st.undefined) {
      c.expect(r.events.empty(), "undefined only for empty reference");
      continue;
    }
    c.expect(st.error_rate == st.substitutions + st.deletions + st.insertions, "ER = S + D + I");
    c.expect(st.substitution_count + st.deletion_count <= st.ref_count, "S + D <= ref count");
  }
}

void frontend_checks(Check& c, std::uint64_t seed) {
  const FrontendConfig cfg;
  const auto tone = fixtures::sine(440.0, 1.0);
  const auto power = stft_power(tone, cfg);
  auto argmax = [&](std::size_t t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < power.rows(); ++k)
      if (power(k, t) > power(best, t)) best = k;
    return best;
  };
  // Frames whose window reaches into the reflect padding see a mirrored
  // signal, not the tone; they are reported but not held to the bin.
  const std::size_t half = static_cast<std::size_t>(cfg.window / 2), hop = static_cast<std::size_t>(cfg.hop);
  std::size_t interior = 0, bad = 0;
  std::string edges;
  for (std::size_t t = 0; t < power.cols(); ++t) {
    if (t * hop >= half && t * hop + half <= tone.samples.size()) {
      ++interior;
      bad += argmax(t) != 56;
    } else {
      edges += (edges.empty() ? "" : ",") + std::to_string(argmax(t));
    }
  }
  c.expect(interior > 0 && bad == 0, std::to_string(bad) + " interior frames with argmax != 56");
  std::vector<double> total(power.rows(), 0.0);
  for (std::size_t k = 0; k < power.rows(); ++k)
    for (std::size_t t = 0; t < power.cols(); ++t) total[k] += power(k, t);
  const auto peak = static_cast<std::size_t>(std::max_element(total.begin(), total.end()) - total.begin());
  c.expect(peak == 56, "summed spectrum argmax " + std::to_string(peak));
  c.note(std::to_string(interior) + " interior frames at bin 56, padded edge frames at bins " + edges);

  Rng rng(seed);
  Waveform noise;
  noise.samples.resize(16000);
  for (auto& v : noise.samples) v = uniform(rng, -0.1, 0.1);
  Waveform louder = noise;
  for (auto& v : louder.samples) v *= 2;
  const Matrix a = log_mel(noise, cfg), b = log_mel(louder, cfg);
  double worst = 0.0;
  const double floor = std::log(cfg.log_floor);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] > floor + 1.0) worst = std::max(worst, std::abs(b.data()[i] - a.data()[i] - std::log(4.0)));
  c.expect(worst <= 1e-3, "doubling deviation " + fmt(worst));
  c.note("ln 4 deviation " + fmt(worst, "%.2e"));

  for (const char* preset : {"ov-2023", "of-2017"}) {
    const auto pc = FrontendConfig::preset(preset);
    for (int i = 0; i < 200; ++i) {
      const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 200000));
      const double duration = static_cast<double>(n) / pc.sample_rate;
      c.expect(stft_frame_count(n, pc.hop) == frames_for_duration(duration, pc.frame_seconds()),
               std::string(preset) + " T' mismatch at " + std::to_string(n) + " samples");
    }
    for (std::size_t n : {1ul, 383ul, 384ul, 385ul, 16000ul, 48001ul}) {
      Waveform w;
      w.samples.assign(n, 0.0);
      NoteSequence seq;
      seq.duration = static_cast<double>(n) / pc.sample_rate;
      RollConfig rc;
      rc.delta_t = pc.frame_seconds();
      c.expect(compute_frontend(w, pc).num_frames() == quantize(seq, rc).onset.num_frames(),
               std::string(preset) + " frontend vs roll T' at " + std::to_string(n));
    }
  }

  auto seq = fixtures::random_sequence(rng, {40, 4.0});
  const auto spec = compute_frontend(fixtures::render(seq), cfg);
  bool exact = true;
  for (std::size_t r = 0; r < spec.x.rows(); ++r) {
    double acc = spec.x(r, 0);
    exact &= spec.dx(r, 0) == 0.0;
    for (std::size_t t = 1; t < spec.x.cols(); ++t) {
      acc += spec.dx(r, t);
      exact &= acc == spec.x(r, t);
    }
  }
  c.expect(exact, "telescoping reconstruction not exact");
}

nn::Param random_param(Rng& rng, std::vector<std::uint32_t> dims) {
  nn::Param p{dims, {}};
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  for (std::size_t i = 0; i < n; ++i) p.values.push_back(static_cast<float>(uniform(rng, -1, 1)));
  return p;
}

void network_checks(Check& c, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < 12; ++i) {
    nn::Tensor x(8, 8, 8);
    for (auto& v : x.data) v = uniform(rng, -1, 1);
    const int kh = i % 3 == 2 ? 1 : 3, kw = i % 4 == 3 ? 1 : 3;
    const nn::ConvOptions opt{1 + i % 2, 1 + (i / 2) % 3};
    const auto w = random_param(rng, {8, 8, static_cast<std::uint32_t>(kh), static_cast<std::uint32_t>(kw)});
    const auto b = random_param(rng, {8});
    const auto y = nn::conv2d(x, w, &b, opt, 1 + i % 3);
    for (int o = 0; o < 8; ++o)
      for (int r = 0; r < 8; ++r)
        for (int t = 0; t < 8; ++t) {
          double acc = b.values[static_cast<std::size_t>(o)];
          for (int ci = 0; ci < 8; ++ci)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int rr = r + (u - kh / 2) * opt.dilation_h, tt = t + (v - kw / 2) * opt.dilation_w;
                if (rr < 0 || rr >= 8 || tt < 0 || tt >= 8) continue;
                acc += w.values[static_cast<std::size_t>(((o * 8 + ci) * kh + u) * kw + v)] *
                       x.at(static_cast<std::size_t>(ci), static_cast<std::size_t>(rr), static_cast<std::size_t>(tt));
              }
          worst = std::max(worst, std::abs(acc - y.at(static_cast<std::size_t>(o), static_cast<std::size_t>(r),
                                                       static_cast<std::size_t>(t))));
        }
  }
  c.expect(worst <= 1e-5, "conv vs oracle " + fmt(worst));
  c.note("conv max error " + fmt(worst, "%.2e"));

  const auto spec = nn::ModelSpec::toy();
  auto weights = nn::random_weights(spec, seed);
  auto zeroed = weights;
  for (auto& [name, p] : zeroed)
    if (name.rfind("body.0.", 0) == 0 || name.rfind("onset.1.blocks.", 0) == 0)
      std::fill(p.values.begin(), p.values.end(), 0.0f);
  const nn::Model zm(spec, zeroed);
  nn::Tensor xs(static_cast<std::size_t>(spec.stem_channels), 229, 9);
  for (auto& v : xs.data) v = uniform(rng, -1, 1);
  c.expect(zm.residual_bottleneck(xs, "body.0", spec.body[0]) == xs, "zero-branch bottleneck is not identity");
  nn::Tensor xk(static_cast<std::size_t>(spec.key_channels), 88, 9);
  for (auto& v : xk.data) v = uniform(rng, -1, 1);
  c.expect(zm.cam_block(xk, "onset.1.blocks.2", spec.stage_blocks[2]) == xk, "zero-branch CAM is not identity");

  const nn::Model model(spec, weights);
  auto perturbed = weights;
  for (auto& [name, p] : perturbed)
    if (name.rfind("onset.2.", 0) == 0 || name.rfind("onset.3.", 0) == 0 || name.rfind("velocity.", 0) == 0)
      for (auto& v : p.values) v = -v + 0.25f;
  const nn::Model other(spec, perturbed);
  for (std::size_t T : {1ul, 7ul, 100ul}) {
    SpectroInput in{Matrix(229, T), Matrix(229, T)};
    for (auto& v : in.x.data()) v = uniform(rng, -10, 0);
    in.dx = time_derivative(in.x);
    const auto full = model.forward(in);
    bool shapes = full.onset_stages.size() == 3;
    for (const auto& r : full.onset_stages) shapes &= r.values.rows() == 88 && r.values.cols() == T;
    shapes &= full.velocity.values.rows() == 88 && full.velocity.values.cols() == T;
    c.expect(shapes, "output shape for T'=" + std::to_string(T));
    nn::ForwardOptions one;
    one.num_stages = 1;
    c.expect(model.forward(in, one).onset_stages[0].values == full.onset_stages[0].values,
             "truncated stage 1 differs at T'=" + std::to_string(T));
    c.expect(other.forward(in).onset_stages[0].values == full.onset_stages[0].values,
             "later-stage weights affect stage 1 at T'=" + std::to_string(T));
  }

  const std::size_t ref = nn::count_params(nn::ModelSpec::reference());
  c.expect(ref >= 3000000 && ref <= 3300000, "reference params " + std::to_string(ref));
  c.note("reference params " + std::to_string(ref));
}

void sustain_checks(Check& c, std::uint64_t seed) {
  auto make = [](std::vector<NoteEvent> notes, std::vector<PedalEvent> pedals) {
    NoteSequence s;
    s.notes = std::move(notes);
    s.pedals = std::move(pedals);
    s.normalize();
    return s;
  };
  const auto extended = resolve_sustain(make({{60, 0.0, 1.0, 0.5}}, {{0.5, true}, {2.0, false}}));
  c.expect(extended.notes.size() == 1 && extended.notes[0] == NoteEvent{60, 0.0, 2.0, 0.5}, "extend to pedal release");
  const auto cut =
      resolve_sustain(make({{60, 0.0, 1.0, 0.5}, {60, 1.5, 1.8, 0.5}}, {{0.5, true}, {2.0, false}}));
  c.expect(cut.notes.size() == 2 && cut.notes[0] == NoteEvent{60, 0.0, 1.5, 0.5}, "truncate at re-onset");
  const auto plain = make({{60, 0.0, 1.0, 0.5}, {64, 0.2, 0.7, 0.3}}, {});
  c.expect(resolve_sustain(plain).notes == plain.notes, "identity without pedal");

  Rng rng(seed);
  for (int i = 0; i < 100; ++i) {
    fixtures::SequenceShape shape;
    shape.pedals = true;
    const auto seq = fixtures::random_sequence(rng, shape);
    const auto once = resolve_sustain(seq);
    c.expect(resolve_sustain(once).notes == once.notes, "idempotence sequence " + std::to_string(i));
    bool monotone = once.notes.size() == seq.notes.size();
    for (std::size_t k = 0; monotone && k < seq.notes.size(); ++k)
      monotone = once.notes[k].offset >= seq.notes[k].offset && once.notes[k].onset == seq.notes[k].onset &&
                 once.notes[k].pitch == seq.notes[k].pitch;
    c.expect(monotone, "offsets decreased in sequence " + std::to_string(i));
  }
}

// Table-1-shaped manifest: per split performances, compositions, hours and
// notes, with integer-second durations so the totals are exact.
Manifest table_manifest() {
  struct Row {
    Split split;
    std::size_t performances, compositions;
    long seconds, notes;
    const char* tag;
  };
  const Row rows[] = {{Split::Train, 954, 295, 504360, 5060000, "T"},
                      {Split::Validation, 105, 60, 55080, 540000, "V"},
                      {Split::Test, 125, 75, 60840, 570000, "X"}};
  Manifest m;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.performances; ++i) {
      ManifestEntry e;
      const std::size_t comp = i % r.compositions;
      e.audio = std::string("audio/") + r.tag + std::to_string(i) + ".wav";
      e.midi = std::string("midi/") + r.tag + std::to_string(i) + ".mid";
      e.composer = "Composer " + std::to_string(comp % 37);
      e.title = std::string("Piece ") + r.tag + std::to_string(comp);
      e.year = std::to_string(2004 + i % 15);
      e.split = r.split;
      const long base = r.seconds / static_cast<long>(r.performances);
      const long extra = r.seconds % static_cast<long>(r.performances);
      e.duration_sec = static_cast<double>(base + (static_cast<long>(i) < extra ? 1 : 0));
      const long nbase = r.notes / static_cast<long>(r.performances);
      const long nextra = r.notes % static_cast<long>(r.performances);
      e.notes = static_cast<std::size_t>(nbase + (static_cast<long>(i) < nextra ? 1 : 0));
      e.sources = {"table"};
      m.entries.push_back(e);
    }
  }
  return m;
}

void dataset_checks(Check& c, std::uint64_t) {
  auto m = table_manifest();
  const auto t = stats(m);
  const auto& train = t.splits[0];
  c.expect(train.performances == 954 && train.compositions == 295 && train.duration_hours == 140.1,
           "train row " + std::to_string(train.performances) + "/" + std::to_string(train.compositions) + "/" +
               fmt(train.duration_hours, "%.17g"));
  std::istringstream table(stats_text(t));
  std::vector<std::string> train_tokens;
  for (std::string line; std::getline(table, line);)
    if (line.rfind("Train", 0) == 0) {
      std::istringstream words(line);
      for (std::string w; words >> w;) train_tokens.push_back(w);
    }
  c.expect(train_tokens == std::vector<std::string>{"Train", "954", "295", "140.1", "5.06"}, "text table train row");
  c.expect(t.total.performances == 1184 && t.total.compositions == 430 && t.total.duration_hours == 140.1 + 15.3 + 16.9,
           "totals row is column sums");
  bool clean = true;
  for (const auto& v : validate_splits(m)) clean &= v.severity != Severity::Error;
  c.expect(clean, "clean table manifest has errors");

  auto planted = m;
  ManifestEntry leak = planted.entries.front();
  leak.split = Split::Test;
  leak.audio = "audio/leak.wav";
  leak.title = "  piece   t0 ";  // same composition after folding
  planted.entries.push_back(leak);
  std::size_t cross = 0;
  for (const auto& v : validate_splits(planted)) cross += v.rule == "cross-split" && v.severity == Severity::Error;
  c.expect(cross == 1, "planted cross-split composition flagged " + std::to_string(cross) + " times");
}

void augmentation_checks(Check& c, std::uint64_t seed) {
  Rng rng(seed);
  auto tone = fixtures::sine(440.0, 1.0);
  auto music = fixtures::render(fixtures::random_sequence(rng, {20, 2.0}));
  for (const auto* w : {&tone, &music}) {
    const double a = fixtures::rms_difference(time_stretch(*w, 1.0).samples, w->samples);
    const double b = fixtures::rms_difference(pitch_shift(*w, 1.0).samples, w->samples);
    c.expect(a < 1e-6 && b < 1e-6, "identity RMS alpha " + fmt(a) + " beta " + fmt(b));
    c.note("identity RMS " + fmt(std::max(a, b), "%.1e"));
  }
  const auto up = pitch_shift(tone, 2.0);
  const double f_up = fixtures::dominant_frequency(up.samples, up.sample_rate);
  c.expect(std::abs(f_up / 880.0 - 1.0) <= 0.01 && up.samples.size() == tone.samples.size(),
           "beta=2 peak " + fmt(f_up) + " Hz");
  const auto slow = time_stretch(tone, 2.0);
  const double f_slow = fixtures::dominant_frequency(slow.samples, slow.sample_rate);
  const double len_err = std::abs(static_cast<double>(slow.samples.size()) - 2.0 * static_cast<double>(tone.samples.size()));
  c.expect(len_err <= 1.0, "alpha=2 length " + std::to_string(slow.samples.size()));
  c.expect(std::abs(f_slow / 440.0 - 1.0) <= 0.01, "alpha=2 peak " + fmt(f_slow) + " Hz");
  c.note("beta=2 peak " + fmt(f_up, "%.2f") + " Hz, alpha=2 peak " + fmt(f_slow, "%.2f") + " Hz");
}

std::string serialize(const Transcription& t) {
  std::string s = write_notes_table(score_to_notes(t.score));
  auto append = [&](const Matrix& m) {
    const auto bytes = encode_roll(m, RollKind::Prediction);
    s.append(bytes.begin(), bytes.end());
  };
  for (const auto& r : t.output.onset_stages) append(r.values);
  append(t.output.velocity.values);
  return s;
}

void determinism(Check& c, std::uint64_t seed) {
  Rng rng(seed);
  const auto seq = fixtures::random_sequence(rng, {12, 3.0});
  const auto audio = fixtures::render(seq);
  const nn::Model model(nn::ModelSpec::toy(), nn::random_weights(nn::ModelSpec::toy(), seed));
  TranscribeOptions opt;
  const std::string first = serialize(transcribe(audio, model, opt));
  for (int run = 1; run < 5; ++run) c.expect(serialize(transcribe(audio, model, opt)) == first, "run " + std::to_string(run));
  for (int threads : {4, 8}) {
    opt.threads = threads;
    c.expect(serialize(transcribe(audio, model, opt)) == first, std::to_string(threads) + " threads differ");
  }
  c.note(std::to_string(first.size()) + " bytes compared");
}

struct Entry {
  const char* name;
  void (*fn)(Check&, std::uint64_t);
};

const Entry kCriteria[] = {
    {"loss-gradients", loss_gradients},      {"loss-identities", loss_identities},
    {"decoder-roundtrip", decoder_roundtrip}, {"nms-properties", nms_properties},
    {"eval-oracle", eval_oracle},             {"alignment-fixture", alignment_fixture},
    {"frontend", frontend_checks},            {"network", network_checks},
    {"sustain", sustain_checks},              {"dataset-stats", dataset_checks},
    {"augmentation", augmentation_checks},    {"determinism", determinism},
};

}  // namespace

std::vector<std::string> criteria() {
  std::vector<std::string> out;
  for (const auto& e : kCriteria) out.push_back(e.name);
  return out;
}

std::vector<Result> run(const Options& opt, const std::vector<std::string>& only) {
  std::vector<Result> results;
  for (std::size_t i = 0; i < std::size(kCriteria); ++i) {
    const auto& e = kCriteria[i];
    if (!only.empty() && std::find(only.begin(), only.end(), e.name) == only.end()) continue;
    Result r;
    r.name = e.name;
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      e.fn(check, opt.seed + i);
      r.passed = check.ok();
      r.detail = check.detail();
    } catch (const std::exception& ex) {
      r.passed = false;
      r.detail = std::string("exception: ") + ex.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (opt.on_result) opt.on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::string format_line(const Result& r) {
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.2fs", r.seconds);
  return std::string(r.passed ? "PASS " : "FAIL ") + r.name + " (" + secs + "): " + r.detail;
}

}  // namespace amt::acceptance
