#include "amt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "amt/error.hpp"

namespace amt {

void MatchConfig::validate() const {
  if (!(onset_tolerance > 0.0)) throw InvalidParam("onset tolerance must be positive");
  if (!(velocity_tolerance > 0.0)) throw InvalidParam("velocity tolerance must be positive");
}

namespace {

// Pitch mismatches dominate any sum of onset distances in a component.
constexpr double kPitchPenalty = 1e6;

struct Edge {
  std::size_t ref, est;
  double cost;
};

// Min-cost maximum matching on one connected component by successive
// shortest augmenting paths (Bellman-Ford on the residual graph, so the
// negative reverse edges need no potentials).
void match_component(const std::vector<std::size_t>& refs, const std::vector<std::size_t>& ests,
                     const std::vector<Edge>& edges, std::vector<long>& ref_mate, std::vector<long>& est_mate,
                     const std::vector<std::vector<std::size_t>>& ref_edges) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  (void)edges;
  while (true) {
    // dist over refs (left) and ests (right); parents for path recovery.
    std::map<std::size_t, double> dist_ref, dist_est;
    std::map<std::size_t, std::size_t> via_ref;  // est -> ref that reached it
    for (auto r : refs) dist_ref[r] = ref_mate[r] < 0 ? 0.0 : kInf;
    for (auto e : ests) dist_est[e] = kInf;

    bool changed = true;
    for (std::size_t iter = 0; changed && iter <= refs.size() + ests.size() + 1; ++iter) {
      changed = false;
      for (auto r : refs) {
        const double dr = dist_ref[r];
        if (dr == kInf) continue;
        for (auto ei : ref_edges[r]) {
          const Edge& e = edges[ei];
          if (ref_mate[r] == static_cast<long>(e.est)) continue;
          const double nd = dr + e.cost;
          if (nd < dist_est[e.est] - 1e-15) {
            dist_est[e.est] = nd;
            via_ref[e.est] = r;
            changed = true;
          }
        }
      }
      for (auto est : ests) {
        const long r = est_mate[est];
        if (r < 0 || dist_est[est] == kInf) continue;
        // reverse edge est -> its mate, cost -c
        double c = 0.0;
        for (auto ei : ref_edges[static_cast<std::size_t>(r)])
          if (edges[ei].est == est) c = edges[ei].cost;
        const double nd = dist_est[est] - c;
        if (nd < dist_ref[static_cast<std::size_t>(r)] - 1e-15) {
          dist_ref[static_cast<std::size_t>(r)] = nd;
          changed = true;
        }
      }
    }

    std::size_t target = 0;
    double best = kInf;
    for (auto est : ests) {
      if (est_mate[est] >= 0) continue;
      if (dist_est[est] < best) {
        best = dist_est[est];
        target = est;
      }
    }
    if (best == kInf) return;

    // Flip the path back to a free ref.
    std::size_t est = target;
    while (true) {
      const std::size_t r = via_ref.at(est);
      const long previous = ref_mate[r];
      ref_mate[r] = static_cast<long>(est);
      est_mate[est] = static_cast<long>(r);
      if (previous < 0) break;
      est = static_cast<std::size_t>(previous);
    }
  }
}

Matching min_cost_max_matching(std::size_t n_ref, std::size_t n_est, const std::vector<Edge>& edges) {
  // Components via union-find over refs [0, n_ref) and ests [n_ref, ...).
  std::vector<std::size_t> parent(n_ref + n_est);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::vector<std::size_t>> ref_edges(n_ref);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    ref_edges[edges[i].ref].push_back(i);
    const auto a = find(edges[i].ref), b = find(n_ref + edges[i].est);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<std::size_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> components;
  for (std::size_t r = 0; r < n_ref; ++r)
    if (!ref_edges[r].empty()) components[find(r)].first.push_back(r);
  for (const auto& e : edges) {
    auto& ests = components[find(e.ref)].second;
    if (std::find(ests.begin(), ests.end(), e.est) == ests.end()) ests.push_back(e.est);
  }

  std::vector<long> ref_mate(n_ref, -1), est_mate(n_est, -1);
  for (auto& [root, members] : components) {
    std::sort(members.second.begin(), members.second.end());
    match_component(members.first, members.second, edges, ref_mate, est_mate, ref_edges);
  }
  Matching out;
  for (std::size_t r = 0; r < n_ref; ++r)
    if (ref_mate[r] >= 0) out.emplace_back(r, static_cast<std::size_t>(ref_mate[r]));
  return out;
}

std::vector<Edge> candidate_edges(const ScorePrediction& ref, const ScorePrediction& est, const MatchConfig& cfg,
                                  bool penalize_pitch) {
  // ests sorted by time for windowed lookup
  std::vector<std::size_t> order(est.events.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return est.events[a].time < est.events[b].time; });
  std::vector<double> times;
  for (auto i : order) times.push_back(est.events[i].time);

  const double tol = cfg.onset_tolerance + kToleranceSlack;
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < ref.events.size(); ++r) {
    const auto& a = ref.events[r];
    auto lo = std::lower_bound(times.begin(), times.end(), a.time - tol);
    std::vector<std::size_t> hits;
    for (auto it = lo; it != times.end() && *it <= a.time + tol; ++it) {
      const std::size_t e = order[static_cast<std::size_t>(it - times.begin())];
      const auto& b = est.events[e];
      if (std::abs(b.time - a.time) > tol) continue;
      if (cfg.require_pitch_equal && a.pitch != b.pitch) continue;
      if (cfg.require_velocity && std::abs(b.velocity - a.velocity) > cfg.velocity_tolerance + kToleranceSlack)
        continue;
      hits.push_back(e);
    }
    std::sort(hits.begin(), hits.end());
    for (auto e : hits) {
      double cost = std::abs(est.events[e].time - a.time);
      if (penalize_pitch && est.events[e].pitch != a.pitch) cost += kPitchPenalty;
      edges.push_back({r, e, cost});
    }
  }
  return edges;
}

}  // namespace

Matching match_notes(const ScorePrediction& ref, const ScorePrediction& est, const MatchConfig& cfg) {
  cfg.validate();
  return min_cost_max_matching(ref.events.size(), est.events.size(),
                               candidate_edges(ref, est, cfg, !cfg.require_pitch_equal));
}

EvalReport prf(std::size_t matched, std::size_t ref_count, std::size_t est_count) {
  EvalReport r;
  r.matched = matched;
  r.ref_count = ref_count;
  r.est_count = est_count;
  r.precision_undefined = est_count == 0;
  r.recall_undefined = ref_count == 0;
  r.precision = est_count ? static_cast<double>(matched) / static_cast<double>(est_count) : 0.0;
  r.recall = ref_count ? static_cast<double>(matched) / static_cast<double>(ref_count) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

EvalReport onset_eval(const ScorePrediction& ref, const ScorePrediction& est, MatchConfig cfg) {
  cfg.require_velocity = false;
  return prf(match_notes(ref, est, cfg).size(), ref.events.size(), est.events.size());
}

EvalReport onset_velocity_eval(const ScorePrediction& ref, const ScorePrediction& est, MatchConfig cfg) {
  cfg.require_velocity = true;
  return prf(match_notes(ref, est, cfg).size(), ref.events.size(), est.events.size());
}

AlignmentStats alignment_stats(const ScorePrediction& ref, const ScorePrediction& est, MatchConfig cfg) {
  cfg.require_pitch_equal = false;
  cfg.require_velocity = false;
  const auto matching = match_notes(ref, est, cfg);
  AlignmentStats s;
  s.ref_count = ref.events.size();
  for (auto [r, e] : matching)
    if (ref.events[r].pitch != est.events[e].pitch) ++s.substitution_count;
  s.deletion_count = ref.events.size() - matching.size();
  s.insertion_count = est.events.size() - matching.size();
  if (s.ref_count == 0) {
    s.undefined = true;
    s.substitutions = s.deletions = s.insertions = s.error_rate = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  const double n = static_cast<double>(s.ref_count);
  s.substitutions = static_cast<double>(s.substitution_count) / n;
  s.deletions = static_cast<double>(s.deletion_count) / n;
  s.insertions = static_cast<double>(s.insertion_count) / n;
  s.error_rate = s.substitutions + s.deletions + s.insertions;
  return s;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

CorpusSummary summarize(const std::map<std::string, std::vector<double>>& columns) {
  CorpusSummary out;
  for (const auto& [name, values] : columns) {
    MetricSummary m;
    m.count = values.size();
    m.median = median(values);
    m.mean = values.empty() ? std::numeric_limits<double>::quiet_NaN()
                            : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    out[name] = m;
  }
  return out;
}

}  // namespace

CorpusSummary corpus_aggregate(const std::vector<AlignmentStats>& pieces) {
  std::map<std::string, std::vector<double>> cols{{"S", {}}, {"D", {}}, {"I", {}}, {"ER", {}}};
  for (const auto& p : pieces) {
    if (p.undefined) continue;
    cols["S"].push_back(p.substitutions);
    cols["D"].push_back(p.deletions);
    cols["I"].push_back(p.insertions);
    cols["ER"].push_back(p.error_rate);
  }
  return summarize(cols);
}

CorpusSummary corpus_aggregate(const std::vector<EvalReport>& pieces) {
  std::map<std::string, std::vector<double>> cols{{"precision", {}}, {"recall", {}}, {"f1", {}}};
  for (const auto& p : pieces) {
    if (!p.precision_undefined) cols["precision"].push_back(p.precision);
    if (!p.recall_undefined) cols["recall"].push_back(p.recall);
    if (!p.precision_undefined || !p.recall_undefined) cols["f1"].push_back(p.f1);
  }
  return summarize(cols);
}

}  // namespace amt
