#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "amt/decoder.hpp"

namespace amt {

struct MatchConfig {
  double onset_tolerance = 0.050;  // seconds, inclusive
  double velocity_tolerance = 0.1;  // inclusive
  bool require_velocity = false;
  bool require_pitch_equal = true;

  void validate() const;
};

// Tolerances are compared with this slack so that decimal boundaries such as
// |1.05 - 1.00| <= 0.05 hold despite binary rounding.
inline constexpr double kToleranceSlack = 1e-9;

using Matching = std::vector<std::pair<std::size_t, std::size_t>>;  // (ref, est), by ref

/// Maximum-cardinality one-to-one matching over candidate pairs; among the
/// maximum matchings, the one with the smallest total onset distance (and,
/// with pitch matching disabled, the fewest pitch mismatches first).
Matching match_notes(const ScorePrediction& ref, const ScorePrediction& est, const MatchConfig& cfg);

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
  std::size_t ref_count = 0;
  std::size_t est_count = 0;
  bool precision_undefined = false;  // est_count == 0
  bool recall_undefined = false;     // ref_count == 0
};

EvalReport prf(std::size_t matched, std::size_t ref_count, std::size_t est_count);

EvalReport onset_eval(const ScorePrediction& ref, const ScorePrediction& est, MatchConfig cfg);
EvalReport onset_velocity_eval(const ScorePrediction& ref, const ScorePrediction& est, MatchConfig cfg);

struct AlignmentStats {
  double substitutions = 0.0;  // S
  double deletions = 0.0;      // D
  double insertions = 0.0;     // I
  double error_rate = 0.0;     // ER = S + D + I
  std::size_t ref_count = 0;
  std::size_t substitution_count = 0, deletion_count = 0, insertion_count = 0;
  bool undefined = false;  // empty reference; rates are NaN
};

/// Pitch-blind onset matching: matched pairs with a different pitch are
/// substitutions, unmatched refs deletions, unmatched ests insertions; all
/// rates are per reference note.
AlignmentStats alignment_stats(const ScorePrediction& ref, const ScorePrediction& est, MatchConfig cfg);

struct MetricSummary {
  double median = 0.0;
  double mean = 0.0;
  std::size_t count = 0;
};

using CorpusSummary = std::map<std::string, MetricSummary>;

/// Per-metric median and mean across pieces; undefined values are skipped.
CorpusSummary corpus_aggregate(const std::vector<AlignmentStats>& pieces);
CorpusSummary corpus_aggregate(const std::vector<EvalReport>& pieces);

double median(std::vector<double> values);

}  // namespace amt
