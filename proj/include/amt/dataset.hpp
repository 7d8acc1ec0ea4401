#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace amt {

enum class Split { Train, Validation, Test };

const char* to_string(Split s);
Split split_from_string(std::string_view s);

struct ManifestEntry {
  std::string audio;
  std::string midi;
  std::string composer;
  std::string title;
  std::string year;
  Split split = Split::Train;
  double duration_sec = 0.0;
  std::size_t notes = 0;
  std::vector<std::string> sources;  // provenance labels, sorted
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

/// CSV with header `audio,midi,composer,title,year,split,duration_sec,notes`
/// (RFC 4180 quoting). `source` labels every entry's provenance.
Manifest read_manifest(std::string_view csv, const std::string& source = "manifest");
std::string write_manifest(const Manifest& m);
Manifest load_manifest(const std::string& path);

/// Composition identity: composer and title with case folded and runs of
/// whitespace collapsed.
std::string composition_key(const ManifestEntry& e);

enum class Severity { Error, Warning };

struct Violation {
  Severity severity = Severity::Error;
  std::string rule;  // "cross-split", "global-proportion", "composer-proportion", "popular-in-heldout"
  std::string message;
};

struct SplitTargets {
  std::array<double, 3> fractions = {0.8, 0.1, 0.1};
  double slack = 0.03;  // absolute fraction
};

/// Throws EmptyManifest when there are no entries.
std::vector<Violation> validate_splits(const Manifest& m, const SplitTargets& targets = {});

struct SplitStats {
  std::size_t performances = 0;
  std::size_t compositions = 0;
  double duration_hours = 0.0;
  double notes_millions = 0.0;
};

struct StatsTable {
  std::array<SplitStats, 3> splits;  // train, validation, test
  SplitStats total;                   // column sums
};

StatsTable stats(const Manifest& m);
std::string stats_text(const StatsTable& t);
std::string stats_json(const StatsTable& t);

enum class DedupKey { Composition, Performance };

/// Union of both manifests. With Composition dedup, a composition already
/// present in `a` keeps only `a`'s entries and gains `b`'s provenance; with
/// Performance dedup the same applies per audio path.
Manifest merge_manifests(const Manifest& a, const Manifest& b, DedupKey key = DedupKey::Composition);

}  // namespace amt
