#include "amt/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "amt/error.hpp"
#include "amt/midi.hpp"
#include "json.hpp"

namespace amt {

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  throw InvalidParam("unknown split '" + std::string(s) + "'");
}

namespace {

constexpr std::string_view kHeader = "audio,midi,composer,title,year,split,duration_sec,notes";

// One CSV record starting at `pos`; advances past its line terminator.
std::vector<std::string> read_record(std::string_view text, std::size_t& pos, std::size_t& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          fields.back() += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) throw ParseError("manifest line " + std::to_string(line) + ": unterminated quote", line);
  return fields;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fold(const std::string& s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

}  // namespace

Manifest read_manifest(std::string_view csv, const std::string& source) {
  Manifest m;
  std::size_t pos = 0, line = 1;
  if (csv.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  auto header = read_record(csv, pos, line);
  std::string joined;
  for (std::size_t i = 0; i < header.size(); ++i) joined += (i ? "," : "") + header[i];
  if (joined != kHeader) throw ParseError("manifest header must be '" + std::string(kHeader) + "'", 1);

  while (pos < csv.size()) {
    ++line;
    const std::size_t record_line = line;
    auto f = read_record(csv, pos, line);
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 8)
      throw ParseError("manifest line " + std::to_string(record_line) + ": expected 8 fields, got " +
                           std::to_string(f.size()),
                       record_line);
    ManifestEntry e;
    e.audio = f[0];
    e.midi = f[1];
    e.composer = f[2];
    e.title = f[3];
    e.year = f[4];
    try {
      e.split = split_from_string(f[5]);
    } catch (const InvalidParam& err) {
      throw ParseError("manifest line " + std::to_string(record_line) + ": " + err.what(), record_line);
    }
    auto [p1, ec1] = std::from_chars(f[6].data(), f[6].data() + f[6].size(), e.duration_sec);
    auto [p2, ec2] = std::from_chars(f[7].data(), f[7].data() + f[7].size(), e.notes);
    if (ec1 != std::errc() || p1 != f[6].data() + f[6].size() || ec2 != std::errc() ||
        p2 != f[7].data() + f[7].size())
      throw ParseError("manifest line " + std::to_string(record_line) + ": non-numeric duration_sec or notes",
                       record_line);
    if (e.audio.empty() || e.midi.empty())
      throw ParseError("manifest line " + std::to_string(record_line) + ": empty path", record_line);
    if (!(e.duration_sec > 0))
      throw ParseError("manifest line " + std::to_string(record_line) + ": duration must be positive", record_line);
    e.sources = {source};
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::string write_manifest(const Manifest& m) {
  std::string out(kHeader);
  out += '\n';
  char num[64];
  for (const auto& e : m.entries) {
    std::snprintf(num, sizeof num, "%.17g", e.duration_sec);
    out += quote(e.audio) + ',' + quote(e.midi) + ',' + quote(e.composer) + ',' + quote(e.title) + ',' +
           quote(e.year) + ',' + to_string(e.split) + ',' + num + ',' + std::to_string(e.notes) + '\n';
  }
  return out;
}

Manifest load_manifest(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return read_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.position());
  }
}

std::string composition_key(const ManifestEntry& e) { return fold(e.composer) + "\x1f" + fold(e.title); }

std::vector<Violation> validate_splits(const Manifest& m, const SplitTargets& targets) {
  if (m.entries.empty()) throw EmptyManifest("manifest has no entries");
  std::vector<Violation> out;

  // (a) compositions spanning splits
  std::map<std::string, std::set<Split>> splits_of;
  std::map<std::string, const ManifestEntry*> example;
  for (const auto& e : m.entries) {
    splits_of[composition_key(e)].insert(e.split);
    example.emplace(composition_key(e), &e);
  }
  for (const auto& [key, splits] : splits_of) {
    if (splits.size() < 2) continue;
    std::string where;
    for (Split s : splits) where += std::string(where.empty() ? "" : ", ") + to_string(s);
    const auto* e = example[key];
    out.push_back({Severity::Error, "cross-split",
                   "composition '" + e->composer + " - " + e->title + "' appears in " + where});
  }

  auto proportions = [](const std::vector<const ManifestEntry*>& entries) {
    std::array<double, 3> time{};
    double total = 0;
    for (const auto* e : entries) {
      time[static_cast<int>(e->split)] += e->duration_sec;
      total += e->duration_sec;
    }
    for (double& t : time) t = total > 0 ? t / total : 0.0;
    return time;
  };
  auto describe = [](const std::array<double, 3>& p) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.1f/%.1f/%.1f", 100 * p[0], 100 * p[1], 100 * p[2]);
    return std::string(buf);
  };
  auto off_target = [&](const std::array<double, 3>& p) {
    for (int i = 0; i < 3; ++i)
      if (std::abs(p[static_cast<std::size_t>(i)] - targets.fractions[static_cast<std::size_t>(i)]) >
          targets.slack + 1e-12)
        return true;
    return false;
  };

  // (b) global time proportions
  std::vector<const ManifestEntry*> all;
  for (const auto& e : m.entries) all.push_back(&e);
  const auto global = proportions(all);
  if (off_target(global))
    out.push_back({Severity::Error, "global-proportion",
                   "train/validation/test time split is " + describe(global) + " percent, target " +
                       describe(targets.fractions) + " +- " + std::to_string(static_cast<int>(std::lround(100 * targets.slack))) +
                       " points"});

  // (c) per-composer proportions, warning only
  std::map<std::string, std::vector<const ManifestEntry*>> by_composer;
  for (const auto& e : m.entries) by_composer[fold(e.composer)].push_back(&e);
  for (const auto& [composer, entries] : by_composer) {
    const auto p = proportions(entries);
    if (off_target(p))
      out.push_back({Severity::Warning, "composer-proportion",
                     "composer '" + entries.front()->composer + "' split is " + describe(p) + " percent"});
  }

  // Popular compositions belong in train: flag a held-out composition with
  // more performances than the median train composition.
  std::map<std::string, std::size_t> performances;
  for (const auto& e : m.entries) ++performances[composition_key(e)];
  std::vector<double> train_counts;
  for (const auto& [key, splits] : splits_of)
    if (splits.size() == 1 && *splits.begin() == Split::Train)
      train_counts.push_back(static_cast<double>(performances[key]));
  if (!train_counts.empty()) {
    std::sort(train_counts.begin(), train_counts.end());
    const double typical = train_counts[train_counts.size() / 2];
    for (const auto& [key, splits] : splits_of) {
      if (splits.contains(Split::Train)) continue;
      if (static_cast<double>(performances[key]) > typical && performances[key] > 1) {
        const auto* e = example[key];
        out.push_back({Severity::Warning, "popular-in-heldout",
                       "composition '" + e->composer + " - " + e->title + "' has " +
                           std::to_string(performances[key]) + " performances but is not in train"});
      }
    }
  }
  return out;
}

StatsTable stats(const Manifest& m) {
  StatsTable t;
  std::array<std::set<std::string>, 3> compositions;
  std::array<double, 3> seconds{}, notes{};
  for (const auto& e : m.entries) {
    const auto i = static_cast<std::size_t>(e.split);
    ++t.splits[i].performances;
    compositions[i].insert(composition_key(e));
    seconds[i] += e.duration_sec;
    notes[i] += static_cast<double>(e.notes);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    auto& s = t.splits[i];
    s.compositions = compositions[i].size();
    s.duration_hours = seconds[i] / 3600.0;
    s.notes_millions = notes[i] / 1e6;
    t.total.performances += s.performances;
    t.total.compositions += s.compositions;
    t.total.duration_hours += s.duration_hours;
    t.total.notes_millions += s.notes_millions;
  }
  return t;
}

std::string stats_text(const StatsTable& t) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %12s %12s %14s %15s\n", "Split", "Performances", "Compositions",
                "Duration (h)", "Notes (M)");
  out += buf;
  auto row = [&](const char* name, const SplitStats& s) {
    std::snprintf(buf, sizeof buf, "%-12s %12zu %12zu %14.1f %15.2f\n", name, s.performances, s.compositions,
                  s.duration_hours, s.notes_millions);
    out += buf;
  };
  row("Train", t.splits[0]);
  row("Validation", t.splits[1]);
  row("Test", t.splits[2]);
  row("Total", t.total);
  return out;
}

std::string stats_json(const StatsTable& t) {
  auto row = [](const SplitStats& s) {
    return nlohmann::ordered_json{{"performances", s.performances},
                          {"compositions", s.compositions},
                          {"duration_hours", s.duration_hours},
                          {"notes_millions", s.notes_millions}};
  };
  nlohmann::ordered_json j;
  j["train"] = row(t.splits[0]);
  j["validation"] = row(t.splits[1]);
  j["test"] = row(t.splits[2]);
  j["total"] = row(t.total);
  return j.dump(2);
}

Manifest merge_manifests(const Manifest& a, const Manifest& b, DedupKey key) {
  auto key_of = [&](const ManifestEntry& e) { return key == DedupKey::Composition ? composition_key(e) : e.audio; };
  Manifest out = a;
  std::map<std::string, std::vector<std::size_t>> index;
  for (std::size_t i = 0; i < out.entries.size(); ++i) index[key_of(out.entries[i])].push_back(i);

  std::map<std::string, std::set<std::string>> extra_sources;
  for (const auto& e : b.entries) {
    const auto k = key_of(e);
    auto it = index.find(k);
    if (it != index.end() && !it->second.empty() && it->second.front() < a.entries.size()) {
      extra_sources[k].insert(e.sources.begin(), e.sources.end());
      continue;
    }
    index[k].push_back(out.entries.size());
    out.entries.push_back(e);
  }
  for (const auto& [k, sources] : extra_sources)
    for (auto i : index[k]) {
      auto& s = out.entries[i].sources;
      s.insert(s.end(), sources.begin(), sources.end());
    }
  for (auto& e : out.entries) {
    std::sort(e.sources.begin(), e.sources.end());
    e.sources.erase(std::unique(e.sources.begin(), e.sources.end()), e.sources.end());
  }
  return out;
}

}  // namespace amt
