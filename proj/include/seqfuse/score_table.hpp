#pragma once

// Per-video, per-class prediction scores: the common currency between
// classifiers, score fusion and evaluation.
//
// Score file (text):
//   seqfuse-scores v1
//   model <tag>
//   classes <C> <name0> ... <nameC-1>
//   video <id> <s0> ... <sC-1>
// Scores are printed with %.17g so a read/write round trip is exact.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seqfuse/numeric.hpp"

namespace seqfuse {

struct ScoreTable {
  std::vector<std::string> ids;
  std::vector<Vec> rows;  // one per id, length C
  std::vector<std::string> class_names;
  std::string model;  // provenance tag

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t size() const { return ids.size(); }
};

inline void validate(const ScoreTable& t) {
  if (t.ids.size() != t.rows.size()) throw DataError("score table: ids/rows length mismatch");
  std::set<std::string> seen;
  for (const std::string& id : t.ids)
    if (!seen.insert(id).second) throw DataError("score table: duplicate video id " + id);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].size() != t.num_classes())
      throw DataError("score table: row for " + t.ids[i] + " has length " +
                      std::to_string(t.rows[i].size()) + ", expected " +
                      std::to_string(t.num_classes()));
    if (!all_finite(t.rows[i])) throw DataError("score table: non-finite score for " + t.ids[i]);
  }
}

inline void write_score_table(const std::filesystem::path& path, const ScoreTable& t) {
  validate(t);
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "seqfuse-scores v1\n";
  os << "model " << (t.model.empty() ? "unknown" : t.model) << "\n";
  os << "classes " << t.num_classes();
  for (const std::string& n : t.class_names) os << " " << n;
  os << "\n";
  char buf[64];
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    os << "video " << t.ids[i];
    for (double v : t.rows[i]) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << " " << buf;
    }
    os << "\n";
  }
  if (!os) throw DataError("write failed for " + path.string());
}

inline ScoreTable read_score_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("missing score file " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "seqfuse-scores v1")
    throw DataError("bad score file header in " + path.string());
  ScoreTable t;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "model") {
      ss >> t.model;
    } else if (kind == "classes") {
      std::size_t c = 0;
      ss >> c;
      std::string name;
      while (ss >> name) t.class_names.push_back(name);
      if (t.class_names.size() != c)
        throw DataError("class name count mismatch in " + path.string());
    } else if (kind == "video") {
      std::string id;
      ss >> id;
      Vec row;
      double v;
      while (ss >> v) row.push_back(v);
      if (id.empty() || row.size() != t.num_classes())
        throw DataError("bad video line in " + path.string() + ": " + line);
      t.ids.push_back(id);
      t.rows.push_back(std::move(row));
    } else {
      throw DataError("unknown record '" + kind + "' in " + path.string());
    }
  }
  validate(t);
  return t;
}

}  // namespace seqfuse
