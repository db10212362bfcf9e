#pragma once

// Score-level combination: average fusion, weighted linear fusion, and
// cross-validated weight estimation by exhaustive search over a simplex
// grid. Tables are aligned by video id, never by row order.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seqfuse/metrics.hpp"
#include "seqfuse/numeric.hpp"
#include "seqfuse/score_table.hpp"

namespace seqfuse {

struct FusionWeights {
  Vec values;  // one per model, nonnegative, summing to 1

  static FusionWeights make(Vec v) {
    if (v.empty()) throw ArgumentError("fusion weights: empty");
    double sum = 0.0;
    for (double x : v) {
      if (!std::isfinite(x) || x < 0.0)
        throw ArgumentError("fusion weights: weights must be finite and nonnegative");
      sum += x;
    }
    if (sum <= 0.0) throw ArgumentError("fusion weights: all zero");
    for (double& x : v) x /= sum;
    return {std::move(v)};
  }
};

namespace detail {

// Checks that all tables carry the same id set and class count, and
// returns per-table maps from the first table's order to row indices.
inline std::vector<std::vector<std::size_t>> align_tables(std::span<const ScoreTable> tables) {
  if (tables.empty()) throw ArgumentError("score fusion: no tables");
  const ScoreTable& ref = tables.front();
  std::vector<std::vector<std::size_t>> maps(tables.size());
  for (std::size_t t = 0; t < tables.size(); ++t) {
    if (tables[t].num_classes() != ref.num_classes())
      throw AlignmentError("score fusion: table '" + tables[t].model + "' has " +
                           std::to_string(tables[t].num_classes()) + " classes, expected " +
                           std::to_string(ref.num_classes()));
    if (tables[t].class_names != ref.class_names)
      throw AlignmentError("score fusion: table '" + tables[t].model +
                           "' names its classes differently from '" + ref.model + "'");
    std::map<std::string, std::size_t> where;
    for (std::size_t i = 0; i < tables[t].ids.size(); ++i) where[tables[t].ids[i]] = i;
    std::vector<std::string> only_ref, only_t;
    maps[t].resize(ref.ids.size());
    for (std::size_t i = 0; i < ref.ids.size(); ++i) {
      auto it = where.find(ref.ids[i]);
      if (it == where.end())
        only_ref.push_back(ref.ids[i]);
      else {
        maps[t][i] = it->second;
        where.erase(it);
      }
    }
    for (const auto& [id, idx] : where) only_t.push_back(id);
    if (!only_ref.empty() || !only_t.empty()) {
      auto join = [](const std::vector<std::string>& v) {
        std::string out;
        for (std::size_t i = 0; i < v.size() && i < 6; ++i) out += (i ? ", " : "") + v[i];
        if (v.size() > 6) out += ", ... (" + std::to_string(v.size()) + " total)";
        return out.empty() ? std::string("none") : out;
      };
      throw AlignmentError("score fusion: id sets differ between '" + ref.model + "' and '" +
                           tables[t].model + "'; missing in second: [" + join(only_ref) +
                           "], extra in second: [" + join(only_t) + "]");
    }
  }
  return maps;
}

}  // namespace detail

// Convex combination of the tables, id-aligned; output rows follow the
// first table's id order.
inline ScoreTable weighted_fuse(std::span<const ScoreTable> tables, const FusionWeights& w) {
  if (w.values.size() != tables.size())
    throw ArgumentError("weighted_fuse: " + std::to_string(w.values.size()) + " weights for " +
                        std::to_string(tables.size()) + " tables");
  const auto maps = detail::align_tables(tables);
  const ScoreTable& ref = tables.front();
  ScoreTable out;
  out.ids = ref.ids;
  out.class_names = ref.class_names;
  std::string tag = "weighted(";
  for (std::size_t t = 0; t < tables.size(); ++t)
    tag += (t ? "," : "") + tables[t].model;
  out.model = tag + ")";
  out.rows.assign(ref.ids.size(), Vec(ref.num_classes(), 0.0));
  for (std::size_t t = 0; t < tables.size(); ++t) {
    const double wt = w.values[t];
    for (std::size_t i = 0; i < ref.ids.size(); ++i)
      axpy(wt, tables[t].rows[maps[t][i]], out.rows[i]);
  }
  return out;
}

// Elementwise arithmetic mean of the tables.
inline ScoreTable average_fuse(std::span<const ScoreTable> tables) {
  if (tables.empty()) throw ArgumentError("average_fuse: no tables");
  FusionWeights w = FusionWeights::make(Vec(tables.size(), 1.0));
  ScoreTable out = weighted_fuse(tables, w);
  std::string tag = "average(";
  for (std::size_t t = 0; t < tables.size(); ++t) tag += (t ? "," : "") + tables[t].model;
  out.model = tag + ")";
  return out;
}

// Per-class min-max rescaling to [0,1]. Softmax and sigmoid scores both
// live in [0,1] already, so fusion works on raw scores by default; this
// switch exists for score sources on other scales. Constant columns map
// to 0.5.
inline ScoreTable min_max_rescale(const ScoreTable& t) {
  validate(t);
  ScoreTable out = t;
  for (std::size_t c = 0; c < t.num_classes(); ++c) {
    double lo = 1e300, hi = -1e300;
    for (const Vec& row : t.rows) {
      lo = std::min(lo, row[c]);
      hi = std::max(hi, row[c]);
    }
    for (std::size_t i = 0; i < out.rows.size(); ++i)
      out.rows[i][c] = hi > lo ? (t.rows[i][c] - lo) / (hi - lo) : 0.5;
  }
  return out;
}

enum class FuseMetric { accuracy, map };

inline double fuse_metric_value(const ScoreTable& table, const GroundTruth& truth,
                                FuseMetric metric) {
  if (metric == FuseMetric::accuracy) return accuracy(table, truth);
  const EvalReport rep = evaluate(table, truth);
  if (!rep.map) throw DataError("mAP undefined on this validation split (no positives)");
  return *rep.map;
}

// Exhaustive search over the simplex grid {k/n : sum k = n} with
// n = round(1/step). Ties go first to the vector closest to uniform,
// then to the lexicographically smallest one; both comparisons are done
// in integers, so the tie-break is exact.
inline FusionWeights cross_validate_weights(std::span<const ScoreTable> val_tables,
                                            const GroundTruth& truth, FuseMetric metric,
                                            double grid_step = 0.1) {
  if (val_tables.empty()) throw ArgumentError("cross_validate_weights: no tables");
  if (!(grid_step > 0.0) || grid_step > 1.0)
    throw ArgumentError("cross_validate_weights: grid step outside (0, 1]");
  if (metric == FuseMetric::accuracy) {
    // A single-class validation split makes every weight vector look
    // identical under accuracy.
    std::map<std::size_t, bool> seen;
    for (const Vec& l : truth.labels) seen[detail::argmax_lowest(l)] = true;
    if (seen.size() < 2)
      throw DataError("cross_validate_weights: validation split has a single class");
  }
  const std::size_t m = val_tables.size();
  const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(1.0 / grid_step + 0.5));

  std::vector<std::size_t> counts(m, 0);
  std::vector<std::size_t> best_counts;
  double best_metric = 0.0;
  long long best_dist = 0;
  bool have_best = false;

  // Distance to uniform, scaled to integers: sum (m*k_i - n)^2.
  auto uniform_dist = [&](const std::vector<std::size_t>& k) {
    long long d = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const long long diff = static_cast<long long>(m * k[i]) - static_cast<long long>(n);
      d += diff * diff;
    }
    return d;
  };

  // Enumerate compositions of n into m parts, lexicographically.
  std::vector<std::size_t> stack(m, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t left) {
    if (pos + 1 == m) {
      stack[pos] = left;
      Vec w(m);
      for (std::size_t i = 0; i < m; ++i) w[i] = static_cast<double>(stack[i]) / n;
      const ScoreTable fused = weighted_fuse(val_tables, FusionWeights{w});
      const double v = fuse_metric_value(fused, truth, metric);
      const long long dist = uniform_dist(stack);
      if (!have_best || v > best_metric ||
          (v == best_metric && dist < best_dist)) {
        have_best = true;
        best_metric = v;
        best_dist = dist;
        best_counts = stack;
      }
      return;
    }
    for (std::size_t k = 0; k <= left; ++k) {
      stack[pos] = k;
      rec(pos + 1, left - k);
    }
  };
  rec(0, n);

  Vec w(m);
  for (std::size_t i = 0; i < m; ++i) w[i] = static_cast<double>(best_counts[i]) / n;
  return FusionWeights::make(std::move(w));
}

}  // namespace seqfuse
