#pragma once

// Evaluation: classification accuracy for single-label data and
// non-interpolated average precision / mAP for (possibly multi-label)
// ranking. Tie handling is fixed: ranking ties are ordered by video id,
// argmax ties go to the lowest class index.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqfuse/features.hpp"
#include "seqfuse/numeric.hpp"
#include "seqfuse/score_table.hpp"

namespace seqfuse {

struct GroundTruth {
  std::vector<std::string> ids;
  std::vector<Vec> labels;  // length C each, entries {0,1}
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }

  static GroundTruth from_dataset(const Dataset& ds) {
    GroundTruth gt;
    gt.class_names = ds.class_names;
    for (const VideoSample& s : ds.samples) {
      gt.ids.push_back(s.id);
      gt.labels.push_back(s.label);
    }
    return gt;
  }
};

namespace detail {

// Maps each score-table row to the ground-truth row with the same id.
// The id sets must match exactly; the error reports the symmetric
// difference.
inline std::vector<std::size_t> align_ids(const ScoreTable& scores, const GroundTruth& truth) {
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < truth.ids.size(); ++i) where[truth.ids[i]] = i;
  std::vector<std::string> only_scores, only_truth;
  std::vector<std::size_t> map(scores.ids.size());
  std::map<std::string, bool> used;
  for (std::size_t i = 0; i < scores.ids.size(); ++i) {
    auto it = where.find(scores.ids[i]);
    if (it == where.end()) {
      only_scores.push_back(scores.ids[i]);
    } else {
      map[i] = it->second;
      used[scores.ids[i]] = true;
    }
  }
  for (const std::string& id : truth.ids)
    if (!used.count(id)) only_truth.push_back(id);
  if (!only_scores.empty() || !only_truth.empty()) {
    auto join = [](const std::vector<std::string>& v) {
      std::string out;
      for (std::size_t i = 0; i < v.size() && i < 6; ++i) out += (i ? ", " : "") + v[i];
      if (v.size() > 6) out += ", ... (" + std::to_string(v.size()) + " total)";
      return out.empty() ? std::string("none") : out;
    };
    throw AlignmentError("id sets differ; only in scores: [" + join(only_scores) +
                         "], only in ground truth: [" + join(only_truth) + "]");
  }
  return map;
}

inline std::size_t argmax_lowest(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline bool single_label(const Vec& label) {
  std::size_t pos = 0;
  for (double v : label) pos += v != 0.0;
  return pos == 1;
}

}  // namespace detail

// Fraction of videos whose argmax score hits the true class. Requires
// single-label ground truth.
inline double accuracy(const ScoreTable& scores, const GroundTruth& truth) {
  if (scores.num_classes() != truth.num_classes())
    throw DataError("accuracy: class count mismatch");
  if (!truth.class_names.empty() && !scores.class_names.empty() &&
      scores.class_names != truth.class_names)
    throw DataError("accuracy: class names disagree with the ground truth");
  if (scores.ids.empty()) throw ArgumentError("accuracy: empty score table");
  const auto map = detail::align_ids(scores, truth);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.ids.size(); ++i) {
    const Vec& label = truth.labels[map[i]];
    if (!detail::single_label(label))
      throw DataError("accuracy: video " + scores.ids[i] + " is not single-label");
    hits += detail::argmax_lowest(scores.rows[i]) == detail::argmax_lowest(label);
  }
  return static_cast<double>(hits) / static_cast<double>(scores.ids.size());
}

// Non-interpolated AP for one class: rank by descending score (ties by
// ascending id), then average precision at each positive rank. Absent
// when the class has no positives.
inline std::optional<double> average_precision(const std::vector<std::string>& ids,
                                               const Vec& scores,
                                               const std::vector<char>& positives) {
  if (ids.size() != scores.size() || ids.size() != positives.size())
    throw ShapeError("average_precision: length mismatch");
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::size_t npos = 0;
  for (char p : positives) npos += p != 0;
  if (npos == 0) return std::nullopt;
  double sum = 0.0;
  std::size_t hit = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (positives[order[k]]) {
      ++hit;
      sum += static_cast<double>(hit) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(npos);
}

inline double mean_ap(const std::vector<double>& aps) {
  if (aps.empty()) throw ArgumentError("mean_ap: no defined APs");
  double sum = 0.0;
  for (double v : aps) sum += v;
  return sum / static_cast<double>(aps.size());
}

struct EvalReport {
  std::size_t samples = 0;
  std::optional<double> accuracy;               // single-label data only
  std::vector<std::optional<double>> class_ap;  // absent for classes with no positives
  std::optional<double> map;
  Matrix confusion;  // C x C counts [true][pred], single-label data only
  std::vector<std::string> warnings;
};

inline EvalReport evaluate(const ScoreTable& scores, const GroundTruth& truth) {
  if (scores.num_classes() != truth.num_classes())
    throw DataError("evaluate: class count mismatch");
  if (!truth.class_names.empty() && !scores.class_names.empty() &&
      scores.class_names != truth.class_names)
    throw DataError("evaluate: class names disagree with the ground truth");
  if (scores.ids.empty()) throw ArgumentError("evaluate: empty score table");
  const auto map = detail::align_ids(scores, truth);
  const std::size_t C = scores.num_classes();
  EvalReport rep;
  rep.samples = scores.ids.size();

  bool all_single = true;
  for (std::size_t i = 0; i < scores.ids.size(); ++i)
    all_single = all_single && detail::single_label(truth.labels[map[i]]);
  if (all_single) {
    rep.confusion = Matrix(C, C);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scores.ids.size(); ++i) {
      const std::size_t pred = detail::argmax_lowest(scores.rows[i]);
      const std::size_t tru = detail::argmax_lowest(truth.labels[map[i]]);
      rep.confusion(tru, pred) += 1.0;
      hits += pred == tru;
    }
    rep.accuracy = static_cast<double>(hits) / static_cast<double>(rep.samples);
  } else {
    rep.warnings.push_back("multi-label ground truth; accuracy not defined");
  }

  std::vector<double> defined;
  for (std::size_t c = 0; c < C; ++c) {
    Vec cls_scores(scores.ids.size());
    std::vector<char> pos(scores.ids.size());
    for (std::size_t i = 0; i < scores.ids.size(); ++i) {
      cls_scores[i] = scores.rows[i][c];
      pos[i] = truth.labels[map[i]][c] != 0.0;
    }
    auto ap = average_precision(scores.ids, cls_scores, pos);
    rep.class_ap.push_back(ap);
    if (ap) {
      defined.push_back(*ap);
    } else {
      rep.warnings.push_back("class " + truth.class_names[c] +
                             " has no positives; excluded from mAP");
    }
  }
  if (!defined.empty())
    rep.map = mean_ap(defined);
  else
    rep.warnings.push_back("no class has positives; mAP undefined");
  return rep;
}

// Machine-readable report with one row per class.
inline void write_eval_report(const std::filesystem::path& path, const EvalReport& rep,
                              const std::vector<std::string>& class_names) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  char buf[64];
  auto num = [&](std::optional<double> v) -> std::string {
    if (!v) return "n/a";
    std::snprintf(buf, sizeof(buf), "%.17g", *v);
    return buf;
  };
  os << "seqfuse-eval v1\n";
  os << "samples " << rep.samples << "\n";
  os << "accuracy " << num(rep.accuracy) << "\n";
  os << "map " << num(rep.map) << "\n";
  for (std::size_t c = 0; c < rep.class_ap.size(); ++c)
    os << "ap " << c << " " << class_names[c] << " " << num(rep.class_ap[c]) << "\n";
  if (!rep.confusion.empty()) {
    for (std::size_t t = 0; t < rep.confusion.rows(); ++t)
      for (std::size_t p = 0; p < rep.confusion.cols(); ++p)
        if (rep.confusion(t, p) != 0.0)
          os << "confusion " << t << " " << p << " "
             << static_cast<long long>(rep.confusion(t, p)) << "\n";
  }
  for (const std::string& w : rep.warnings) os << "# warning: " << w << "\n";
  if (!os) throw DataError("write failed for " + path.string());
}

}  // namespace seqfuse
