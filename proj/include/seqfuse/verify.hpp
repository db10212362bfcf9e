#pragma once

// Verification oracles and the suites behind `seqfuse verify`. Every
// oracle recomputes its target through an independent route: LSTM and
// fusion gradients against central finite differences of the forward
// loss, the proximal operator against a brute-force per-row minimizer,
// and average precision against a direct recount of the definition.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "seqfuse/ensemble.hpp"
#include "seqfuse/fusion.hpp"
#include "seqfuse/lstm.hpp"
#include "seqfuse/metrics.hpp"
#include "seqfuse/numeric.hpp"

namespace seqfuse::verify {

struct SuiteResult {
  std::string name;
  std::size_t checks = 0;
  std::size_t failures = 0;
  std::vector<std::string> notes;

  bool pass() const { return checks > 0 && failures == 0; }
  void check(bool ok, const std::string& what) {
    ++checks;
    if (!ok) {
      ++failures;
      if (notes.size() < 10) notes.push_back(what);
    }
  }
};

// ---------------------------------------------------------------------
// LSTM step reference: the five equations evaluated with plain scalar
// loops, no shared matrix helpers.
// ---------------------------------------------------------------------

inline void lstm_step_reference(const LstmLayerParams& p, const Vec& x, const Vec& h_prev,
                                const Vec& c_prev, Vec& h_out, Vec& c_out) {
  const std::size_t H = p.hidden_dim();
  const std::size_t D = p.input_dim();
  auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  h_out.assign(H, 0.0);
  c_out.assign(H, 0.0);
  Vec i(H), f(H), g(H);
  for (std::size_t r = 0; r < H; ++r) {
    double ai = p.b_i[r], af = p.b_f[r], ag = p.b_c[r];
    for (std::size_t j = 0; j < D; ++j) {
      ai += p.w_xi(r, j) * x[j];
      af += p.w_xf(r, j) * x[j];
      ag += p.w_xc(r, j) * x[j];
    }
    for (std::size_t j = 0; j < H; ++j) {
      ai += p.w_hi(r, j) * h_prev[j] + p.w_ci(r, j) * c_prev[j];
      af += p.w_hf(r, j) * h_prev[j] + p.w_cf(r, j) * c_prev[j];
      ag += p.w_hc(r, j) * h_prev[j];
    }
    i[r] = sig(ai);
    f[r] = sig(af);
    g[r] = std::tanh(ag);
    c_out[r] = f[r] * c_prev[r] + i[r] * g[r];
  }
  for (std::size_t r = 0; r < H; ++r) {
    double ao = p.b_o[r];
    for (std::size_t j = 0; j < D; ++j) ao += p.w_xo(r, j) * x[j];
    for (std::size_t j = 0; j < H; ++j) ao += p.w_ho(r, j) * h_prev[j] + p.w_co(r, j) * c_out[j];
    h_out[r] = sig(ao) * std::tanh(c_out[r]);
  }
}

// ---------------------------------------------------------------------
// Finite-difference gradient checks
// ---------------------------------------------------------------------

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t params = 0;
};

template <class LossFn>
inline void fd_check_values(Vec& values, const Vec& analytic, LossFn&& loss_at, double step,
                            GradCheck& out) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double keep = values[k];
    values[k] = keep + step;
    const double up = loss_at();
    values[k] = keep - step;
    const double dn = loss_at();
    values[k] = keep;
    const double numeric = (up - dn) / (2.0 * step);
    out.max_rel_err = std::max(out.max_rel_err, rel_err(analytic[k], numeric));
    ++out.params;
  }
}

inline GradCheck gradcheck_lstm(LstmStack stack, const FeatureSequence& seq, const Vec& target,
                                double step = 1e-5) {
  LstmBptt analytic = lstm_bptt(stack, seq, target);
  auto loss_at = [&]() { return cross_entropy(lstm_forward(stack, seq).probs, target); };
  GradCheck r;
  auto sm = lstm_matrices(stack);
  auto gm = lstm_matrices(analytic.grad);
  for (std::size_t k = 0; k < sm.size(); ++k)
    fd_check_values(sm[k]->data(), gm[k]->data(), loss_at, step, r);
  auto sv = lstm_vectors(stack);
  auto gv = lstm_vectors(analytic.grad);
  for (std::size_t k = 0; k < sv.size(); ++k) fd_check_values(*sv[k], *gv[k], loss_at, step, r);
  return r;
}

inline GradCheck gradcheck_fusion(FusionNet net, const std::vector<PooledSample>& batch,
                                  const FusionHyper& hyper, double step = 1e-5) {
  FusionNet analytic = fusion_smooth_gradient(net, batch, hyper);
  FusionHyper smooth = hyper;
  smooth.lambda2 = smooth.lambda3 = 0.0;  // p = L + lambda1*Phi only
  auto loss_at = [&]() { return fusion_objective(net, batch, smooth); };
  GradCheck r;
  auto nm = fusion_matrices(net);
  auto gm = fusion_matrices(analytic);
  for (std::size_t k = 0; k < nm.size(); ++k)
    fd_check_values(nm[k]->data(), gm[k]->data(), loss_at, step, r);
  auto nv = fusion_vectors(net);
  auto gv = fusion_vectors(analytic);
  for (std::size_t k = 0; k < nv.size(); ++k) fd_check_values(*nv[k], *gv[k], loss_at, step, r);
  return r;
}

inline SuiteResult run_lstm_gradcheck_suite(std::size_t instances = 20,
                                            std::uint64_t seed = 1001, double tol = 1e-4) {
  SuiteResult res;
  res.name = "gradcheck-lstm";
  RngSource rng(seed);
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const std::size_t d = 2 + rng.index(4);
    const std::size_t h1 = 2 + rng.index(5);  // <= 6
    const std::size_t h2 = 2 + rng.index(5);
    const std::size_t t = 1 + rng.index(8);  // <= 8
    const std::size_t c = 2 + rng.index(3);  // <= 4
    LstmStack stack = init_lstm(d, {h1, h2}, c, rng);
    for (Matrix* m : lstm_matrices(stack)) fill_uniform(*m, rng, -0.6, 0.6);
    for (Vec* v : lstm_vectors(stack)) fill_uniform(*v, rng, -0.6, 0.6);
    FeatureSequence seq;
    seq.dim = d;
    seq.stream = Stream::spatial;
    for (std::size_t ti = 0; ti < t; ++ti) {
      Vec f(d);
      fill_uniform(f, rng, -1.0, 1.0);
      seq.frames.push_back(std::move(f));
    }
    const Vec target = one_hot(rng.index(c), c);
    const GradCheck g = gradcheck_lstm(stack, seq, target);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "instance %zu (H=%zu/%zu T=%zu C=%zu): max rel err %.3g over %zu params",
                  inst, h1, h2, t, c, g.max_rel_err, g.params);
    res.check(g.max_rel_err < tol, buf);
  }
  return res;
}

inline SuiteResult run_fusion_gradcheck_suite(std::size_t instances = 20,
                                              std::uint64_t seed = 1002, double tol = 1e-4) {
  SuiteResult res;
  res.name = "gradcheck-fusion";
  RngSource rng(seed);
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const std::size_t d_s = 2 + rng.index(7);  // <= 8
    const std::size_t d_m = 2 + rng.index(7);
    FusionArch arch;
    arch.spatial_abs_width = 2 + rng.index(5);  // <= 6
    arch.motion_abs_width = 2 + rng.index(5);
    arch.fusion_width = 2 + rng.index(5);
    const std::size_t c = 2 + rng.index(3);
    FusionNet net = init_fusion(d_s, d_m, arch, c, rng);
    FusionHyper hyper;
    hyper.lambda1 = rng.uniform(0.0, 1e-2);
    hyper.loss = inst % 2 == 0 ? FusionLoss::squared : FusionLoss::logistic;
    std::vector<PooledSample> batch;
    for (std::size_t b = 0; b < 3; ++b) {
      PooledSample s;
      s.id = "g" + std::to_string(b);
      s.spatial.assign(d_s, 0.0);
      s.motion.assign(d_m, 0.0);
      fill_uniform(s.spatial, rng, -1.0, 1.0);
      fill_uniform(s.motion, rng, -1.0, 1.0);
      s.label.assign(c, 0.0);
      s.label[rng.index(c)] = 1.0;
      if (rng.uniform() < 0.3) s.label[rng.index(c)] = 1.0;  // occasionally multi-label
      batch.push_back(std::move(s));
    }
    const GradCheck g = gradcheck_fusion(net, batch, hyper);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "instance %zu: max rel err %.3g over %zu params", inst,
                  g.max_rel_err, g.params);
    res.check(g.max_rel_err < tol, buf);
  }
  return res;
}

// ---------------------------------------------------------------------
// Proximal operator brute force
// ---------------------------------------------------------------------

inline double prox_point_objective(const Vec& x, const Vec& v, double tau2, double tau3) {
  double quad = 0.0, sq = 0.0, l1 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - v[j];
    quad += 0.5 * d * d;
    sq += x[j] * x[j];
    l1 += std::abs(x[j]);
  }
  return quad + tau2 * std::sqrt(sq) + tau3 * l1;
}

// Cyclic coordinate descent; each coordinate is minimized by ternary
// search on its convex section, with an explicit probe at the kink x=0.
// Coordinate sweeps alone crawl along the radial direction when the
// group term nearly cancels the row, so each sweep also line-searches
// the scale of the whole row.
inline Vec prox_row_reference(const Vec& v, double tau2, double tau3) {
  Vec x = v;
  Vec probe = x;
  for (int sweep = 0; sweep < 600; ++sweep) {
    double max_delta = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double old = x[j];
      double lo = -std::abs(v[j]) - 1.0, hi = std::abs(v[j]) + 1.0;
      for (int it = 0; it < 120; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        x[j] = m1;
        const double f1 = prox_point_objective(x, v, tau2, tau3);
        x[j] = m2;
        const double f2 = prox_point_objective(x, v, tau2, tau3);
        if (f1 < f2)
          hi = m2;
        else
          lo = m1;
      }
      const double mid = 0.5 * (lo + hi);
      x[j] = mid;
      const double fmid = prox_point_objective(x, v, tau2, tau3);
      x[j] = 0.0;
      if (prox_point_objective(x, v, tau2, tau3) > fmid) x[j] = mid;
      max_delta = std::max(max_delta, std::abs(x[j] - old));
    }

    // Radial line search: minimize f(s * x) over s >= 0. The exact zero
    // point is never jumped to mid-run; at x = 0 the l2 kink traps the
    // coordinate steps even when the true minimizer is slightly off zero.
    const double s = [&] {
      double lo = 0.0, hi = 1.5;
      for (int it = 0; it < 120; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        for (std::size_t j = 0; j < x.size(); ++j) probe[j] = m1 * x[j];
        const double f1 = prox_point_objective(probe, v, tau2, tau3);
        for (std::size_t j = 0; j < x.size(); ++j) probe[j] = m2 * x[j];
        const double f2 = prox_point_objective(probe, v, tau2, tau3);
        if (f1 < f2)
          hi = m2;
        else
          lo = m1;
      }
      return 0.5 * (lo + hi);
    }();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double nx = s * x[j];
      max_delta = std::max(max_delta, std::abs(nx - x[j]));
      x[j] = nx;
    }
    if (max_delta < 1e-14) break;
  }

  // Coordinate descent can still stall near the l2 kink when every
  // |v_j| < tau2 + tau3 yet the row as a whole beats the group
  // threshold. Scan a few candidate rays through the origin and keep the
  // best point seen anywhere: the end point, the all-zero row, and exact
  // ternary minima along the directions of v, of the thresholded v, and
  // of the end point itself.
  Vec best = x;
  double best_f = prox_point_objective(best, v, tau2, tau3);
  auto consider = [&](const Vec& cand) {
    const double f = prox_point_objective(cand, v, tau2, tau3);
    if (f < best_f) {
      best_f = f;
      best = cand;
    }
  };
  consider(Vec(v.size(), 0.0));

  double vnorm = 0.0;
  for (double a : v) vnorm += a * a;
  vnorm = std::sqrt(vnorm);
  auto ray_min = [&](Vec dir) {
    double dnorm = 0.0;
    for (double a : dir) dnorm += a * a;
    dnorm = std::sqrt(dnorm);
    if (dnorm == 0.0) return;
    for (double& a : dir) a /= dnorm;
    double lo = 0.0, hi = vnorm + tau2 + 1.0;
    for (int it = 0; it < 160; ++it) {
      const double m1 = lo + (hi - lo) / 3.0;
      const double m2 = hi - (hi - lo) / 3.0;
      for (std::size_t j = 0; j < dir.size(); ++j) probe[j] = m1 * dir[j];
      const double f1 = prox_point_objective(probe, v, tau2, tau3);
      for (std::size_t j = 0; j < dir.size(); ++j) probe[j] = m2 * dir[j];
      const double f2 = prox_point_objective(probe, v, tau2, tau3);
      if (f1 < f2)
        hi = m2;
      else
        lo = m1;
    }
    const double t = 0.5 * (lo + hi);
    for (std::size_t j = 0; j < dir.size(); ++j) probe[j] = t * dir[j];
    consider(probe);
  };
  ray_min(v);
  ray_min(x);
  Vec shrunk = v;
  for (double& a : shrunk) a = a > tau3 ? a - tau3 : (a < -tau3 ? a + tau3 : 0.0);
  ray_min(shrunk);
  return best;
}

// Plain grid scan for the scalar case (||x||_2 = |x|).
inline double prox_scalar_grid_reference(double v, double tau2, double tau3, double lo = -3.0,
                                         double hi = 3.0, double step = 1e-5) {
  double best_x = lo, best_f = 0.0;
  bool first = true;
  for (double x = lo; x <= hi; x += step) {
    const double d = x - v;
    const double f = 0.5 * d * d + (tau2 + tau3) * std::abs(x);
    if (first || f < best_f) {
      best_f = f;
      best_x = x;
      first = false;
    }
  }
  return best_x;
}

inline SuiteResult run_prox_suite(std::size_t rows = 1000, std::uint64_t seed = 1003,
                                  double tol = 1e-6) {
  SuiteResult res;
  res.name = "prox";
  RngSource rng(seed);
  for (std::size_t k = 0; k < rows; ++k) {
    const std::size_t n = 1 + rng.index(4);
    Vec v(n);
    fill_uniform(v, rng, -2.5, 2.5);
    const double tau2 = rng.uniform(0.0, 2.0);
    const double tau3 = rng.uniform(0.0, 2.0);

    const Vec got = prox_row(v, tau2, tau3);
    const Vec want = prox_row_reference(v, tau2, tau3);
    double max_diff = 0.0;
    for (std::size_t j = 0; j < n; ++j) max_diff = std::max(max_diff, std::abs(got[j] - want[j]));
    char buf[160];
    std::snprintf(buf, sizeof(buf), "row %zu (n=%zu tau2=%.3f tau3=%.3f): diff %.3g vs oracle", k,
                  n, tau2, tau3, max_diff);
    res.check(max_diff < tol, buf);

    // Zero-row law: the row collapses exactly when the soft-thresholded
    // norm does not exceed tau2.
    double usq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double u = v[j];
      if (u > tau3)
        u -= tau3;
      else if (u < -tau3)
        u += tau3;
      else
        u = 0.0;
      usq += u * u;
    }
    const bool should_zero = std::sqrt(usq) <= tau2;
    bool is_zero = true;
    for (double g : got) is_zero = is_zero && g == 0.0;
    std::snprintf(buf, sizeof(buf), "row %zu: zero-row law violated (|u|=%.6g tau2=%.6g)", k,
                  std::sqrt(usq), tau2);
    res.check(is_zero == should_zero, buf);

    // Row-norm contraction, compared with the same accumulation order.
    double got_sq = 0.0, v_sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      got_sq += got[j] * got[j];
      v_sq += v[j] * v[j];
    }
    std::snprintf(buf, sizeof(buf), "row %zu: norm grew (%.17g > %.17g)", k, std::sqrt(got_sq),
                  std::sqrt(v_sq));
    res.check(std::sqrt(got_sq) <= std::sqrt(v_sq), buf);
  }
  return res;
}

// ---------------------------------------------------------------------
// Average precision reference: selection sort plus a fresh recount of
// positives at every positive rank.
// ---------------------------------------------------------------------

inline std::optional<double> average_precision_reference(const std::vector<std::string>& ids,
                                                         const Vec& scores,
                                                         const std::vector<char>& positives) {
  const std::size_t n = ids.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool better = scores[order[j]] > scores[order[best]] ||
                          (scores[order[j]] == scores[order[best]] &&
                           ids[order[j]] < ids[order[best]]);
      if (better) best = j;
    }
    std::swap(order[i], order[best]);
  }
  std::size_t npos = 0;
  for (char p : positives) npos += p != 0;
  if (npos == 0) return std::nullopt;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!positives[order[k]]) continue;
    std::size_t hits = 0;
    for (std::size_t j = 0; j <= k; ++j) hits += positives[order[j]] != 0;
    total += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return total / static_cast<double>(npos);
}

inline SuiteResult run_metrics_suite(std::size_t random_instances = 50,
                                     std::size_t transforms = 20, std::uint64_t seed = 1004) {
  SuiteResult res;
  res.name = "metrics";

  // The worked AP example: ranks 1 and 3 positive -> (1/1 + 2/3)/2.
  {
    const std::vector<std::string> ids = {"a", "b", "c"};
    const Vec scores = {0.9, 0.8, 0.7};
    const std::vector<char> pos = {1, 0, 1};
    const auto ap = average_precision(ids, scores, pos);
    res.check(ap && std::abs(*ap - 5.0 / 6.0) < 1e-9,
              "AP example (0.9/0.8/0.7, labels 1/0/1) != 0.83333...");
  }

  RngSource rng(seed);
  for (std::size_t k = 0; k < random_instances; ++k) {
    const std::size_t n = 4 + rng.index(40);
    std::vector<std::string> ids(n);
    Vec scores(n);
    std::vector<char> pos(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "v%03zu", i);
      ids[i] = buf;
      scores[i] = rng.uniform();
      if (rng.uniform() < 0.35) scores[i] = std::round(scores[i] * 10.0) / 10.0;  // force ties
      pos[i] = rng.uniform() < 0.4;
    }
    const auto got = average_precision(ids, scores, pos);
    const auto want = average_precision_reference(ids, scores, pos);
    const bool equal = got.has_value() == want.has_value() && (!got || *got == *want);
    res.check(equal, "random AP instance " + std::to_string(k) + " differs from oracle");
  }

  // Strictly monotone transforms leave accuracy and AP untouched.
  {
    const std::size_t n = 30, c = 3;
    ScoreTable table;
    GroundTruth truth;
    for (std::size_t cls = 0; cls < c; ++cls) {
      table.class_names.push_back("c" + std::to_string(cls));
      truth.class_names.push_back("c" + std::to_string(cls));
    }
    for (std::size_t i = 0; i < n; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "m%03zu", i);
      table.ids.push_back(buf);
      truth.ids.push_back(buf);
      Vec row(c);
      fill_uniform(row, rng, 0.0, 1.0);
      table.rows.push_back(row);
      Vec label(c, 0.0);
      label[rng.index(c)] = 1.0;
      truth.labels.push_back(label);
    }
    const double acc0 = accuracy(table, truth);
    const EvalReport rep0 = evaluate(table, truth);

    for (std::size_t t = 0; t < transforms; ++t) {
      const double a = rng.uniform(0.2, 3.0);
      const double b = rng.uniform(-2.0, 2.0);
      const std::size_t kind = rng.index(3);
      ScoreTable tf = table;
      for (Vec& row : tf.rows)
        for (double& v : row) {
          switch (kind) {
            case 0: v = a * v + b; break;
            case 1: v = std::exp(a * v) + b; break;
            default: v = a * (v + v * v * v) + b; break;
          }
        }
      const double acc1 = accuracy(tf, truth);
      res.check(acc1 == acc0, "accuracy changed under monotone transform " + std::to_string(t));
      const EvalReport rep1 = evaluate(tf, truth);
      bool aps_equal = rep0.class_ap.size() == rep1.class_ap.size();
      for (std::size_t cls = 0; aps_equal && cls < rep0.class_ap.size(); ++cls)
        aps_equal = rep0.class_ap[cls].has_value() == rep1.class_ap[cls].has_value() &&
                    (!rep0.class_ap[cls] || *rep0.class_ap[cls] == *rep1.class_ap[cls]);
      res.check(aps_equal, "AP changed under monotone transform " + std::to_string(t));
    }
  }
  return res;
}

}  // namespace seqfuse::verify
