#pragma once

// Regularized feature fusion network. Two per-stream abstraction layers
// feed a fusion layer whose incoming concatenated weight matrix
// W = [W_s | W_m] (P x D, spatial block first) carries structural
// penalties, followed by a per-class sigmoid output layer:
//
//   h_s = sigma(A_s x_s + b_s)        h_m = sigma(A_m x_m + b_m)
//   z   = sigma(W_s h_s + W_m h_m + b)
//   out = sigma(O z + b_o)
//
// Training objective over a batch:
//
//   sum_i loss(out_i, y_i) + lambda1 * Phi + (lambda2/2)*||W||_{2,1}
//                                          + lambda3 *||W||_{1,1}
//
// where Phi is the sum of squared Frobenius norms of all four weight
// matrices (biases unregularized) and loss is the squared error by
// default (per-class logistic cross-entropy as a switch). The smooth part
// is minimized by gradient descent; the structural part by a closed-form
// proximal step on W only: rows are soft-thresholded elementwise by
// tau3 = eta*lambda3, then group-shrunk by tau2 = eta*lambda2, with rows
// whose thresholded norm is <= tau2 set to exact zero.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "seqfuse/binary_io.hpp"
#include "seqfuse/features.hpp"
#include "seqfuse/numeric.hpp"

namespace seqfuse {

enum class FusionLoss { squared, logistic };

struct FusionNet {
  Matrix spatial_abs;  // n_s x d_s
  Vec spatial_abs_bias;
  Matrix motion_abs;  // n_m x d_m
  Vec motion_abs_bias;
  Matrix fusion;  // P x (n_s + n_m), spatial columns first
  Vec fusion_bias;
  Matrix output;  // C x P
  Vec output_bias;

  std::size_t spatial_dim() const { return spatial_abs.cols(); }
  std::size_t motion_dim() const { return motion_abs.cols(); }
  std::size_t spatial_abs_width() const { return spatial_abs.rows(); }
  std::size_t motion_abs_width() const { return motion_abs.rows(); }
  std::size_t fusion_width() const { return fusion.rows(); }
  std::size_t num_classes() const { return output.rows(); }
};

struct FusionHyper {
  double lambda1 = 3e-5;  // Frobenius regularizer weight
  double lambda2 = 0.0;   // row-group (l21) weight on the fusion matrix
  double lambda3 = 0.0;   // elementwise (l11) weight on the fusion matrix
  double learning_rate = 0.7;
  double momentum = 0.0;
  std::size_t epochs = 100;
  std::size_t batch_size = 10;
  std::uint64_t seed = 1;
  FusionLoss loss = FusionLoss::squared;
};

struct FusionArch {
  std::size_t spatial_abs_width = 200;
  std::size_t motion_abs_width = 200;
  std::size_t fusion_width = 200;
};

// Video-level sample: average-pooled features plus the label vector.
struct PooledSample {
  std::string id;
  Vec spatial;
  Vec motion;
  Vec label;  // length C
};

inline PooledSample pool_sample(const VideoSample& v) {
  return {v.id, average_pool(v.spatial), average_pool(v.motion), v.label};
}

inline std::vector<PooledSample> pool_dataset(const Dataset& ds) {
  std::vector<PooledSample> out;
  out.reserve(ds.samples.size());
  for (const VideoSample& v : ds.samples) out.push_back(pool_sample(v));
  return out;
}

struct FusionActivations {
  Vec h_s, h_m, fused, scores;
};

inline FusionActivations fusion_forward_cached(const FusionNet& net, const Vec& x_s,
                                               const Vec& x_m) {
  if (x_s.size() != net.spatial_dim() || x_m.size() != net.motion_dim())
    throw ShapeError("fusion_forward: input dims (" + std::to_string(x_s.size()) + ", " +
                     std::to_string(x_m.size()) + "), network expects (" +
                     std::to_string(net.spatial_dim()) + ", " + std::to_string(net.motion_dim()) +
                     ")");
  FusionActivations a;
  a.h_s = net.spatial_abs_bias;
  matvec_add(net.spatial_abs, x_s, a.h_s);
  for (double& v : a.h_s) v = sigmoid(v);

  a.h_m = net.motion_abs_bias;
  matvec_add(net.motion_abs, x_m, a.h_m);
  for (double& v : a.h_m) v = sigmoid(v);

  a.fused = net.fusion_bias;
  // fusion columns: spatial block then motion block
  const std::size_t ns = net.spatial_abs_width();
  for (std::size_t r = 0; r < net.fusion_width(); ++r) {
    const double* row = net.fusion.row_ptr(r);
    double acc = a.fused[r];
    for (std::size_t j = 0; j < ns; ++j) acc += row[j] * a.h_s[j];
    for (std::size_t j = 0; j < a.h_m.size(); ++j) acc += row[ns + j] * a.h_m[j];
    a.fused[r] = acc;
  }
  for (double& v : a.fused) v = sigmoid(v);

  a.scores = net.output_bias;
  matvec_add(net.output, a.fused, a.scores);
  for (double& v : a.scores) v = sigmoid(v);
  return a;
}

inline Vec fusion_forward(const FusionNet& net, const Vec& x_s, const Vec& x_m) {
  return fusion_forward_cached(net, x_s, x_m).scores;
}

// ||W||_{2,1}: sum over rows of the row 2-norms.
inline double norm_l21(const Matrix& w) {
  double total = 0.0;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* row = w.row_ptr(r);
    double sq = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) sq += row[j] * row[j];
    total += std::sqrt(sq);
  }
  return total;
}

// ||W||_{1,1}: sum of absolute values.
inline double norm_l11(const Matrix& w) {
  double total = 0.0;
  for (double v : w.data()) total += std::abs(v);
  return total;
}

inline double frobenius_sq(const Matrix& w) {
  double total = 0.0;
  for (double v : w.data()) total += v * v;
  return total;
}

namespace detail {

inline double sample_loss(const Vec& scores, const Vec& label, FusionLoss kind) {
  if (scores.size() != label.size()) throw ShapeError("fusion loss: label length mismatch");
  double loss = 0.0;
  if (kind == FusionLoss::squared) {
    for (std::size_t c = 0; c < scores.size(); ++c) {
      const double e = scores[c] - label[c];
      loss += e * e;
    }
  } else {
    for (std::size_t c = 0; c < scores.size(); ++c) {
      const double s = std::clamp(scores[c], 1e-12, 1.0 - 1e-12);
      loss -= label[c] * std::log(s) + (1.0 - label[c]) * std::log(1.0 - s);
    }
  }
  return loss;
}

}  // namespace detail

struct FusionObjectiveParts {
  double total = 0.0;
  double loss = 0.0;       // sum over the batch
  double frob = 0.0;       // lambda1 * Phi
  double l21 = 0.0;        // (lambda2/2) * ||W||_21
  double l11 = 0.0;        // lambda3 * ||W||_11
};

inline FusionObjectiveParts fusion_objective_parts(const FusionNet& net,
                                                   std::span<const PooledSample> batch,
                                                   const FusionHyper& hyper) {
  if (batch.empty()) throw ArgumentError("fusion_objective: empty batch");
  FusionObjectiveParts parts;
  for (const PooledSample& s : batch) {
    const Vec scores = fusion_forward(net, s.spatial, s.motion);
    parts.loss += detail::sample_loss(scores, s.label, hyper.loss);
  }
  const double phi = frobenius_sq(net.spatial_abs) + frobenius_sq(net.motion_abs) +
                     frobenius_sq(net.fusion) + frobenius_sq(net.output);
  parts.frob = hyper.lambda1 * phi;
  parts.l21 = 0.5 * hyper.lambda2 * norm_l21(net.fusion);
  parts.l11 = hyper.lambda3 * norm_l11(net.fusion);
  parts.total = parts.loss + parts.frob + parts.l21 + parts.l11;
  return parts;
}

inline double fusion_objective(const FusionNet& net, std::span<const PooledSample> batch,
                               const FusionHyper& hyper) {
  return fusion_objective_parts(net, batch, hyper).total;
}

// Proximal map of tau2*||.||_2 + tau3*||.||_1 applied to one row:
// elementwise soft threshold by tau3, then group shrink by tau2. Rows
// whose thresholded norm is <= tau2 collapse to exact zeros.
inline void prox_row_inplace(double* row, std::size_t n, double tau2, double tau3) {
  double sq = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double v = row[j];
    if (v > tau3)
      v -= tau3;
    else if (v < -tau3)
      v += tau3;
    else
      v = 0.0;
    row[j] = v;
    sq += v * v;
  }
  const double nrm = std::sqrt(sq);
  if (nrm <= tau2) {
    for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
  } else if (tau2 > 0.0) {
    const double scale = 1.0 - tau2 / nrm;
    for (std::size_t j = 0; j < n; ++j) row[j] *= scale;
  }
}

inline Vec prox_row(const Vec& v, double tau2, double tau3) {
  Vec out = v;
  prox_row_inplace(out.data(), out.size(), tau2, tau3);
  return out;
}

inline void prox_l21_l11_inplace(Matrix& m, double tau2, double tau3) {
  if (tau2 < 0.0 || tau3 < 0.0) throw ArgumentError("prox_l21_l11: negative threshold");
  for (std::size_t r = 0; r < m.rows(); ++r) prox_row_inplace(m.row_ptr(r), m.cols(), tau2, tau3);
}

inline Matrix prox_l21_l11(const Matrix& v, double tau2, double tau3) {
  Matrix out = v;
  prox_l21_l11_inplace(out, tau2, tau3);
  return out;
}

inline std::size_t count_zero_rows(const Matrix& w) {
  std::size_t zeros = 0;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* row = w.row_ptr(r);
    bool all = true;
    for (std::size_t j = 0; j < w.cols() && all; ++j) all = row[j] == 0.0;
    zeros += all;
  }
  return zeros;
}

inline std::vector<Matrix*> fusion_matrices(FusionNet& n) {
  return {&n.spatial_abs, &n.motion_abs, &n.fusion, &n.output};
}

inline std::vector<Vec*> fusion_vectors(FusionNet& n) {
  return {&n.spatial_abs_bias, &n.motion_abs_bias, &n.fusion_bias, &n.output_bias};
}

inline const char* fusion_layer_name(std::size_t idx) {
  constexpr const char* names[] = {"spatial abstraction", "motion abstraction", "fusion",
                                   "output"};
  return names[idx];
}

namespace detail {

inline FusionNet fusion_zeros_like(const FusionNet& n) {
  FusionNet z;
  z.spatial_abs = Matrix(n.spatial_abs.rows(), n.spatial_abs.cols());
  z.motion_abs = Matrix(n.motion_abs.rows(), n.motion_abs.cols());
  z.fusion = Matrix(n.fusion.rows(), n.fusion.cols());
  z.output = Matrix(n.output.rows(), n.output.cols());
  z.spatial_abs_bias.assign(n.spatial_abs_bias.size(), 0.0);
  z.motion_abs_bias.assign(n.motion_abs_bias.size(), 0.0);
  z.fusion_bias.assign(n.fusion_bias.size(), 0.0);
  z.output_bias.assign(n.output_bias.size(), 0.0);
  return z;
}

}  // namespace detail

// Gradient of the smooth part p = sum_i loss_i + lambda1 * Phi.
inline FusionNet fusion_smooth_gradient(const FusionNet& net, std::span<const PooledSample> batch,
                                        const FusionHyper& hyper) {
  if (batch.empty()) throw ArgumentError("fusion_smooth_gradient: empty batch");
  FusionNet g = detail::fusion_zeros_like(net);
  const std::size_t ns = net.spatial_abs_width();
  const std::size_t nm = net.motion_abs_width();

  for (const PooledSample& s : batch) {
    if (s.label.size() != net.num_classes())
      throw ShapeError("fusion: label length " + std::to_string(s.label.size()) +
                       ", network has " + std::to_string(net.num_classes()) + " classes");
    const FusionActivations a = fusion_forward_cached(net, s.spatial, s.motion);

    // d(loss)/d(output pre-activation)
    Vec dz_o(net.num_classes());
    for (std::size_t c = 0; c < dz_o.size(); ++c) {
      const double sc = a.scores[c];
      if (hyper.loss == FusionLoss::squared)
        dz_o[c] = 2.0 * (sc - s.label[c]) * sc * (1.0 - sc);
      else
        dz_o[c] = sc - s.label[c];
    }
    add_outer(g.output, dz_o, a.fused);
    axpy(1.0, dz_o, g.output_bias);

    Vec dfused = tmatvec(net.output, dz_o);
    Vec dz_e(net.fusion_width());
    for (std::size_t r = 0; r < dz_e.size(); ++r)
      dz_e[r] = dfused[r] * a.fused[r] * (1.0 - a.fused[r]);
    axpy(1.0, dz_e, g.fusion_bias);
    for (std::size_t r = 0; r < dz_e.size(); ++r) {
      double* grow = g.fusion.row_ptr(r);
      const double d = dz_e[r];
      for (std::size_t j = 0; j < ns; ++j) grow[j] += d * a.h_s[j];
      for (std::size_t j = 0; j < nm; ++j) grow[ns + j] += d * a.h_m[j];
    }

    Vec dh_s(ns, 0.0), dh_m(nm, 0.0);
    for (std::size_t r = 0; r < dz_e.size(); ++r) {
      const double* row = net.fusion.row_ptr(r);
      const double d = dz_e[r];
      for (std::size_t j = 0; j < ns; ++j) dh_s[j] += row[j] * d;
      for (std::size_t j = 0; j < nm; ++j) dh_m[j] += row[ns + j] * d;
    }
    for (std::size_t j = 0; j < ns; ++j) dh_s[j] *= a.h_s[j] * (1.0 - a.h_s[j]);
    for (std::size_t j = 0; j < nm; ++j) dh_m[j] *= a.h_m[j] * (1.0 - a.h_m[j]);
    add_outer(g.spatial_abs, dh_s, s.spatial);
    axpy(1.0, dh_s, g.spatial_abs_bias);
    add_outer(g.motion_abs, dh_m, s.motion);
    axpy(1.0, dh_m, g.motion_abs_bias);
  }

  // lambda1 * Phi contributes 2*lambda1*W to every weight matrix.
  auto gm = fusion_matrices(g);
  const Matrix* nmats[] = {&net.spatial_abs, &net.motion_abs, &net.fusion, &net.output};
  for (std::size_t k = 0; k < gm.size(); ++k)
    axpy(2.0 * hyper.lambda1, nmats[k]->data(), gm[k]->data());
  return g;
}

// One proximal-gradient step: descend the smooth part on every layer
// (with momentum), then apply the closed-form prox to the fusion matrix
// only, with thresholds scaled by the learning rate. Biases carry no
// structural penalty.
inline void fusion_train_step(FusionNet& net, std::span<const PooledSample> batch,
                              const FusionHyper& hyper, FusionNet& velocity) {
  FusionNet g = fusion_smooth_gradient(net, batch, hyper);

  auto gm = fusion_matrices(g);
  for (std::size_t k = 0; k < gm.size(); ++k)
    if (!all_finite(*gm[k]))
      throw TrainingError(std::string("fusion_train_step: non-finite gradient in ") +
                          fusion_layer_name(k) + " layer");
  auto gv = fusion_vectors(g);
  for (std::size_t k = 0; k < gv.size(); ++k)
    if (!all_finite(*gv[k]))
      throw TrainingError(std::string("fusion_train_step: non-finite gradient in ") +
                          fusion_layer_name(k) + " bias");

  auto vm = fusion_matrices(velocity);
  auto nm = fusion_matrices(net);
  for (std::size_t k = 0; k < nm.size(); ++k) {
    for (double& v : vm[k]->data()) v *= hyper.momentum;
    axpy(-hyper.learning_rate, gm[k]->data(), vm[k]->data());
    axpy(1.0, vm[k]->data(), nm[k]->data());
  }
  auto vv = fusion_vectors(velocity);
  auto nv = fusion_vectors(net);
  for (std::size_t k = 0; k < nv.size(); ++k) {
    for (double& v : *vv[k]) v *= hyper.momentum;
    axpy(-hyper.learning_rate, *gv[k], *vv[k]);
    axpy(1.0, *vv[k], *nv[k]);
  }

  if (hyper.lambda2 > 0.0 || hyper.lambda3 > 0.0)
    prox_l21_l11_inplace(net.fusion, hyper.learning_rate * hyper.lambda2,
                         hyper.learning_rate * hyper.lambda3);
}

// Glorot-style uniform init.
inline FusionNet init_fusion(std::size_t d_s, std::size_t d_m, const FusionArch& arch,
                             std::size_t classes, RngSource& rng) {
  if (d_s == 0 || d_m == 0) throw ArgumentError("init_fusion: zero input dim");
  if (classes < 2) throw ArgumentError("init_fusion: need at least 2 classes");
  if (arch.spatial_abs_width == 0 || arch.motion_abs_width == 0 || arch.fusion_width == 0)
    throw ArgumentError("init_fusion: zero layer width");
  FusionNet n;
  n.spatial_abs = Matrix(arch.spatial_abs_width, d_s);
  n.motion_abs = Matrix(arch.motion_abs_width, d_m);
  n.fusion = Matrix(arch.fusion_width, arch.spatial_abs_width + arch.motion_abs_width);
  n.output = Matrix(classes, arch.fusion_width);
  n.spatial_abs_bias.assign(arch.spatial_abs_width, 0.0);
  n.motion_abs_bias.assign(arch.motion_abs_width, 0.0);
  n.fusion_bias.assign(arch.fusion_width, 0.0);
  n.output_bias.assign(classes, 0.0);
  for (Matrix* m : fusion_matrices(n)) {
    const double r = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
    fill_uniform(*m, rng, -r, r);
  }
  return n;
}

struct FusionEpochStats {
  std::size_t epoch = 0;
  double objective = 0.0;
  double loss = 0.0;
  double frob = 0.0;
  double l21 = 0.0;
  double l11 = 0.0;
  std::size_t zero_rows = 0;
};

struct FusionTrainResult {
  FusionNet net;
  double final_objective = 0.0;
  std::vector<FusionEpochStats> log;  // one entry per epoch, on the full dataset
};

inline FusionTrainResult train_fusion(const std::vector<PooledSample>& data,
                                      const FusionArch& arch, const FusionHyper& hyper) {
  if (data.empty()) throw ArgumentError("train_fusion: empty dataset");
  if (!(hyper.learning_rate > 0.0)) throw ArgumentError("train_fusion: learning rate must be > 0");
  if (hyper.lambda1 < 0.0 || hyper.lambda2 < 0.0 || hyper.lambda3 < 0.0)
    throw ArgumentError("train_fusion: negative regularizer weight");
  if (hyper.momentum < 0.0 || hyper.momentum >= 1.0)
    throw ArgumentError("train_fusion: momentum outside [0,1)");
  if (hyper.batch_size < 1) throw ArgumentError("train_fusion: batch size must be >= 1");
  const std::size_t d_s = data.front().spatial.size();
  const std::size_t d_m = data.front().motion.size();
  const std::size_t classes = data.front().label.size();
  for (const PooledSample& s : data)
    if (s.spatial.size() != d_s || s.motion.size() != d_m || s.label.size() != classes)
      throw DataError("train_fusion: inconsistent dims in dataset (sample " + s.id + ")");

  RngSource rng(hyper.seed);
  FusionTrainResult res;
  res.net = init_fusion(d_s, d_m, arch, classes, rng);
  FusionNet velocity = detail::fusion_zeros_like(res.net);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PooledSample> batch;

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
      fusion_train_step(res.net, batch, hyper, velocity);
    }
    const FusionObjectiveParts parts = fusion_objective_parts(res.net, data, hyper);
    res.log.push_back({epoch, parts.total, parts.loss, parts.frob, parts.l21, parts.l11,
                       count_zero_rows(res.net.fusion)});
    res.final_objective = parts.total;
  }
  if (hyper.epochs == 0)
    res.final_objective = fusion_objective(res.net, data, hyper);
  return res;
}

// Checkpoint: magic "HSFN" | u32 version=1 | u32 d_s | u32 d_m | u32 n_s |
// u32 n_m | u32 P | u32 C | matrices and biases in declared order, 64-bit
// little-endian reals.
inline constexpr char kFusionMagic[4] = {'H', 'S', 'F', 'N'};

inline void save_fusion(const std::filesystem::path& path, const FusionNet& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  bin::put_magic(os, kFusionMagic);
  bin::put_u32(os, 1);
  bin::put_u32(os, static_cast<std::uint32_t>(net.spatial_dim()));
  bin::put_u32(os, static_cast<std::uint32_t>(net.motion_dim()));
  bin::put_u32(os, static_cast<std::uint32_t>(net.spatial_abs_width()));
  bin::put_u32(os, static_cast<std::uint32_t>(net.motion_abs_width()));
  bin::put_u32(os, static_cast<std::uint32_t>(net.fusion_width()));
  bin::put_u32(os, static_cast<std::uint32_t>(net.num_classes()));
  for (const Matrix* m : {&net.spatial_abs, &net.motion_abs, &net.fusion, &net.output})
    for (double v : m->data()) bin::put_f64(os, v);
  for (const Vec* v : {&net.spatial_abs_bias, &net.motion_abs_bias, &net.fusion_bias,
                       &net.output_bias})
    for (double x : *v) bin::put_f64(os, x);
  if (!os) throw DataError("write failed for " + path.string());
}

inline FusionNet load_fusion(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("missing checkpoint " + path.string());
  bin::expect_magic(is, kFusionMagic, path.string());
  if (bin::get_u32(is, "version") != 1)
    throw DataError("unsupported checkpoint version in " + path.string());
  const std::size_t d_s = bin::get_u32(is, "spatial dim");
  const std::size_t d_m = bin::get_u32(is, "motion dim");
  const std::size_t n_s = bin::get_u32(is, "spatial width");
  const std::size_t n_m = bin::get_u32(is, "motion width");
  const std::size_t p = bin::get_u32(is, "fusion width");
  const std::size_t c = bin::get_u32(is, "class count");
  if (d_s == 0 || d_m == 0 || n_s == 0 || n_m == 0 || p == 0 || c < 2)
    throw DataError("bad checkpoint header in " + path.string());
  FusionNet n;
  n.spatial_abs = Matrix(n_s, d_s);
  n.motion_abs = Matrix(n_m, d_m);
  n.fusion = Matrix(p, n_s + n_m);
  n.output = Matrix(c, p);
  n.spatial_abs_bias.assign(n_s, 0.0);
  n.motion_abs_bias.assign(n_m, 0.0);
  n.fusion_bias.assign(p, 0.0);
  n.output_bias.assign(c, 0.0);
  for (Matrix* m : fusion_matrices(n))
    for (double& v : m->data()) v = bin::get_f64(is, path.string());
  for (Vec* v : fusion_vectors(n))
    for (double& x : *v) x = bin::get_f64(is, path.string());
  char extra;
  if (is.get(extra)) throw DataError("trailing bytes in " + path.string());
  return n;
}

}  // namespace seqfuse
