#pragma once

// Multi-layer LSTM sequence classifier with peephole connections, trained
// by backpropagation through time. Per step, with x the layer input and
// sigma the logistic function:
//
//   i_t = sigma(W_xi x_t + W_hi h_{t-1} + W_ci c_{t-1} + b_i)
//   f_t = sigma(W_xf x_t + W_hf h_{t-1} + W_cf c_{t-1} + b_f)
//   c_t = f_t . c_{t-1} + i_t . tanh(W_xc x_t + W_hc h_{t-1} + b_c)
//   o_t = sigma(W_xo x_t + W_ho h_{t-1} + W_co c_t + b_o)     (new cell!)
//   h_t = o_t . tanh(c_t)
//
// Layer l > 1 consumes h_t of layer l-1. Class scores come from a softmax
// head over the last layer's hidden state at the final time step only.
// Peephole weights are full HxH matrices.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <utility>
#include <vector>

#include "seqfuse/binary_io.hpp"
#include "seqfuse/features.hpp"
#include "seqfuse/numeric.hpp"

namespace seqfuse {

struct LstmLayerParams {
  Matrix w_xi, w_hi, w_ci;
  Matrix w_xf, w_hf, w_cf;
  Matrix w_xc, w_hc;
  Matrix w_xo, w_ho, w_co;
  Vec b_i, b_f, b_c, b_o;

  std::size_t input_dim() const { return w_xi.cols(); }
  std::size_t hidden_dim() const { return w_xi.rows(); }
};

struct LstmStack {
  std::vector<LstmLayerParams> layers;
  Matrix head_w;  // C x H of last layer
  Vec head_b;     // C

  std::size_t num_layers() const { return layers.size(); }
  std::size_t num_classes() const { return head_b.size(); }
  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().input_dim(); }
};

// Cached activations of one layer at one time step, kept for BPTT.
struct LstmGates {
  Vec i, f, g, o;  // gate activations and cell candidate
  Vec c, h;
  Vec tanh_c;
};

struct LstmState {
  std::vector<std::vector<LstmGates>> layer_steps;  // [layer][t]
};

namespace detail {

inline void check_stack(const LstmStack& s) {
  if (s.layers.empty()) throw ShapeError("lstm: stack has no layers");
  if (s.num_classes() < 2) throw ShapeError("lstm: need at least 2 classes");
  for (std::size_t l = 1; l < s.layers.size(); ++l)
    if (s.layers[l].input_dim() != s.layers[l - 1].hidden_dim())
      throw ShapeError("lstm: layer " + std::to_string(l) + " input width " +
                       std::to_string(s.layers[l].input_dim()) + " != layer " +
                       std::to_string(l - 1) + " hidden width " +
                       std::to_string(s.layers[l - 1].hidden_dim()));
  if (s.head_w.cols() != s.layers.back().hidden_dim() || s.head_w.rows() != s.head_b.size())
    throw ShapeError("lstm: head shape " + shape_str(s.head_w) + " does not match stack");
}

}  // namespace detail

inline LstmGates lstm_step(const LstmLayerParams& p, const Vec& x, const Vec& h_prev,
                           const Vec& c_prev) {
  const std::size_t H = p.hidden_dim();
  if (x.size() != p.input_dim())
    throw ShapeError("lstm_step: input length " + std::to_string(x.size()) + ", layer expects " +
                     std::to_string(p.input_dim()));
  if (h_prev.size() != H || c_prev.size() != H)
    throw ShapeError("lstm_step: state length mismatch");

  LstmGates g;
  g.i = p.b_i;
  matvec_add(p.w_xi, x, g.i);
  matvec_add(p.w_hi, h_prev, g.i);
  matvec_add(p.w_ci, c_prev, g.i);
  for (double& v : g.i) v = sigmoid(v);

  g.f = p.b_f;
  matvec_add(p.w_xf, x, g.f);
  matvec_add(p.w_hf, h_prev, g.f);
  matvec_add(p.w_cf, c_prev, g.f);
  for (double& v : g.f) v = sigmoid(v);

  g.g = p.b_c;
  matvec_add(p.w_xc, x, g.g);
  matvec_add(p.w_hc, h_prev, g.g);
  for (double& v : g.g) v = std::tanh(v);

  g.c.resize(H);
  for (std::size_t j = 0; j < H; ++j) g.c[j] = g.f[j] * c_prev[j] + g.i[j] * g.g[j];

  g.o = p.b_o;
  matvec_add(p.w_xo, x, g.o);
  matvec_add(p.w_ho, h_prev, g.o);
  matvec_add(p.w_co, g.c, g.o);  // peephole reads the updated cell
  for (double& v : g.o) v = sigmoid(v);

  g.tanh_c.resize(H);
  g.h.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    g.tanh_c[j] = std::tanh(g.c[j]);
    g.h[j] = g.o[j] * g.tanh_c[j];
  }
  return g;
}

struct LstmForward {
  LstmState state;
  Vec probs;  // C, softmax over the final step of the top layer
};

inline LstmForward lstm_forward(const LstmStack& stack, const FeatureSequence& seq) {
  detail::check_stack(stack);
  if (seq.frames.empty()) throw ArgumentError("lstm_forward: empty sequence");
  if (seq.dim != stack.input_dim())
    throw ShapeError("lstm_forward: feature dim " + std::to_string(seq.dim) +
                     ", stack expects " + std::to_string(stack.input_dim()));

  const std::size_t K = stack.num_layers();
  const std::size_t T = seq.frames.size();
  LstmForward out;
  out.state.layer_steps.assign(K, {});
  for (std::size_t l = 0; l < K; ++l) out.state.layer_steps[l].reserve(T);

  for (std::size_t t = 0; t < T; ++t) {
    const Vec* input = &seq.frames[t];
    for (std::size_t l = 0; l < K; ++l) {
      const Vec zero(stack.layers[l].hidden_dim(), 0.0);
      const LstmGates* prev = t > 0 ? &out.state.layer_steps[l][t - 1] : nullptr;
      LstmGates g = lstm_step(stack.layers[l], *input, prev ? prev->h : zero,
                              prev ? prev->c : zero);
      out.state.layer_steps[l].push_back(std::move(g));
      input = &out.state.layer_steps[l].back().h;
    }
  }
  Vec logits = stack.head_b;
  matvec_add(stack.head_w, out.state.layer_steps[K - 1][T - 1].h, logits);
  out.probs = softmax(logits);
  return out;
}

inline double cross_entropy(const Vec& probs, const Vec& target) {
  if (probs.size() != target.size()) throw ShapeError("cross_entropy: length mismatch");
  double loss = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c)
    if (target[c] != 0.0) loss -= target[c] * std::log(std::max(probs[c], 1e-300));
  return loss;
}

inline Vec one_hot(std::size_t label, std::size_t classes) {
  if (label >= classes)
    throw ArgumentError("label " + std::to_string(label) + " outside [0, " +
                        std::to_string(classes) + ")");
  Vec v(classes, 0.0);
  v[label] = 1.0;
  return v;
}

struct LstmBptt {
  LstmStack grad;  // same shapes as the stack
  double loss = 0.0;
};

namespace detail {

inline LstmLayerParams zero_layer(std::size_t input_dim, std::size_t hidden) {
  LstmLayerParams p;
  p.w_xi = p.w_xf = p.w_xc = p.w_xo = Matrix(hidden, input_dim);
  p.w_hi = p.w_hf = p.w_hc = p.w_ho = Matrix(hidden, hidden);
  p.w_ci = p.w_cf = p.w_co = Matrix(hidden, hidden);
  p.b_i.assign(hidden, 0.0);
  p.b_f.assign(hidden, 0.0);
  p.b_c.assign(hidden, 0.0);
  p.b_o.assign(hidden, 0.0);
  return p;
}

inline LstmStack zeros_like(const LstmStack& s) {
  LstmStack z;
  for (const auto& l : s.layers) z.layers.push_back(zero_layer(l.input_dim(), l.hidden_dim()));
  z.head_w = Matrix(s.head_w.rows(), s.head_w.cols());
  z.head_b.assign(s.head_b.size(), 0.0);
  return z;
}

}  // namespace detail

// Exact gradients of the final-step cross-entropy w.r.t. every parameter,
// including all three peephole paths (W_ci and W_cf read c_{t-1}; W_co
// reads c_t, so its contribution flows back into dc_t before the cell
// recurrence is split).
inline LstmBptt lstm_bptt(const LstmStack& stack, const FeatureSequence& seq, const Vec& target) {
  if (target.size() != stack.num_classes())
    throw ArgumentError("lstm_bptt: target length " + std::to_string(target.size()) +
                        ", stack has " + std::to_string(stack.num_classes()) + " classes");
  LstmForward fwd = lstm_forward(stack, seq);

  const std::size_t K = stack.num_layers();
  const std::size_t T = seq.frames.size();

  LstmBptt out;
  out.loss = cross_entropy(fwd.probs, target);
  out.grad = detail::zeros_like(stack);

  // Softmax cross-entropy head.
  Vec dlogits(fwd.probs);
  for (std::size_t c = 0; c < dlogits.size(); ++c) dlogits[c] -= target[c];
  const Vec& h_top = fwd.state.layer_steps[K - 1][T - 1].h;
  add_outer(out.grad.head_w, dlogits, h_top);
  axpy(1.0, dlogits, out.grad.head_b);

  // Carries into time t-1, per layer.
  std::vector<Vec> dh_carry(K), dc_carry(K);
  for (std::size_t l = 0; l < K; ++l) {
    dh_carry[l].assign(stack.layers[l].hidden_dim(), 0.0);
    dc_carry[l].assign(stack.layers[l].hidden_dim(), 0.0);
  }
  dh_carry[K - 1] = tmatvec(stack.head_w, dlogits);

  for (std::size_t ti = T; ti-- > 0;) {
    // dx of layer l feeds dh of layer l-1 at the same time step.
    Vec dx_down;
    for (std::size_t li = K; li-- > 0;) {
      const LstmLayerParams& p = stack.layers[li];
      LstmLayerParams& gp = out.grad.layers[li];
      const LstmGates& g = fwd.state.layer_steps[li][ti];
      const std::size_t H = p.hidden_dim();

      const Vec zero(H, 0.0);
      const Vec& h_prev = ti > 0 ? fwd.state.layer_steps[li][ti - 1].h : zero;
      const Vec& c_prev = ti > 0 ? fwd.state.layer_steps[li][ti - 1].c : zero;
      const Vec& x = li > 0 ? fwd.state.layer_steps[li - 1][ti].h : seq.frames[ti];

      Vec dh = std::move(dh_carry[li]);
      if (li + 1 < K) axpy(1.0, dx_down, dh);
      Vec dc = std::move(dc_carry[li]);

      // h_t = o_t . tanh(c_t)
      Vec da_o(H);
      for (std::size_t j = 0; j < H; ++j) {
        const double dout = dh[j] * g.tanh_c[j];
        da_o[j] = dout * g.o[j] * (1.0 - g.o[j]);
        dc[j] += dh[j] * g.o[j] * (1.0 - g.tanh_c[j] * g.tanh_c[j]);
      }
      add_outer(gp.w_xo, da_o, x);
      add_outer(gp.w_ho, da_o, h_prev);
      add_outer(gp.w_co, da_o, g.c);
      axpy(1.0, da_o, gp.b_o);
      tmatvec_add(p.w_co, da_o, dc);  // output-gate peephole sees c_t

      Vec dx = tmatvec(p.w_xo, da_o);
      Vec dh_prev = tmatvec(p.w_ho, da_o);

      // c_t = f_t . c_{t-1} + i_t . g_t
      Vec da_i(H), da_f(H), da_g(H), dc_prev(H);
      for (std::size_t j = 0; j < H; ++j) {
        da_f[j] = dc[j] * c_prev[j] * g.f[j] * (1.0 - g.f[j]);
        da_i[j] = dc[j] * g.g[j] * g.i[j] * (1.0 - g.i[j]);
        da_g[j] = dc[j] * g.i[j] * (1.0 - g.g[j] * g.g[j]);
        dc_prev[j] = dc[j] * g.f[j];
      }

      add_outer(gp.w_xc, da_g, x);
      add_outer(gp.w_hc, da_g, h_prev);
      axpy(1.0, da_g, gp.b_c);
      tmatvec_add(p.w_xc, da_g, dx);
      tmatvec_add(p.w_hc, da_g, dh_prev);

      add_outer(gp.w_xf, da_f, x);
      add_outer(gp.w_hf, da_f, h_prev);
      add_outer(gp.w_cf, da_f, c_prev);
      axpy(1.0, da_f, gp.b_f);
      tmatvec_add(p.w_xf, da_f, dx);
      tmatvec_add(p.w_hf, da_f, dh_prev);
      tmatvec_add(p.w_cf, da_f, dc_prev);

      add_outer(gp.w_xi, da_i, x);
      add_outer(gp.w_hi, da_i, h_prev);
      add_outer(gp.w_ci, da_i, c_prev);
      axpy(1.0, da_i, gp.b_i);
      tmatvec_add(p.w_xi, da_i, dx);
      tmatvec_add(p.w_hi, da_i, dh_prev);
      tmatvec_add(p.w_ci, da_i, dc_prev);

      dh_carry[li] = std::move(dh_prev);
      dc_carry[li] = std::move(dc_prev);
      dx_down = std::move(dx);
    }
  }
  return out;
}

inline LstmBptt lstm_bptt(const LstmStack& stack, const FeatureSequence& seq, std::size_t label) {
  return lstm_bptt(stack, seq, one_hot(label, stack.num_classes()));
}

// Parameter traversal in declared order; shared by training, clipping,
// checkpoints and gradient checking.
inline std::vector<Matrix*> lstm_matrices(LstmStack& s) {
  std::vector<Matrix*> out;
  for (auto& l : s.layers)
    for (Matrix* m : {&l.w_xi, &l.w_hi, &l.w_ci, &l.w_xf, &l.w_hf, &l.w_cf, &l.w_xc, &l.w_hc,
                      &l.w_xo, &l.w_ho, &l.w_co})
      out.push_back(m);
  out.push_back(&s.head_w);
  return out;
}

inline std::vector<Vec*> lstm_vectors(LstmStack& s) {
  std::vector<Vec*> out;
  for (auto& l : s.layers)
    for (Vec* v : {&l.b_i, &l.b_f, &l.b_c, &l.b_o}) out.push_back(v);
  out.push_back(&s.head_b);
  return out;
}

// y += a * x over all parameters.
inline void lstm_axpy(double a, LstmStack& x, LstmStack& y) {
  auto xm = lstm_matrices(x), ym = lstm_matrices(y);
  for (std::size_t k = 0; k < xm.size(); ++k) axpy(a, xm[k]->data(), ym[k]->data());
  auto xv = lstm_vectors(x), yv = lstm_vectors(y);
  for (std::size_t k = 0; k < xv.size(); ++k) axpy(a, *xv[k], *yv[k]);
}

template <class F>
inline void lstm_for_each_param(LstmStack& s, F&& fn) {
  for (Matrix* m : lstm_matrices(s))
    for (double& v : m->data()) fn(v);
  for (Vec* v : lstm_vectors(s))
    for (double& x : *v) fn(x);
}

struct LstmTrainConfig {
  std::vector<std::size_t> hidden = {1024, 512};
  double learning_rate = 1e-4;
  double momentum = 0.9;
  std::size_t batch_size = 10;
  std::size_t epochs = 10;
  double clip = 5.0;  // per-element absolute threshold on the averaged gradient
  std::uint64_t seed = 1;
};

// Weights uniform in [-0.08, 0.08]; forget-gate bias starts at 1 so the
// cell state survives the first updates.
inline LstmStack init_lstm(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                           std::size_t classes, RngSource& rng) {
  if (hidden.empty()) throw ArgumentError("init_lstm: need at least one layer");
  if (classes < 2) throw ArgumentError("init_lstm: need at least 2 classes");
  if (input_dim == 0) throw ArgumentError("init_lstm: zero input dim");
  LstmStack s;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    if (h == 0) throw ArgumentError("init_lstm: zero hidden width");
    s.layers.push_back(detail::zero_layer(in, h));
    in = h;
  }
  s.head_w = Matrix(classes, in);
  s.head_b.assign(classes, 0.0);
  for (Matrix* m : lstm_matrices(s)) fill_uniform(*m, rng, -0.08, 0.08);
  for (Vec* v : lstm_vectors(s)) fill_uniform(*v, rng, -0.08, 0.08);
  for (auto& l : s.layers) l.b_f.assign(l.hidden_dim(), 1.0);
  return s;
}

struct LstmExample {
  FeatureSequence features;
  Vec target;  // length C; one-hot for single-label data
};

inline std::vector<LstmExample> lstm_examples(const std::vector<FeatureSequence>& seqs,
                                              const std::vector<std::size_t>& labels,
                                              std::size_t classes) {
  if (seqs.size() != labels.size()) throw ArgumentError("lstm_examples: length mismatch");
  std::vector<LstmExample> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i)
    out.push_back({seqs[i], one_hot(labels[i], classes)});
  return out;
}

// Mini-batch SGD with momentum. Sequences are processed one at a time
// within a batch and gradients averaged; per-element clipping is applied
// to the averaged gradient before the momentum update. Deterministic
// given the seed.
inline LstmStack train_lstm(const std::vector<LstmExample>& data, std::size_t classes,
                            const LstmTrainConfig& cfg,
                            std::vector<double>* epoch_mean_loss = nullptr) {
  if (data.empty()) throw ArgumentError("train_lstm: empty dataset");
  if (!(cfg.learning_rate > 0.0)) throw ArgumentError("train_lstm: learning rate must be > 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ArgumentError("train_lstm: momentum outside [0,1)");
  if (cfg.batch_size < 1) throw ArgumentError("train_lstm: batch size must be >= 1");

  const std::size_t dim = data.front().features.dim;
  for (const LstmExample& e : data) {
    if (e.features.dim != dim || e.features.frames.empty())
      throw DataError("train_lstm: inconsistent feature dims in dataset");
    if (e.target.size() != classes)
      throw DataError("train_lstm: target length does not match class count");
    double sum = 0.0;
    for (double v : e.target) {
      if (v < 0.0) throw DataError("train_lstm: negative target weight");
      sum += v;
    }
    if (sum <= 0.0) throw DataError("train_lstm: empty target");
  }

  RngSource rng(cfg.seed);
  LstmStack stack = init_lstm(dim, cfg.hidden, classes, rng);
  LstmStack velocity = detail::zeros_like(stack);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      LstmStack grad = detail::zeros_like(stack);
      for (std::size_t k = start; k < end; ++k) {
        const LstmExample& e = data[order[k]];
        double tsum = 0.0;
        for (double v : e.target) tsum += v;
        Vec target = e.target;
        for (double& v : target) v /= tsum;
        LstmBptt b = lstm_bptt(stack, e.features, target);
        lstm_axpy(1.0, b.grad, grad);
        loss_sum += b.loss;
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      const double clip = cfg.clip;
      lstm_for_each_param(grad, [&](double& v) {
        v *= scale;
        if (clip > 0.0) v = std::clamp(v, -clip, clip);
        if (!std::isfinite(v)) throw TrainingError("train_lstm: non-finite gradient");
      });
      // velocity = momentum * velocity - lr * grad; params += velocity
      lstm_for_each_param(velocity, [&](double& v) { v *= cfg.momentum; });
      lstm_axpy(-cfg.learning_rate, grad, velocity);
      lstm_axpy(1.0, velocity, stack);
    }
    if (epoch_mean_loss) epoch_mean_loss->push_back(loss_sum / static_cast<double>(data.size()));
  }
  return stack;
}

// Checkpoint: magic "HSLM" | u32 version=1 | u32 K | u32 C | u32 input_dim
// | K * u32 hidden | per layer the 11 matrices then the 4 biases in
// declared order | head weights | head bias. All reals are 64-bit
// little-endian.
inline constexpr char kLstmMagic[4] = {'H', 'S', 'L', 'M'};

inline void save_lstm(const std::filesystem::path& path, const LstmStack& stack) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  bin::put_magic(os, kLstmMagic);
  bin::put_u32(os, 1);
  bin::put_u32(os, static_cast<std::uint32_t>(stack.num_layers()));
  bin::put_u32(os, static_cast<std::uint32_t>(stack.num_classes()));
  bin::put_u32(os, static_cast<std::uint32_t>(stack.input_dim()));
  for (const auto& l : stack.layers) bin::put_u32(os, static_cast<std::uint32_t>(l.hidden_dim()));
  for (const auto& l : stack.layers) {
    for (const Matrix* m : {&l.w_xi, &l.w_hi, &l.w_ci, &l.w_xf, &l.w_hf, &l.w_cf, &l.w_xc,
                            &l.w_hc, &l.w_xo, &l.w_ho, &l.w_co})
      for (double v : m->data()) bin::put_f64(os, v);
    for (const Vec* v : {&l.b_i, &l.b_f, &l.b_c, &l.b_o})
      for (double x : *v) bin::put_f64(os, x);
  }
  for (double v : stack.head_w.data()) bin::put_f64(os, v);
  for (double v : stack.head_b) bin::put_f64(os, v);
  if (!os) throw DataError("write failed for " + path.string());
}

inline LstmStack load_lstm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("missing checkpoint " + path.string());
  bin::expect_magic(is, kLstmMagic, path.string());
  const std::uint32_t version = bin::get_u32(is, "version");
  if (version != 1) throw DataError("unsupported checkpoint version in " + path.string());
  const std::uint32_t layers = bin::get_u32(is, "layer count");
  const std::uint32_t classes = bin::get_u32(is, "class count");
  const std::uint32_t input_dim = bin::get_u32(is, "input dim");
  if (layers == 0 || classes < 2 || input_dim == 0)
    throw DataError("bad checkpoint header in " + path.string());
  std::vector<std::size_t> hidden(layers);
  for (auto& h : hidden) h = bin::get_u32(is, "hidden width");

  LstmStack s;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    s.layers.push_back(detail::zero_layer(in, h));
    in = h;
  }
  s.head_w = Matrix(classes, in);
  s.head_b.assign(classes, 0.0);
  for (auto& l : s.layers) {
    for (Matrix* m : {&l.w_xi, &l.w_hi, &l.w_ci, &l.w_xf, &l.w_hf, &l.w_cf, &l.w_xc, &l.w_hc,
                      &l.w_xo, &l.w_ho, &l.w_co})
      for (double& v : m->data()) v = bin::get_f64(is, path.string());
    for (Vec* v : {&l.b_i, &l.b_f, &l.b_c, &l.b_o})
      for (double& x : *v) x = bin::get_f64(is, path.string());
  }
  for (double& v : s.head_w.data()) v = bin::get_f64(is, path.string());
  for (double& v : s.head_b) v = bin::get_f64(is, path.string());
  char extra;
  if (is.get(extra)) throw DataError("trailing bytes in " + path.string());
  return s;
}

}  // namespace seqfuse
