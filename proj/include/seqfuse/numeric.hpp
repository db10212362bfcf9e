#pragma once

// Dense numeric kernel: row-major matrices, elementwise nonlinearities,
// softmax, and a seeded random source with a reproducible stream.
// Everything above this header is expressed in these terms; no BLAS,
// no sparse storage, doubles throughout.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqfuse {

using Vec = std::vector<double>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AlignmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Row-major dense matrix. Row index = output neuron for all weight
// matrices in this project.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: incompatible shapes " + shape_str(a) + " * " + shape_str(b));
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// out += m * v
inline void matvec_add(const Matrix& m, const Vec& v, Vec& out) {
  if (m.cols() != v.size() || m.rows() != out.size())
    throw ShapeError("matvec: matrix " + shape_str(m) + " with vector of length " +
                     std::to_string(v.size()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) acc += row[j] * v[j];
    out[i] += acc;
  }
}

inline Vec matvec(const Matrix& m, const Vec& v) {
  Vec out(m.rows(), 0.0);
  matvec_add(m, v, out);
  return out;
}

// out += m^T * v
inline void tmatvec_add(const Matrix& m, const Vec& v, Vec& out) {
  if (m.rows() != v.size() || m.cols() != out.size())
    throw ShapeError("tmatvec: matrix " + shape_str(m) + " with vector of length " +
                     std::to_string(v.size()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row_ptr(i);
    const double vi = v[i];
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += row[j] * vi;
  }
}

inline Vec tmatvec(const Matrix& m, const Vec& v) {
  Vec out(m.cols(), 0.0);
  tmatvec_add(m, v, out);
  return out;
}

// m += u * v^T
inline void add_outer(Matrix& m, const Vec& u, const Vec& v) {
  if (m.rows() != u.size() || m.cols() != v.size())
    throw ShapeError("add_outer: matrix " + shape_str(m) + " with vectors of length " +
                     std::to_string(u.size()) + ", " + std::to_string(v.size()));
  for (std::size_t i = 0; i < u.size(); ++i) {
    double* row = m.row_ptr(i);
    const double ui = u[i];
    for (std::size_t j = 0; j < v.size(); ++j) row[j] += ui * v[j];
  }
}

inline void axpy(double a, const Vec& x, Vec& y) {
  if (x.size() != y.size())
    throw ShapeError("axpy: vector lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()));
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

// Saturates instead of overflowing: exp(-x) is only evaluated for x >= 0.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double tanh_act(double x) { return std::tanh(x); }

inline Matrix sigmoid(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

inline Matrix tanh_act(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

// Max-subtracted softmax; safe for logits up to +-1e3 and beyond.
inline Vec softmax(const Vec& logits) {
  if (logits.empty()) throw ArgumentError("softmax: empty logits");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.data()); }

// Seeded random source. The raw stream is std::mt19937_64, whose output
// sequence is fixed by the C++ standard, so identical seeds produce
// identical streams across runs and platforms. Derived draws (uniform,
// gaussian, index, shuffle) are implemented here rather than with
// std::*_distribution, whose streams are implementation-defined.
class RngSource {
 public:
  explicit RngSource(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes exactly two draws.
  double gaussian() {
    const double a = uniform();
    const double b = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - a)) * std::cos(6.283185307179586476925287 * b);
  }

  // Uniform in [0, n); one draw per call, so streams stay aligned.
  std::size_t index(std::size_t n) {
    if (n == 0) throw ArgumentError("RngSource::index: empty range");
    return static_cast<std::size_t>(next_u64() % n);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

inline void fill_uniform(Matrix& m, RngSource& rng, double lo, double hi) {
  for (double& v : m.data()) v = rng.uniform(lo, hi);
}

inline void fill_uniform(Vec& v, RngSource& rng, double lo, double hi) {
  for (double& x : v) x = rng.uniform(lo, hi);
}

}  // namespace seqfuse
