#pragma once

// Dense double-precision kernels and first-order optimizers.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cln/errors.hpp"

namespace cln {

using Rng = std::mt19937_64;

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  Vector(std::initializer_list<double> init) : values_(init) {}
  explicit Vector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t dim() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> values_;
};

// Row-major dense matrix. Rows double as per-entity state vectors in the model.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    values_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw ShapeError("ragged matrix initializer");
      values_.insert(values_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline std::string shape_str(const Vector& v) { return "(" + std::to_string(v.dim()) + ")"; }

inline Vector affine(const Matrix& w, const Vector& x, const Vector& b) {
  if (w.cols() != x.dim() || w.rows() != b.dim()) {
    throw ShapeError("affine: W is " + shape_str(w) + ", x is " + shape_str(x) + ", b is " +
                     shape_str(b));
  }
  Vector out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double acc = 0.0;
    const auto wr = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) acc += wr[c] * x[c];
    out[r] = b[r] + acc;
  }
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vector relu(const Vector& x) {
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

inline Vector sigmoid(const Vector& x) {
  Vector out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

// In-place max-shifted softmax over a contiguous row.
inline void softmax_inplace(std::span<double> x) {
  if (x.empty()) return;
  const double peak = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (double& v : x) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : x) v /= total;
}

inline Vector softmax(const Vector& x) {
  if (x.dim() == 0) throw ShapeError("softmax of an empty vector");
  std::vector<double> v(x.values());
  softmax_inplace(v);
  return Vector(std::move(v));
}

// Inverted dropout: kept entries are scaled by 1/(1-rate) so inference needs no mask.
inline Vector dropout_mask(std::size_t dim, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  Vector mask(dim, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < dim; ++i) mask[i] = u(rng) < rate ? 0.0 : keep;
  return mask;
}

inline Matrix glorot_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) throw ShapeError("glorot_init needs positive dimensions");
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (double& v : m.span()) v = u(rng);
  return m;
}

// Y += scale * X * W^T, with X (n x k), W (m x k), Y (n x m).
inline void gemm_nt(const Matrix& x, const Matrix& w, double scale, Matrix& y) {
  assert(x.cols() == w.cols() && y.rows() == x.rows() && y.cols() == w.rows());
  const std::size_t k = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i).data();
    double* yi = y.row(i).data();
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const double* wo = w.row(o).data();
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += xi[c] * wo[c];
      yi[o] += scale * acc;
    }
  }
}

// G += scale * D^T * X, with D (n x m), X (n x k), G (m x k). Rows are reduced in order.
inline void gemm_tn(const Matrix& d, const Matrix& x, double scale, Matrix& g) {
  assert(d.rows() == x.rows() && g.rows() == d.cols() && g.cols() == x.cols());
  const std::size_t k = x.cols();
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const double* di = d.row(i).data();
    const double* xi = x.row(i).data();
    for (std::size_t o = 0; o < d.cols(); ++o) {
      const double s = scale * di[o];
      if (s == 0.0) continue;
      double* go = g.row(o).data();
      for (std::size_t c = 0; c < k; ++c) go[c] += s * xi[c];
    }
  }
}

// Y += scale * D * W, with D (n x m), W (m x k), Y (n x k).
inline void gemm_nn(const Matrix& d, const Matrix& w, double scale, Matrix& y) {
  assert(d.cols() == w.rows() && y.rows() == d.rows() && y.cols() == w.cols());
  const std::size_t k = w.cols();
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const double* di = d.row(i).data();
    double* yi = y.row(i).data();
    for (std::size_t o = 0; o < d.cols(); ++o) {
      const double s = scale * di[o];
      if (s == 0.0) continue;
      const double* wo = w.row(o).data();
      for (std::size_t c = 0; c < k; ++c) yi[c] += s * wo[c];
    }
  }
}

enum class OptimizerKind { Adam, RMSprop };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "rmsprop"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "rmsprop") return OptimizerKind::RMSprop;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or rmsprop)");
}

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rho = 0.9;
  double eps = 1e-8;
};

struct OptimizerState {
  OptimizerSettings settings;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first;   // Adam m
  std::vector<std::vector<double>> second;  // Adam v, RMSprop mean square

  OptimizerState() = default;
  explicit OptimizerState(OptimizerSettings s) : settings(s) {}
};

using ParamBlocks = std::vector<std::span<double>>;
using GradBlocks = std::vector<std::span<const double>>;

inline void optimizer_step(OptimizerState& state, const ParamBlocks& params, const GradBlocks& grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer_step: " + std::to_string(params.size()) + " parameter blocks but " +
                     std::to_string(grads.size()) + " gradient blocks");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size()) {
      throw ShapeError("optimizer_step: block " + std::to_string(b) + " has " +
                       std::to_string(params[b].size()) + " parameters but " +
                       std::to_string(grads[b].size()) + " gradients");
    }
  }
  if (state.step == 0) {
    state.first.assign(params.size(), {});
    state.second.assign(params.size(), {});
    for (std::size_t b = 0; b < params.size(); ++b) {
      if (state.settings.kind == OptimizerKind::Adam) state.first[b].assign(params[b].size(), 0.0);
      state.second[b].assign(params[b].size(), 0.0);
    }
  } else {
    if (state.second.size() != params.size()) throw ShapeError("optimizer_step: block count changed");
    for (std::size_t b = 0; b < params.size(); ++b) {
      if (state.second[b].size() != params[b].size()) {
        throw ShapeError("optimizer_step: accumulator shape mismatch at block " + std::to_string(b));
      }
    }
  }
  ++state.step;
  const auto& s = state.settings;
  if (s.kind == OptimizerKind::Adam) {
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(s.beta1, t);
    const double c2 = 1.0 - std::pow(s.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto& m = state.first[b];
      auto& v = state.second[b];
      for (std::size_t i = 0; i < params[b].size(); ++i) {
        const double g = grads[b][i];
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
        params[b][i] -= s.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.eps);
      }
    }
  } else {
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto& v = state.second[b];
      for (std::size_t i = 0; i < params[b].size(); ++i) {
        const double g = grads[b][i];
        v[i] = s.rho * v[i] + (1.0 - s.rho) * g * g;
        params[b][i] -= s.lr * g / (std::sqrt(v[i]) + s.eps);
      }
    }
  }
}

inline bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace cln
