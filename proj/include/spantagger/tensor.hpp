#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "spantagger/errors.hpp"

namespace spantagger {

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 (vector) or 2
// (matrix) is all the model needs.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
      n *= static_cast<std::size_t>(d);
    }
    t.shape = std::move(shape);
    t.v.assign(n, 0.0);
    return t;
  }

  static Tensor scalar(double x) {
    Tensor t;
    t.v.assign(1, x);
    return t;
  }

  static Tensor vec(std::vector<double> x) {
    Tensor t;
    t.shape = {static_cast<int>(x.size())};
    t.v = std::move(x);
    return t;
  }

  static Tensor matrix(int r, int c, std::vector<double> x) {
    Tensor t;
    if (static_cast<std::size_t>(r) * c != x.size())
      throw std::invalid_argument("matrix data does not match extents");
    t.shape = {r, c};
    t.v = std::move(x);
    return t;
  }

  int rank() const { return static_cast<int>(shape.size()); }

  std::size_t numel() const { return v.size(); }

  int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 1); }

  int cols() const {
    if (rank() == 2) return shape[1];
    if (rank() == 1) return shape[0];
    return 1;
  }

  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool all_finite(const Tensor& t) {
  for (double x : t.v)
    if (!std::isfinite(x)) return false;
  return true;
}

// C = A * B with a plain triple loop; inner extents must agree.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul: dimension mismatch");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    const double* arow = &a.v[static_cast<std::size_t>(i) * k];
    double* crow = &c.v[static_cast<std::size_t>(i) * n];
    for (int t = 0; t < k; ++t) {
      const double av = arow[t];
      if (av == 0.0) continue;
      const double* brow = &b.v[static_cast<std::size_t>(t) * n];
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 required");
  Tensor t = Tensor::zeros({a.cols(), a.rows()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// Masked softmax over a flat score vector. Masked positions come out exactly
// zero; the rest are normalized with max-subtraction.
inline std::vector<double> softmax_masked(const std::vector<double>& scores,
                                          const std::vector<bool>& mask) {
  if (scores.size() != mask.size())
    throw std::invalid_argument("softmax: mask length mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask[i]) mx = std::max(mx, scores[i]);
  if (!std::isfinite(mx))
    throw std::invalid_argument("softmax: degenerate neighborhood, all positions masked");
  std::vector<double> out(scores.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(scores[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask[i]) out[i] /= z;
  return out;
}

inline std::vector<double> softmax_all(const std::vector<double>& scores) {
  return softmax_masked(scores, std::vector<bool>(scores.size(), true));
}

inline double logsumexp(const std::vector<double>& xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

enum class Act { Relu, LeakyRelu, Sigmoid, Tanh };

inline double apply_act(double x, Act kind, double slope) {
  switch (kind) {
    case Act::Relu: return x > 0.0 ? x : 0.0;
    case Act::LeakyRelu: return x > 0.0 ? x : slope * x;
    case Act::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Act::Tanh: return std::tanh(x);
  }
  return x;
}

inline Tensor activation(const Tensor& t, Act kind, double slope = 0.01) {
  Tensor out = t;
  for (double& x : out.v) x = apply_act(x, kind, slope);
  return out;
}

enum class Mode { Train, Eval };

// Inverted dropout: survivors are scaled by 1/(1-rate) so eval needs no
// rescaling. Returns the element mask (0 or 1/(1-rate)) alongside the output.
inline std::pair<Tensor, Tensor> dropout(const Tensor& t, double rate, Mode mode,
                                         std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  Tensor mask = t;
  if (mode == Mode::Eval || rate == 0.0) {
    std::fill(mask.v.begin(), mask.v.end(), 1.0);
    return {t, mask};
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - rate);
  Tensor out = t;
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    const bool drop = u(rng) < rate;
    mask.v[i] = drop ? 0.0 : keep;
    out.v[i] *= mask.v[i];
  }
  return {out, mask};
}

}  // namespace spantagger
