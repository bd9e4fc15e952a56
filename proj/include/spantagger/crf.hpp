#pragma once

#include <string>
#include <utility>
#include <vector>

#include "spantagger/corpus.hpp"
#include "spantagger/tape.hpp"
#include "spantagger/tensor.hpp"

namespace spantagger {

// Transition matrix layout: A is (K+2)x(K+2) with two virtual states,
// start = K and end = K+1. Transitions into start and out of end are pinned
// to kForbidden and never trained.
constexpr double kForbidden = -1e4;

inline int crf_start(int K) { return K; }
inline int crf_end(int K) { return K + 1; }

inline Tensor crf_init_transitions(int K) {
  Tensor A = Tensor::zeros({K + 2, K + 2});
  for (int i = 0; i < K + 2; ++i) {
    A.at(i, crf_start(K)) = kForbidden;
    A.at(crf_end(K), i) = kForbidden;
  }
  return A;
}

// Re-assert the structural pins (used after every optimizer step).
inline void crf_repin(Tensor& A) {
  const int K = A.rows() - 2;
  for (int i = 0; i < K + 2; ++i) {
    A.at(i, crf_start(K)) = kForbidden;
    A.at(crf_end(K), i) = kForbidden;
  }
}

// Optional ablation: additionally pin transitions a well-formed BIEOS
// sequence can never take.
inline void crf_pin_bieos(Tensor& A, const std::vector<std::string>& tags) {
  const int K = static_cast<int>(tags.size());
  if (A.rows() != K + 2) throw std::invalid_argument("crf_pin_bieos: shape mismatch");
  for (int i = 0; i < K; ++i) {
    if (!bieos_can_start(tags[i])) A.at(crf_start(K), i) = kForbidden;
    if (!bieos_can_end(tags[i])) A.at(i, crf_end(K)) = kForbidden;
    for (int j = 0; j < K; ++j)
      if (!bieos_can_follow(tags[i], tags[j])) A.at(i, j) = kForbidden;
  }
}

namespace detail {
inline void crf_check(const Tensor& P, const Tensor& A) {
  if (P.rank() != 2 || A.rank() != 2) throw std::invalid_argument("crf: P and A must be matrices");
  if (A.rows() != A.cols() || A.rows() != P.cols() + 2)
    throw std::invalid_argument("crf: A must be (K+2)x(K+2) for P with K columns");
  if (P.rows() < 1) throw std::invalid_argument("crf: empty emission matrix");
}
}  // namespace detail

// S(x,y) = A[start][y_1] + sum_t P[t][y_t] + sum_t A[y_t][y_{t+1}] + A[y_T][end].
inline double sequence_score(const Tensor& P, const std::vector<int>& y, const Tensor& A) {
  detail::crf_check(P, A);
  const int T = P.rows(), K = P.cols();
  if (static_cast<int>(y.size()) != T)
    throw std::invalid_argument("sequence_score: tag sequence length mismatch");
  for (int t : y)
    if (t < 0 || t >= K) throw std::invalid_argument("sequence_score: tag id out of range");
  double s = A.at(crf_start(K), y[0]);
  for (int t = 0; t < T; ++t) {
    s += P.at(t, y[t]);
    if (t + 1 < T) s += A.at(y[t], y[t + 1]);
  }
  s += A.at(y[T - 1], crf_end(K));
  return s;
}

// log sum over all K^T sequences of exp(S), by the forward recursion in log
// space.
inline double log_partition(const Tensor& P, const Tensor& A) {
  detail::crf_check(P, A);
  const int T = P.rows(), K = P.cols();
  std::vector<double> alpha(K), next(K);
  for (int j = 0; j < K; ++j) alpha[j] = A.at(crf_start(K), j) + P.at(0, j);
  std::vector<double> terms(K);
  for (int t = 1; t < T; ++t) {
    for (int j = 0; j < K; ++j) {
      for (int i = 0; i < K; ++i) terms[i] = alpha[i] + A.at(i, j);
      next[j] = logsumexp(terms) + P.at(t, j);
    }
    alpha.swap(next);
  }
  for (int j = 0; j < K; ++j) terms[j] = alpha[j] + A.at(j, crf_end(K));
  return logsumexp(terms);
}

// Max-scoring sequence and its score. Argmax scans candidate tags in
// ascending id order and replaces only on strict improvement, which makes the
// returned sequence the one with the smallest tag id at the latest position
// where two equally scored sequences differ.
inline std::pair<std::vector<int>, double> viterbi(const Tensor& P, const Tensor& A) {
  detail::crf_check(P, A);
  const int T = P.rows(), K = P.cols();
  std::vector<std::vector<double>> delta(T, std::vector<double>(K));
  std::vector<std::vector<int>> bp(T, std::vector<int>(K, -1));
  for (int j = 0; j < K; ++j) delta[0][j] = A.at(crf_start(K), j) + P.at(0, j);
  for (int t = 1; t < T; ++t)
    for (int j = 0; j < K; ++j) {
      double best = delta[t - 1][0] + A.at(0, j);
      int arg = 0;
      for (int i = 1; i < K; ++i) {
        const double s = delta[t - 1][i] + A.at(i, j);
        if (s > best) {
          best = s;
          arg = i;
        }
      }
      delta[t][j] = best + P.at(t, j);
      bp[t][j] = arg;
    }
  double best = delta[T - 1][0] + A.at(0, crf_end(K));
  int arg = 0;
  for (int j = 1; j < K; ++j) {
    const double s = delta[T - 1][j] + A.at(j, crf_end(K));
    if (s > best) {
      best = s;
      arg = j;
    }
  }
  std::vector<int> path(T);
  path[T - 1] = arg;
  for (int t = T - 1; t > 0; --t) path[t - 1] = bp[t][path[t]];
  return {path, best};
}

// Posterior node marginals p(y_t = j | x) and expected transition counts,
// from one forward and one backward pass.
struct CrfMarginals {
  Tensor node;  // T x K
  Tensor edge;  // (K+2) x (K+2) expected transition counts
  double logZ = 0.0;
};

inline CrfMarginals crf_marginals(const Tensor& P, const Tensor& A) {
  detail::crf_check(P, A);
  const int T = P.rows(), K = P.cols();
  const int s = crf_start(K), e = crf_end(K);
  std::vector<std::vector<double>> alpha(T, std::vector<double>(K));
  std::vector<std::vector<double>> beta(T, std::vector<double>(K));
  std::vector<double> terms(K);
  for (int j = 0; j < K; ++j) alpha[0][j] = A.at(s, j) + P.at(0, j);
  for (int t = 1; t < T; ++t)
    for (int j = 0; j < K; ++j) {
      for (int i = 0; i < K; ++i) terms[i] = alpha[t - 1][i] + A.at(i, j);
      alpha[t][j] = logsumexp(terms) + P.at(t, j);
    }
  for (int j = 0; j < K; ++j) beta[T - 1][j] = A.at(j, e);
  for (int t = T - 2; t >= 0; --t)
    for (int i = 0; i < K; ++i) {
      for (int j = 0; j < K; ++j) terms[j] = A.at(i, j) + P.at(t + 1, j) + beta[t + 1][j];
      beta[t][i] = logsumexp(terms);
    }
  for (int j = 0; j < K; ++j) terms[j] = alpha[T - 1][j] + A.at(j, e);
  const double logZ = logsumexp(terms);

  CrfMarginals m;
  m.logZ = logZ;
  m.node = Tensor::zeros({T, K});
  m.edge = Tensor::zeros({K + 2, K + 2});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < K; ++j) m.node.at(t, j) = std::exp(alpha[t][j] + beta[t][j] - logZ);
  for (int j = 0; j < K; ++j) m.edge.at(s, j) = std::exp(A.at(s, j) + P.at(0, j) + beta[0][j] - logZ);
  for (int t = 0; t + 1 < T; ++t)
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j)
        m.edge.at(i, j) +=
            std::exp(alpha[t][i] + A.at(i, j) + P.at(t + 1, j) + beta[t + 1][j] - logZ);
  for (int j = 0; j < K; ++j) m.edge.at(j, e) = std::exp(alpha[T - 1][j] + A.at(j, e) - logZ);
  return m;
}

// Tape node for loss = log_partition - sequence_score. The analytic gradient
// is marginals minus gold indicators, for both emissions and transitions;
// the pinned entries receive exactly zero because no admissible path uses
// them.
inline Var crf_nll(Tape& tape, Var P, Var A, const std::vector<int>& y) {
  const Tensor& Pv = tape.val(P);
  const Tensor& Av = tape.val(A);
  const double loss = log_partition(Pv, Av) - sequence_score(Pv, y, Av);
  const int K = Pv.cols();
  return tape.custom(Tensor::scalar(loss), [P, A, y, K](Tape& t, const Tensor& og) {
    const double g = og.v[0];
    const CrfMarginals m = crf_marginals(t.val(P), t.val(A));
    Tensor& dP = t.grad_mut(P);
    Tensor& dA = t.grad_mut(A);
    const int T = t.val(P).rows();
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < K; ++j) dP.at(i, j) += g * m.node.at(i, j);
    for (int i = 0; i < T; ++i) dP.at(i, y[i]) -= g;
    for (int i = 0; i < K + 2; ++i)
      for (int j = 0; j < K + 2; ++j) dA.at(i, j) += g * m.edge.at(i, j);
    dA.at(crf_start(K), y[0]) -= g;
    for (int i = 0; i + 1 < T; ++i) dA.at(y[i], y[i + 1]) -= g;
    dA.at(y[T - 1], crf_end(K)) -= g;
  });
}

}  // namespace spantagger
