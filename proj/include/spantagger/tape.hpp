#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spantagger/tensor.hpp"

namespace spantagger {

// A learnable tensor. Gradients accumulate into `grad` when a tape that
// references the parameter runs backward.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor val) : name(std::move(n)), value(std::move(val)) {
    grad.shape = value.shape;
    grad.v.assign(value.v.size(), 0.0);
  }

  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
};

// Handle to a node on a tape.
struct Var {
  int idx = -1;
  bool ok() const { return idx >= 0; }
};

// Records primitive operations during a forward pass; backward() replays the
// record in reverse, visiting every node exactly once, and accumulates
// gradients into the referenced Parameters.
class Tape {
 public:
  const Tensor& val(Var x) const { return nodes_[x.idx].val; }
  const Tensor& grad(Var x) const { return nodes_[x.idx].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var leaf(Parameter& p) {
    int id = push(p.value);
    nodes_[id].param = &p;
    nodes_[id].back = [id](Tape& t) {
      Parameter* p = t.nodes_[id].param;
      const Tensor& g = t.nodes_[id].grad;
      for (std::size_t i = 0; i < g.v.size(); ++i) p->grad.v[i] += g.v[i];
    };
    return {id};
  }

  // Frozen input; gradients stop here.
  Var constant(Tensor t) { return {push(std::move(t))}; }

  Var matmul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    int id = push(spantagger::matmul(A, B));
    nodes_[id].back = [id, a, b](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& A = t.val(a);
      const Tensor& B = t.val(b);
      Tensor& ga = t.nodes_[a.idx].grad;
      Tensor& gb = t.nodes_[b.idx].grad;
      const int m = A.rows(), k = A.cols(), n = B.cols();
      // dA += g * B^T ; dB += A^T * g
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += g.at(i, j) * B.at(p, j);
          ga.at(i, p) += s;
        }
      for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int i = 0; i < m; ++i) s += A.at(i, p) * g.at(i, j);
          gb.at(p, j) += s;
        }
    };
    return {id};
  }

  Var transpose(Var a) {
    int id = push(spantagger::transpose(val(a)));
    nodes_[id].back = [id, a](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.nodes_[a.idx].grad;
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
    };
    return {id};
  }

  Var add(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += B.v[i];
    int id = push(std::move(out));
    nodes_[id].back = [id, a, b](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        t.nodes_[a.idx].grad.v[i] += g.v[i];
        t.nodes_[b.idx].grad.v[i] += g.v[i];
      }
    };
    return {id};
  }

  Var sub(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= B.v[i];
    int id = push(std::move(out));
    nodes_[id].back = [id, a, b](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        t.nodes_[a.idx].grad.v[i] += g.v[i];
        t.nodes_[b.idx].grad.v[i] -= g.v[i];
      }
    };
    return {id};
  }

  // Hadamard product.
  Var mul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= B.v[i];
    int id = push(std::move(out));
    nodes_[id].back = [id, a, b](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& A = t.val(a);
      const Tensor& B = t.val(b);
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        t.nodes_[a.idx].grad.v[i] += g.v[i] * B.v[i];
        t.nodes_[b.idx].grad.v[i] += g.v[i] * A.v[i];
      }
    };
    return {id};
  }

  Var mul_scalar(Var a, double c) {
    Tensor out = val(a);
    for (double& x : out.v) x *= c;
    int id = push(std::move(out));
    nodes_[id].back = [id, a, c](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      for (std::size_t i = 0; i < g.v.size(); ++i) t.nodes_[a.idx].grad.v[i] += c * g.v[i];
    };
    return {id};
  }

  // A (m x n) + row vector b (length n), broadcast over rows.
  Var add_rowvec(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols() != static_cast<int>(B.numel()))
      throw std::invalid_argument("add_rowvec: width mismatch");
    Tensor out = A;
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) out.at(i, j) += B.v[j];
    int id = push(std::move(out));
    nodes_[id].back = [id, a, b](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.nodes_[a.idx].grad;
      Tensor& gb = t.nodes_[b.idx].grad;
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) {
          ga.at(i, j) += g.at(i, j);
          gb.v[j] += g.at(i, j);
        }
    };
    return {id};
  }

  // A (m x n) * row vector r (length n), broadcast over rows.
  Var mul_rowvec(Var a, Var r) {
    const Tensor& A = val(a);
    const Tensor& R = val(r);
    if (A.cols() != static_cast<int>(R.numel()))
      throw std::invalid_argument("mul_rowvec: width mismatch");
    Tensor out = A;
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) out.at(i, j) *= R.v[j];
    int id = push(std::move(out));
    nodes_[id].back = [id, a, r](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& A = t.val(a);
      const Tensor& R = t.val(r);
      Tensor& ga = t.nodes_[a.idx].grad;
      Tensor& gr = t.nodes_[r.idx].grad;
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) {
          ga.at(i, j) += g.at(i, j) * R.v[j];
          gr.v[j] += g.at(i, j) * A.at(i, j);
        }
    };
    return {id};
  }

  // A (m x n) - column c (m x 1), broadcast over columns.
  Var sub_colvec(Var a, Var c) {
    const Tensor& A = val(a);
    const Tensor& C = val(c);
    if (A.rows() != static_cast<int>(C.numel()))
      throw std::invalid_argument("sub_colvec: height mismatch");
    Tensor out = A;
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) out.at(i, j) -= C.v[i];
    int id = push(std::move(out));
    nodes_[id].back = [id, a, c](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.nodes_[a.idx].grad;
      Tensor& gc = t.nodes_[c.idx].grad;
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) {
          ga.at(i, j) += g.at(i, j);
          gc.v[i] -= g.at(i, j);
        }
    };
    return {id};
  }

  // A (m x n) * column c (m x 1), broadcast over columns.
  Var mul_colvec(Var a, Var c) {
    const Tensor& A = val(a);
    const Tensor& C = val(c);
    if (A.rows() != static_cast<int>(C.numel()))
      throw std::invalid_argument("mul_colvec: height mismatch");
    Tensor out = A;
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) out.at(i, j) *= C.v[i];
    int id = push(std::move(out));
    nodes_[id].back = [id, a, c](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& A = t.val(a);
      const Tensor& C = t.val(c);
      Tensor& ga = t.nodes_[a.idx].grad;
      Tensor& gc = t.nodes_[c.idx].grad;
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) {
          ga.at(i, j) += g.at(i, j) * C.v[i];
          gc.v[i] += g.at(i, j) * A.at(i, j);
        }
    };
    return {id};
  }

  Var row_mean(Var a) {
    const Tensor& A = val(a);
    Tensor out = Tensor::zeros({A.rows(), 1});
    for (int i = 0; i < A.rows(); ++i) {
      double s = 0.0;
      for (int j = 0; j < A.cols(); ++j) s += A.at(i, j);
      out.v[i] = s / A.cols();
    }
    int id = push(std::move(out));
    nodes_[id].back = [id, a](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.nodes_[a.idx].grad;
      const int n = ga.cols();
      for (int i = 0; i < ga.rows(); ++i)
        for (int j = 0; j < n; ++j) ga.at(i, j) += g.v[i] / n;
    };
    return {id};
  }

  // Elementwise 1/sqrt(x + eps).
  Var rsqrt_eps(Var a, double eps) {
    Tensor out = val(a);
    for (double& x : out.v) x = 1.0 / std::sqrt(x + eps);
    int id = push(std::move(out));
    nodes_[id].back = [id, a](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].val;
      for (std::size_t i = 0; i < g.v.size(); ++i)
        t.nodes_[a.idx].grad.v[i] += g.v[i] * (-0.5 * y.v[i] * y.v[i] * y.v[i]);
    };
    return {id};
  }

  Var relu(Var a) { return unary_act(a, Act::Relu, 0.0); }
  Var leakyrelu(Var a, double slope) { return unary_act(a, Act::LeakyRelu, slope); }
  Var sigmoid(Var a) { return unary_act(a, Act::Sigmoid, 0.0); }
  Var tanh(Var a) { return unary_act(a, Act::Tanh, 0.0); }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    const int m = val(parts[0]).rows();
    int total = 0;
    for (Var p : parts) {
      if (val(p).rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
      total += val(p).cols();
    }
    Tensor out = Tensor::zeros({m, total});
    int off = 0;
    for (Var p : parts) {
      const Tensor& P = val(p);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < P.cols(); ++j) out.at(i, off + j) = P.at(i, j);
      off += P.cols();
    }
    int id = push(std::move(out));
    nodes_[id].back = [id, parts](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      int off = 0;
      for (Var p : parts) {
        Tensor& gp = t.nodes_[p.idx].grad;
        for (int i = 0; i < gp.rows(); ++i)
          for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(i, off + j);
        off += gp.cols();
      }
    };
    return {id};
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    const int n = val(parts[0]).cols();
    int total = 0;
    for (Var p : parts) {
      if (val(p).cols() != n) throw std::invalid_argument("concat_rows: col mismatch");
      total += val(p).rows();
    }
    Tensor out = Tensor::zeros({total, n});
    int off = 0;
    for (Var p : parts) {
      const Tensor& P = val(p);
      for (int i = 0; i < P.rows(); ++i)
        for (int j = 0; j < n; ++j) out.at(off + i, j) = P.at(i, j);
      off += P.rows();
    }
    int id = push(std::move(out));
    nodes_[id].back = [id, parts](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      int off = 0;
      for (Var p : parts) {
        Tensor& gp = t.nodes_[p.idx].grad;
        for (int i = 0; i < gp.rows(); ++i)
          for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(off + i, j);
        off += gp.rows();
      }
    };
    return {id};
  }

  // Select rows of A by index; duplicate indices accumulate on backward.
  Var gather_rows(Var a, std::vector<int> ids) {
    const Tensor& A = val(a);
    Tensor out = Tensor::zeros({static_cast<int>(ids.size()), A.cols()});
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (ids[k] < 0 || ids[k] >= A.rows())
        throw std::invalid_argument("gather_rows: index out of range");
      for (int j = 0; j < A.cols(); ++j) out.at(static_cast<int>(k), j) = A.at(ids[k], j);
    }
    int id = push(std::move(out));
    nodes_[id].back = [id, a, ids = std::move(ids)](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.nodes_[a.idx].grad;
      for (std::size_t k = 0; k < ids.size(); ++k)
        for (int j = 0; j < g.cols(); ++j)
          ga.at(ids[k], j) += g.at(static_cast<int>(k), j);
    };
    return {id};
  }

  // Row-wise softmax with max-subtraction (no mask).
  Var softmax_rows(Var a) {
    const Tensor& A = val(a);
    Tensor out = A;
    for (int i = 0; i < A.rows(); ++i) {
      std::vector<double> row(A.cols());
      for (int j = 0; j < A.cols(); ++j) row[j] = A.at(i, j);
      std::vector<double> sm = softmax_all(row);
      for (int j = 0; j < A.cols(); ++j) out.at(i, j) = sm[j];
    }
    int id = push(std::move(out));
    nodes_[id].back = [id, a](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].val;
      Tensor& ga = t.nodes_[a.idx].grad;
      for (int i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
        for (int j = 0; j < y.cols(); ++j)
          ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
      }
    };
    return {id};
  }

  // Softmax within each contiguous segment of an (E x 1) column. `seg` has
  // n+1 offsets; segment s covers rows [seg[s], seg[s+1]).
  Var segment_softmax(Var a, std::vector<int> seg) {
    const Tensor& A = val(a);
    if (A.cols() != 1) throw std::invalid_argument("segment_softmax: E x 1 required");
    Tensor out = A;
    for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
      const int lo = seg[s], hi = seg[s + 1];
      if (lo >= hi) throw std::invalid_argument("segment_softmax: empty segment");
      std::vector<double> part(A.v.begin() + lo, A.v.begin() + hi);
      std::vector<double> sm = softmax_all(part);
      for (int e = lo; e < hi; ++e) out.v[e] = sm[e - lo];
    }
    int id = push(std::move(out));
    nodes_[id].back = [id, a, seg = std::move(seg)](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& y = t.nodes_[id].val;
      Tensor& ga = t.nodes_[a.idx].grad;
      for (std::size_t s = 0; s + 1 < seg.size(); ++s) {
        const int lo = seg[s], hi = seg[s + 1];
        double dot = 0.0;
        for (int e = lo; e < hi; ++e) dot += g.v[e] * y.v[e];
        for (int e = lo; e < hi; ++e) ga.v[e] += y.v[e] * (g.v[e] - dot);
      }
    };
    return {id};
  }

  // Sum rows of an (E x d) message matrix within each segment -> (n x d).
  Var segment_sum_rows(Var a, std::vector<int> seg) {
    const Tensor& A = val(a);
    const int n = static_cast<int>(seg.size()) - 1;
    Tensor out = Tensor::zeros({n, A.cols()});
    for (int s = 0; s < n; ++s)
      for (int e = seg[s]; e < seg[s + 1]; ++e)
        for (int j = 0; j < A.cols(); ++j) out.at(s, j) += A.at(e, j);
    int id = push(std::move(out));
    nodes_[id].back = [id, a, seg = std::move(seg)](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      Tensor& ga = t.nodes_[a.idx].grad;
      const int n = static_cast<int>(seg.size()) - 1;
      for (int s = 0; s < n; ++s)
        for (int e = seg[s]; e < seg[s + 1]; ++e)
          for (int j = 0; j < g.cols(); ++j) ga.at(e, j) += g.at(s, j);
    };
    return {id};
  }

  Var sum_all(Var a) {
    double s = 0.0;
    for (double x : val(a).v) s += x;
    int id = push(Tensor::scalar(s));
    nodes_[id].back = [id, a](Tape& t) {
      const double g = t.nodes_[id].grad.v[0];
      for (double& x : t.nodes_[a.idx].grad.v) x += g;
    };
    return {id};
  }

  // Inverted dropout as a tape op. Identity (no node) at rate 0 or in eval.
  Var dropout(Var a, double rate, Mode mode, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
    if (mode == Mode::Eval || rate == 0.0) return a;
    auto [out, mask] = spantagger::dropout(val(a), rate, mode, rng);
    int id = push(std::move(out));
    nodes_[id].back = [id, a, mask = std::move(mask)](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      for (std::size_t i = 0; i < g.v.size(); ++i)
        t.nodes_[a.idx].grad.v[i] += g.v[i] * mask.v[i];
    };
    return {id};
  }

  // -sum_t log p[t][gold_t] over a row-stochastic matrix. Probabilities below
  // the clamp floor contribute log(1e-12) and zero gradient; each clamped
  // entry bumps *clamps when given.
  Var nll_pick(Var probs, std::vector<int> gold, long* clamps = nullptr) {
    const Tensor& P = val(probs);
    if (static_cast<int>(gold.size()) != P.rows())
      throw std::invalid_argument("nll_pick: gold length mismatch");
    constexpr double kFloor = 1e-12;
    double loss = 0.0;
    for (int t = 0; t < P.rows(); ++t) {
      if (gold[t] < 0 || gold[t] >= P.cols())
        throw std::invalid_argument("nll_pick: gold id out of range");
      double p = P.at(t, gold[t]);
      if (p < kFloor) {
        p = kFloor;
        if (clamps) ++*clamps;
      }
      loss -= std::log(p);
    }
    int id = push(Tensor::scalar(loss));
    nodes_[id].back = [id, probs, gold = std::move(gold)](Tape& t) {
      const double g = t.nodes_[id].grad.v[0];
      const Tensor& P = t.val(probs);
      Tensor& gp = t.nodes_[probs.idx].grad;
      for (int r = 0; r < P.rows(); ++r) {
        const double p = P.at(r, gold[r]);
        if (p >= 1e-12) gp.at(r, gold[r]) += g * (-1.0 / p);
      }
    };
    return {id};
  }

  // Escape hatch for fused ops with hand-derived backward rules. `back` gets
  // the output gradient and must accumulate into the parents' grad tensors.
  Var custom(Tensor out,
             std::function<void(Tape&, const Tensor& outGrad)> back) {
    int id = push(std::move(out));
    nodes_[id].back = [id, back = std::move(back)](Tape& t) {
      back(t, t.nodes_[id].grad);
    };
    return {id};
  }

  Tensor& grad_mut(Var x) { return nodes_[x.idx].grad; }

  // Reverse sweep from a scalar loss. Gradients land in every Parameter that
  // was registered with leaf().
  void backward(Var loss) {
    if (!loss.ok() || val(loss).numel() != 1 || val(loss).rank() != 0)
      throw std::invalid_argument("backward: loss must be a scalar node");
    for (Node& n : nodes_) {
      n.grad.shape = n.val.shape;
      n.grad.v.assign(n.val.v.size(), 0.0);
    }
    nodes_[loss.idx].grad.v[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this);
  }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&)> back;
    Parameter* param = nullptr;
  };

  int push(Tensor t) {
    nodes_.push_back(Node{std::move(t), Tensor{}, nullptr, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  Var unary_act(Var a, Act kind, double slope) {
    int id = push(activation(val(a), kind, slope));
    nodes_[id].back = [id, a, kind, slope](Tape& t) {
      const Tensor& g = t.nodes_[id].grad;
      const Tensor& x = t.val(a);
      const Tensor& y = t.nodes_[id].val;
      Tensor& ga = t.nodes_[a.idx].grad;
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        double d = 0.0;
        switch (kind) {
          case Act::Relu: d = x.v[i] > 0.0 ? 1.0 : 0.0; break;
          case Act::LeakyRelu: d = x.v[i] > 0.0 ? 1.0 : slope; break;
          case Act::Sigmoid: d = y.v[i] * (1.0 - y.v[i]); break;
          case Act::Tanh: d = 1.0 - y.v[i] * y.v[i]; break;
        }
        ga.v[i] += g.v[i] * d;
      }
    };
    return {id};
  }

  std::vector<Node> nodes_;
};

}  // namespace spantagger
