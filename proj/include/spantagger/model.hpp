#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spantagger/config.hpp"
#include "spantagger/corpus.hpp"
#include "spantagger/crf.hpp"
#include "spantagger/depgraph.hpp"
#include "spantagger/rng.hpp"
#include "spantagger/tape.hpp"

namespace spantagger {

// External per-token vectors, keyed by sentence id. Frozen inputs: training
// never updates them.
//
// File format: header "dim <d>", then "# id = <sentence-id>" blocks followed
// by one line of d space-separated floats per token.
struct SidecarStore {
  int dim = 0;
  std::map<std::string, Tensor> rows;

  static SidecarStore read_stream(std::istream& in, const std::string& what) {
    SidecarStore store;
    std::string line;
    int lineno = 0;
    if (!std::getline(in, line)) throw DataError(what + ": empty sidecar file");
    ++lineno;
    {
      std::istringstream hs(line);
      std::string kw;
      hs >> kw >> store.dim;
      if (kw != "dim" || store.dim < 1)
        throw DataError(what + ":1: expected 'dim <width>' header");
    }
    std::string cur;
    std::vector<double> data;
    int count = 0;
    auto flush = [&]() {
      if (cur.empty()) return;
      Tensor t;
      t.shape = {count, store.dim};
      t.v = std::move(data);
      store.rows.emplace(cur, std::move(t));
      data = {};
      count = 0;
      cur.clear();
    };
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (line[0] == '#') {
        std::istringstream hs(line.substr(1));
        std::string key, eq, id;
        hs >> key >> eq;
        if (key == "id" && eq == "=") {
          flush();
          std::getline(hs, id);
          while (!id.empty() && id.front() == ' ') id.erase(id.begin());
          if (id.empty()) throw DataError(what + ":" + std::to_string(lineno) + ": empty id");
          if (store.rows.count(id))
            throw DataError(what + ": duplicate sidecar block for sentence '" + id + "'");
          cur = id;
        }
        continue;
      }
      if (cur.empty())
        throw DataError(what + ":" + std::to_string(lineno) + ": vector line before any id");
      std::istringstream vs(line);
      double x;
      int got = 0;
      while (vs >> x) {
        data.push_back(x);
        ++got;
      }
      if (got != store.dim)
        throw DataError(what + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(store.dim) + " values, got " + std::to_string(got) +
                        " (sentence '" + cur + "')");
      ++count;
    }
    flush();
    return store;
  }

  static SidecarStore read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sidecar file '" + path + "'");
    return read_stream(in, path);
  }

  const Tensor& require(const std::string& id, int tokens) const {
    auto it = rows.find(id);
    if (it == rows.end()) throw DataError("sidecar has no block for sentence '" + id + "'");
    if (it->second.rows() != tokens)
      throw DataError("sidecar block for sentence '" + id + "' has " +
                      std::to_string(it->second.rows()) + " vectors, sentence has " +
                      std::to_string(tokens) + " tokens");
    return it->second;
  }
};

// Graph-attention tagger: token encoder, stacked relational graph-attention
// layers, then a linear / BiLSTM / Transformer head to per-tag emission
// scores, optionally followed by a CRF.
class Model {
 public:
  TrainConfig cfg;
  Vocabs vocabs;
  const SidecarStore* sidecar = nullptr;

  Model(TrainConfig config, Vocabs v) : cfg(std::move(config)), vocabs(std::move(v)) {
    cfg.validate();
    if (cfg.encoderSource == EncoderSource::Sidecar && cfg.sidecarDim < 1)
      throw ConfigError("sidecarDim must be resolved before building a sidecar-encoder model");
    std::mt19937_64 rng(cfg.seed);
    const int dh = cfg.head_width();
    if (cfg.encoderSource == EncoderSource::Lookup) {
      add(rng, "encoder.token", {vocabs.token.size(), cfg.tokenDim}, Init::Embedding);
      add(rng, "encoder.pos", {vocabs.pos.size(), cfg.posDim}, Init::Embedding);
    }
    add(rng, "rel.table", {vocabs.deprel.size(), cfg.relDim}, Init::Embedding);
    for (int l = 0; l < cfg.layers; ++l) {
      const int din = l == 0 ? cfg.encoder_width() : cfg.hidden;
      const std::string lp = "rgat" + std::to_string(l);
      for (int k = 0; k < cfg.headsK; ++k) {
        const std::string hp = lp + ".att" + std::to_string(k);
        add(rng, hp + ".W", {din, dh}, Init::Weight);
        add(rng, hp + ".a", {2 * dh, 1}, Init::Weight);
      }
      for (int m = 0; m < cfg.headsM; ++m) {
        const std::string hp = lp + ".rel" + std::to_string(m);
        add(rng, hp + ".W1", {cfg.relDim, dh}, Init::Weight);
        add(rng, hp + ".b1", {dh}, Init::Zero);
        add(rng, hp + ".W2", {dh, 1}, Init::Weight);
        add(rng, hp + ".b2", {1}, Init::Zero);
        add(rng, hp + ".Wv", {din, dh}, Init::Weight);
      }
      add(rng, lp + ".proj.W", {(cfg.headsK + cfg.headsM) * dh, cfg.hidden}, Init::Weight);
      add(rng, lp + ".proj.b", {cfg.hidden}, Init::Zero);
    }
    if (cfg.variant == Variant::RgatBilstmCrf) {
      const int dl = cfg.hidden / 2;
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string dp = std::string("lstm.") + dir;
        for (const char* gate : {"i", "f", "o", "c"}) {
          add(rng, dp + ".W" + gate, {cfg.hidden + dl, dl}, Init::Weight);
          add(rng, dp + ".b" + gate, {dl}, Init::Zero);
        }
      }
    } else if (cfg.variant == Variant::RgatTrfmrCrf) {
      for (const char* w : {"Wq", "Wk", "Wv", "Wo"})
        add(rng, std::string("trf.") + w, {cfg.hidden, cfg.hidden}, Init::Weight);
      add(rng, "trf.ln1.g", {cfg.hidden}, Init::One);
      add(rng, "trf.ln1.b", {cfg.hidden}, Init::Zero);
      add(rng, "trf.ffn.W1", {cfg.hidden, 4 * cfg.hidden}, Init::Weight);
      add(rng, "trf.ffn.b1", {4 * cfg.hidden}, Init::Zero);
      add(rng, "trf.ffn.W2", {4 * cfg.hidden, cfg.hidden}, Init::Weight);
      add(rng, "trf.ffn.b2", {cfg.hidden}, Init::Zero);
      add(rng, "trf.ln2.g", {cfg.hidden}, Init::One);
      add(rng, "trf.ln2.b", {cfg.hidden}, Init::Zero);
    }
    add(rng, "head.W", {cfg.hidden, vocabs.tag_count()}, Init::Weight);
    add(rng, "head.b", {vocabs.tag_count()}, Init::Zero);
    if (variant_has_crf(cfg.variant)) {
      Parameter& A = add(rng, "crf.A", {vocabs.tag_count() + 2, vocabs.tag_count() + 2},
                         Init::Zero);
      A.value = crf_init_transitions(vocabs.tag_count());
      if (cfg.crfBieosMask) crf_pin_bieos(A.value, vocabs.tags);
    }
  }

  std::map<std::string, Parameter>& params() { return params_; }
  const std::map<std::string, Parameter>& params() const { return params_; }

  Parameter& param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("no parameter named '" + name + "'");
    return it->second;
  }

  void zero_grads() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  // Re-assert structural transition pins; call after every optimizer step.
  void repin() {
    if (!variant_has_crf(cfg.variant)) return;
    Tensor& A = param("crf.A").value;
    crf_repin(A);
    if (cfg.crfBieosMask) crf_pin_bieos(A, vocabs.tags);
  }

  // Row i = concat(tokenTable[tok_i], posTable[pos_i]) under lookup; the
  // stored sidecar block (as a frozen constant) otherwise.
  Var encode(Tape& t, const Sentence& s) {
    if (cfg.encoderSource == EncoderSource::Sidecar) {
      if (!sidecar) throw DataError("sidecar encoder selected but no sidecar file loaded");
      const Tensor& block = sidecar->require(s.id, s.size());
      if (block.cols() != cfg.sidecarDim)
        throw DataError("sidecar width " + std::to_string(block.cols()) +
                        " does not match configured sidecarDim " +
                        std::to_string(cfg.sidecarDim) + " (sentence '" + s.id + "')");
      return t.constant(block);
    }
    std::vector<int> tokIds, posIds;
    for (const Token& tok : s.tokens) {
      tokIds.push_back(vocabs.token.lookup(tok.surface));
      posIds.push_back(vocabs.pos.lookup(tok.pos));
    }
    Var tokE = t.gather_rows(t.leaf(param("encoder.token")), tokIds);
    Var posE = t.gather_rows(t.leaf(param("encoder.pos")), posIds);
    return t.concat_cols({tokE, posE});
  }

  // Per-edge relation embeddings r_ij (E x relDim).
  Var rel_embeddings(Tape& t, const EdgeList& e, Mode mode, std::mt19937_64& rng) {
    Var r = t.gather_rows(t.leaf(param("rel.table")), e.rel);
    if (cfg.dropoutRelEmb) r = t.dropout(r, cfg.dropout, mode, rng);
    return r;
  }

  // One attention head: out_i = sum_{j in N_i} alpha_ij W h_j, with alpha the
  // softmax over N_i of leakyrelu(a . [W h_i || W h_j]). The concat splits
  // into two dot products, so edge logits are s_left[i] + s_right[j].
  Var attention_head(Tape& t, Var H, const EdgeList& e, int layer, int k,
                     Var* alphaOut = nullptr) {
    const std::string hp = "rgat" + std::to_string(layer) + ".att" + std::to_string(k);
    const int dh = cfg.head_width();
    Var WH = t.matmul(H, t.leaf(param(hp + ".W")));
    Var a = t.leaf(param(hp + ".a"));
    std::vector<int> lo(dh), hi(dh);
    for (int i = 0; i < dh; ++i) {
      lo[i] = i;
      hi[i] = dh + i;
    }
    Var sLeft = t.matmul(WH, t.gather_rows(a, lo));
    Var sRight = t.matmul(WH, t.gather_rows(a, hi));
    Var logits = t.leakyrelu(t.add(t.gather_rows(sLeft, e.dst), t.gather_rows(sRight, e.src)),
                             0.01);
    Var alpha = t.segment_softmax(logits, e.seg);
    if (alphaOut) *alphaOut = alpha;
    Var messages = t.mul_colvec(t.gather_rows(WH, e.src), alpha);
    return t.segment_sum_rows(messages, e.seg);
  }

  // One relational head: the gate g_ij = sigmoid(relu(r_ij W1 + b1) W2 + b2)
  // depends on the relation embedding only; beta is its softmax over N_i.
  Var relational_head(Tape& t, Var H, Var relE, const EdgeList& e, int layer, int m,
                      Var* betaOut = nullptr, Var* gateOut = nullptr) {
    const std::string hp = "rgat" + std::to_string(layer) + ".rel" + std::to_string(m);
    Var g1 = t.relu(t.add_rowvec(t.matmul(relE, t.leaf(param(hp + ".W1"))),
                                 t.leaf(param(hp + ".b1"))));
    Var gate = t.sigmoid(t.add_rowvec(t.matmul(g1, t.leaf(param(hp + ".W2"))),
                                      t.leaf(param(hp + ".b2"))));
    if (gateOut) *gateOut = gate;
    Var beta = t.segment_softmax(gate, e.seg);
    if (betaOut) *betaOut = beta;
    Var WH = t.matmul(H, t.leaf(param(hp + ".Wv")));
    Var messages = t.mul_colvec(t.gather_rows(WH, e.src), beta);
    return t.segment_sum_rows(messages, e.seg);
  }

  // x_i = concat over K attention heads and M relational heads; output
  // relu(x W + b), with dropout on the output in train mode.
  Var rgat_layer(Tape& t, Var H, Var relE, const EdgeList& e, int layer, Mode mode,
                 std::mt19937_64& rng) {
    const std::string lp = "rgat" + std::to_string(layer);
    std::vector<Var> parts;
    for (int k = 0; k < cfg.headsK; ++k) parts.push_back(attention_head(t, H, e, layer, k));
    for (int m = 0; m < cfg.headsM; ++m)
      parts.push_back(relational_head(t, H, relE, e, layer, m));
    Var x = t.concat_cols(parts);
    Var out = t.relu(t.add_rowvec(t.matmul(x, t.leaf(param(lp + ".proj.W"))),
                                  t.leaf(param(lp + ".proj.b"))));
    if (cfg.dropoutLayerOutput) out = t.dropout(out, cfg.dropout, mode, rng);
    return out;
  }

  // Standard LSTM recurrence over [x_t ; h_{t-1}], zero initial states, run
  // in both directions with independent parameters; rows are concatenated.
  Var bilstm(Tape& t, Var H) {
    const int T = t.val(H).rows();
    const int dl = cfg.hidden / 2;
    auto run = [&](const std::string& dp, bool reverse) {
      Var Wi = t.leaf(param(dp + ".Wi")), bi = t.leaf(param(dp + ".bi"));
      Var Wf = t.leaf(param(dp + ".Wf")), bf = t.leaf(param(dp + ".bf"));
      Var Wo = t.leaf(param(dp + ".Wo")), bo = t.leaf(param(dp + ".bo"));
      Var Wc = t.leaf(param(dp + ".Wc")), bc = t.leaf(param(dp + ".bc"));
      Var h = t.constant(Tensor::zeros({1, dl}));
      Var c = t.constant(Tensor::zeros({1, dl}));
      std::vector<Var> states(T);
      for (int step = 0; step < T; ++step) {
        const int row = reverse ? T - 1 - step : step;
        Var z = t.concat_cols({t.gather_rows(H, {row}), h});
        Var ig = t.sigmoid(t.add_rowvec(t.matmul(z, Wi), bi));
        Var fg = t.sigmoid(t.add_rowvec(t.matmul(z, Wf), bf));
        Var og = t.sigmoid(t.add_rowvec(t.matmul(z, Wo), bo));
        Var cc = t.tanh(t.add_rowvec(t.matmul(z, Wc), bc));
        c = t.add(t.mul(fg, c), t.mul(ig, cc));
        h = t.mul(og, t.tanh(c));
        states[row] = h;
      }
      return states;
    };
    std::vector<Var> fwd = run("lstm.fwd", false);
    std::vector<Var> bwd = run("lstm.bwd", true);
    std::vector<Var> rows(T);
    for (int i = 0; i < T; ++i) rows[i] = t.concat_cols({fwd[i], bwd[i]});
    return t.concat_rows(rows);
  }

  // Post-norm Transformer encoder layer: multi-head scaled dot-product
  // self-attention over all positions (no mask), residual + layer norm,
  // position-wise feed-forward (inner width 4x), residual + layer norm.
  Var transformer_layer(Tape& t, Var H, std::vector<Var>* attOut = nullptr) {
    const int heads = cfg.headsK;
    const int dh = cfg.hidden / heads;
    Var Q = t.matmul(H, t.leaf(param("trf.Wq")));
    Var K = t.matmul(H, t.leaf(param("trf.Wk")));
    Var V = t.matmul(H, t.leaf(param("trf.Wv")));
    std::vector<Var> ctx;
    for (int h = 0; h < heads; ++h) {
      std::vector<int> idx(dh);
      for (int i = 0; i < dh; ++i) idx[i] = h * dh + i;
      Var Qh = slice_cols(t, Q, idx);
      Var Kh = slice_cols(t, K, idx);
      Var Vh = slice_cols(t, V, idx);
      Var scores = t.mul_scalar(t.matmul(Qh, t.transpose(Kh)), 1.0 / std::sqrt(double(dh)));
      Var att = t.softmax_rows(scores);
      if (attOut) attOut->push_back(att);
      ctx.push_back(t.matmul(att, Vh));
    }
    Var attended = t.matmul(t.concat_cols(ctx), t.leaf(param("trf.Wo")));
    Var x1 = layer_norm(t, t.add(H, attended), "trf.ln1");
    Var ff = t.add_rowvec(
        t.matmul(t.relu(t.add_rowvec(t.matmul(x1, t.leaf(param("trf.ffn.W1"))),
                                     t.leaf(param("trf.ffn.b1")))),
                 t.leaf(param("trf.ffn.W2"))),
        t.leaf(param("trf.ffn.b2")));
    return layer_norm(t, t.add(x1, ff), "trf.ln2");
  }

  // Emission scores P (T x K_tags) for one sentence over its reoriented
  // graph: encoder -> R-GAT stack -> head -> affine projection.
  Var emissions(Tape& t, const Sentence& s, const DepGraph& g, Mode mode,
                std::mt19937_64& rng) {
    if (g.n != s.size()) throw std::invalid_argument("emissions: graph/sentence size mismatch");
    const EdgeList e = flatten(g);
    Var H = encode(t, s);
    Var relE = rel_embeddings(t, e, mode, rng);
    for (int l = 0; l < cfg.layers; ++l) H = rgat_layer(t, H, relE, e, l, mode, rng);
    if (cfg.variant == Variant::RgatBilstmCrf) H = bilstm(t, H);
    else if (cfg.variant == Variant::RgatTrfmrCrf) H = transformer_layer(t, H);
    return t.add_rowvec(t.matmul(H, t.leaf(param("head.W"))), t.leaf(param("head.b")));
  }

  // Scalar training loss: summed token cross-entropy for the linear variant,
  // CRF negative log-likelihood otherwise.
  Var loss(Tape& t, Var P, const std::vector<int>& gold, long* clamps = nullptr) {
    if (variant_has_crf(cfg.variant)) return crf_nll(t, P, t.leaf(param("crf.A")), gold);
    return t.nll_pick(t.softmax_rows(P), gold, clamps);
  }

  // Tag ids from emission scores: Viterbi under the CRF, per-row argmax
  // otherwise (ties to the smallest tag id either way).
  std::vector<int> decode(const Tensor& P) const {
    if (variant_has_crf(cfg.variant)) return viterbi(P, params_.at("crf.A").value).first;
    std::vector<int> out(P.rows());
    for (int i = 0; i < P.rows(); ++i) {
      int arg = 0;
      for (int j = 1; j < P.cols(); ++j)
        if (P.at(i, j) > P.at(i, arg)) arg = j;
      out[i] = arg;
    }
    return out;
  }

 private:
  enum class Init { Embedding, Weight, Zero, One };

  std::map<std::string, Parameter> params_;

  Parameter& add(std::mt19937_64& rng, const std::string& name, std::vector<int> shape,
                 Init init) {
    Tensor t;
    t.shape = std::move(shape);
    int n = 1;
    for (int d : t.shape) n *= d;
    t.v.assign(n, 0.0);
    switch (init) {
      case Init::Embedding:
        for (double& x : t.v) x = uniform_rand(rng, -0.1, 0.1);
        break;
      case Init::Weight: {
        const int fanIn = t.rank() == 2 ? t.rows() : n;
        const int fanOut = t.rank() == 2 ? t.cols() : 1;
        const double u = std::sqrt(6.0 / (fanIn + fanOut));
        for (double& x : t.v) x = uniform_rand(rng, -u, u);
        break;
      }
      case Init::Zero: break;
      case Init::One:
        for (double& x : t.v) x = 1.0;
        break;
    }
    auto [it, fresh] = params_.emplace(name, Parameter(name, std::move(t)));
    if (!fresh) throw std::logic_error("duplicate parameter '" + name + "'");
    return it->second;
  }

  Var slice_cols(Tape& t, Var a, const std::vector<int>& idx) {
    return t.transpose(t.gather_rows(t.transpose(a), idx));
  }

  Var layer_norm(Tape& t, Var x, const std::string& prefix) {
    Var mu = t.row_mean(x);
    Var xc = t.sub_colvec(x, mu);
    Var var = t.row_mean(t.mul(xc, xc));
    Var xn = t.mul_colvec(xc, t.rsqrt_eps(var, 1e-5));
    return t.add_rowvec(t.mul_rowvec(xn, t.leaf(param(prefix + ".g"))),
                        t.leaf(param(prefix + ".b")));
  }
};

// Gold tag ids for one sentence under the model's task.
inline std::vector<int> gold_ids(const Sentence& s, TaskKind task) {
  std::vector<int> out;
  out.reserve(s.tokens.size());
  for (const Token& tok : s.tokens) out.push_back(tag_id(task, tok.tag(task)));
  return out;
}

}  // namespace spantagger
