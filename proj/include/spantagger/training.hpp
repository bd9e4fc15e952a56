#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spantagger/config.hpp"
#include "spantagger/evaluation.hpp"
#include "spantagger/model.hpp"
#include "spantagger/rng.hpp"

namespace spantagger {

// Summed cross-entropy over gold tags of row-stochastic probabilities.
// Probabilities below 1e-12 are clamped (each clamp bumps *clamps).
inline double token_ce_loss(const Tensor& probs, const std::vector<int>& gold,
                            long* clamps = nullptr) {
  if (probs.rank() != 2 || static_cast<int>(gold.size()) != probs.rows())
    throw std::invalid_argument("token_ce_loss: shape mismatch");
  double loss = 0.0;
  for (int t = 0; t < probs.rows(); ++t) {
    if (gold[t] < 0 || gold[t] >= probs.cols())
      throw std::invalid_argument("token_ce_loss: gold id out of range");
    double p = probs.at(t, gold[t]);
    if (p < 1e-12) {
      p = 1e-12;
      if (clamps) ++*clamps;
    }
    loss -= std::log(p);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam with bias correction; moments are kept per parameter name.
// ---------------------------------------------------------------------------

struct AdamState {
  long step = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments;
};

inline void adam_step(std::map<std::string, Parameter>& params, AdamState& st,
                      const TrainConfig& cfg) {
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.adamBeta1, double(st.step));
  const double c2 = 1.0 - std::pow(cfg.adamBeta2, double(st.step));
  for (auto& [name, p] : params) {
    auto [it, fresh] = st.moments.try_emplace(
        name, Tensor::zeros(p.value.shape), Tensor::zeros(p.value.shape));
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    if (!m.same_shape(p.value))
      throw std::logic_error("adam_step: moment shape mismatch for '" + name + "'");
    for (std::size_t i = 0; i < p.value.v.size(); ++i) {
      const double g = p.grad.v[i];
      m.v[i] = cfg.adamBeta1 * m.v[i] + (1.0 - cfg.adamBeta1) * g;
      v.v[i] = cfg.adamBeta2 * v.v[i] + (1.0 - cfg.adamBeta2) * g * g;
      p.value.v[i] -= cfg.learningRate * (m.v[i] / c1) / (std::sqrt(v.v[i] / c2) + cfg.adamEps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints. Line-based text format, lossless through %.17g:
//   spantagger-ckpt v1
//   config <n>            (then n "key = value" lines)
//   vocab token <n> / vocab pos <n> / vocab deprel <n>  (one word per line)
//   tags <n>              (one tag per line)
//   params <n>
//   param <name> <rank> <d1..dk>   (then one line per row of %.17g floats)
//   end
// ---------------------------------------------------------------------------

inline void write_checkpoint_stream(std::ostream& out, const Model& model) {
  out << "spantagger-ckpt v1\n";
  const auto entries = config_entries(model.cfg);
  out << "config " << entries.size() << "\n";
  for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
  write_vocab(out, "token", model.vocabs.token);
  write_vocab(out, "pos", model.vocabs.pos);
  write_vocab(out, "deprel", model.vocabs.deprel);
  out << "tags " << model.vocabs.tags.size() << "\n";
  for (const std::string& t : model.vocabs.tags) out << t << "\n";
  out << "params " << model.params().size() << "\n";
  for (const auto& [name, p] : model.params()) {
    out << "param " << name << " " << p.value.rank();
    for (int d : p.value.shape) out << " " << d;
    out << "\n";
    const int rows = p.value.rank() == 2 ? p.value.rows() : 1;
    const int cols = static_cast<int>(p.value.numel()) / rows;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j)
        out << (j ? " " : "") << format_double(p.value.v[std::size_t(i) * cols + j]);
      out << "\n";
    }
  }
  out << "end\n";
}

// Write to a temp file in the target directory, then rename into place.
inline void atomic_write(const std::string& path,
                         const std::function<void(std::ostream&)>& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write to '" + tmp + "'");
    body(out);
    out.flush();
    if (!out) throw DataError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

inline void save_checkpoint(const std::string& path, const Model& model) {
  atomic_write(path, [&](std::ostream& out) { write_checkpoint_stream(out, model); });
}

inline Model load_checkpoint_stream(std::istream& in, const std::string& what) {
  std::string line;
  auto next = [&](const char* ctx) {
    if (!std::getline(in, line)) throw DataError(what + ": truncated while reading " + ctx);
    return line;
  };
  if (next("header") != "spantagger-ckpt v1")
    throw DataError(what + ": not a spantagger-ckpt v1 file (got '" + line + "')");
  TrainConfig cfg;
  {
    std::istringstream hs(next("config header"));
    std::string kw;
    int n = -1;
    hs >> kw >> n;
    if (kw != "config" || n < 0) throw DataError(what + ": expected 'config <n>'");
    for (int i = 0; i < n; ++i) {
      const std::string entry = next("config entry");
      const std::size_t eq = entry.find('=');
      if (eq == std::string::npos) throw DataError(what + ": bad config line '" + entry + "'");
      try {
        apply_config_entry(cfg, detail::trim(entry.substr(0, eq)),
                           detail::trim(entry.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw DataError(what + ": " + e.what());
      }
    }
  }
  Vocabs vocabs;
  try {
    vocabs.token = read_vocab(in, "token");
    vocabs.pos = read_vocab(in, "pos");
    vocabs.deprel = read_vocab(in, "deprel");
  } catch (const DataError& e) {
    throw DataError(what + ": " + e.what());
  }
  {
    std::istringstream hs(next("tags header"));
    std::string kw;
    int n = -1;
    hs >> kw >> n;
    if (kw != "tags" || n < 0) throw DataError(what + ": expected 'tags <n>'");
    for (int i = 0; i < n; ++i) vocabs.tags.push_back(next("tag"));
    if (vocabs.tags != tag_set(cfg.task))
      throw DataError(what + ": tag set does not match task '" + task_name(cfg.task) + "'");
  }
  Model model(cfg, std::move(vocabs));
  std::size_t count = 0;
  {
    std::istringstream hs(next("params header"));
    std::string kw;
    long n = -1;
    hs >> kw >> n;
    if (kw != "params" || n < 0) throw DataError(what + ": expected 'params <n>'");
    if (static_cast<std::size_t>(n) != model.params().size())
      throw DataError(what + ": checkpoint has " + std::to_string(n) + " parameters, model has " +
                      std::to_string(model.params().size()));
    count = static_cast<std::size_t>(n);
  }
  std::map<std::string, bool> seen;
  for (std::size_t r = 0; r < count; ++r) {
    std::istringstream hs(next("param header"));
    std::string kw, name;
    int rank = -1;
    hs >> kw >> name >> rank;
    if (kw != "param" || rank < 0 || rank > 2)
      throw DataError(what + ": bad param record '" + line + "'");
    if (seen[name]) throw DataError(what + ": duplicate param '" + name + "'");
    seen[name] = true;
    Parameter* p = nullptr;
    try {
      p = &model.param(name);
    } catch (const std::invalid_argument&) {
      throw DataError(what + ": checkpoint param '" + name + "' not present in model");
    }
    std::vector<int> dims(rank);
    for (int& d : dims)
      if (!(hs >> d)) throw DataError(what + ": bad dims for param '" + name + "'");
    if (dims != p->value.shape)
      throw DataError(what + ": shape mismatch for param '" + name + "'");
    const int rows = rank == 2 ? dims[0] : 1;
    const int cols = static_cast<int>(p->value.numel()) / rows;
    for (int i = 0; i < rows; ++i) {
      std::istringstream vs(next(("values of '" + name + "'").c_str()));
      for (int j = 0; j < cols; ++j)
        if (!(vs >> p->value.v[std::size_t(i) * cols + j]))
          throw DataError(what + ": bad float row for param '" + name + "'");
      double extra;
      if (vs >> extra) throw DataError(what + ": excess values for param '" + name + "'");
    }
  }
  if (next("trailer") != "end") throw DataError(what + ": missing end marker");
  return model;
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  return load_checkpoint_stream(in, path);
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double devF1 = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double bestDevF1 = 0.0;
  int bestEpoch = 0;
  long clampEvents = 0;
  std::map<std::string, bool> touched;  // param ever received a nonzero gradient
};

inline std::string format_metrics(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  char buf[96];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof buf, "epoch=%d loss=%.6f devF1=%.6f", e.epoch, e.loss, e.devF1);
    os << buf << "\n";
  }
  return os.str();
}

// One sentence forward + backward; gradients accumulate into model params.
inline double train_step_loss(Model& model, const Sentence& s, const Pivot& pv,
                              std::mt19937_64& dropRng, long* clamps) {
  const DepGraph g =
      reorient(build_graph(s, model.vocabs.deprel), pv, model.cfg.reorientMode);
  Tape tape;
  Var P = model.emissions(tape, s, g, Mode::Train, dropRng);
  Var loss = model.loss(tape, P, gold_ids(s, model.cfg.task), clamps);
  const double value = tape.val(loss).v[0];
  tape.backward(loss);
  return value;
}

// Per epoch: shuffle sentence order, per sentence choose a pivot, reorient,
// forward, backward, Adam step (every `accumulate` sentences); then evaluate
// dev F1. The best-dev parameter snapshot is restored into the model at the
// end. A non-finite loss aborts naming the offending sentence.
inline TrainResult train(Model& model, const std::vector<Sentence>& trainCorpus,
                         const std::vector<Sentence>& devCorpus) {
  const TrainConfig& cfg = model.cfg;
  if (trainCorpus.empty()) throw DataError("training corpus is empty");
  for (const Sentence& s : trainCorpus)
    if (!s.has_gold(cfg.task))
      throw DataError("sentence '" + s.id + "' has no gold " + task_name(cfg.task) + " tags");

  TrainResult result;
  for (const auto& [name, p] : model.params()) result.touched[name] = false;

  std::mt19937_64 runRng(cfg.seed + 1);  // shuffling, epoch pivots, dropout
  std::vector<int> order(trainCorpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  AdamState adam;
  std::map<std::string, Tensor> best;
  result.bestDevF1 = -1.0;

  model.zero_grads();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_indices(order, runRng);
    double epochLoss = 0.0;
    int pending = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const Sentence& s = trainCorpus[order[pos]];
      Pivot pv;
      if (cfg.freezePivots) {
        std::mt19937_64 pivotRng(derive_seed(cfg.seed, s.id));
        pv = choose_pivot(s, cfg.task, pivotRng);
      } else {
        pv = choose_pivot(s, cfg.task, runRng);
      }
      const double loss = train_step_loss(model, s, pv, runRng, &result.clampEvents);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at sentence '" + s.id + "' (epoch " +
                           std::to_string(epoch) + ")");
      epochLoss += loss;
      ++pending;
      for (auto& [name, p] : model.params())
        if (!result.touched[name])
          for (double g : p.grad.v)
            if (g != 0.0) {
              result.touched[name] = true;
              break;
            }
      if (pending == cfg.accumulate || pos + 1 == order.size()) {
        adam_step(model.params(), adam, cfg);
        model.repin();
        model.zero_grads();
        pending = 0;
      }
    }
    const double devF1 = devCorpus.empty() ? 0.0 : evaluate(model, devCorpus).f1;
    result.log.push_back({epoch, epochLoss / double(trainCorpus.size()), devF1});
    if (devF1 > result.bestDevF1) {
      result.bestDevF1 = devF1;
      result.bestEpoch = epoch;
      best.clear();
      for (const auto& [name, p] : model.params()) best.emplace(name, p.value);
    }
  }
  if (!best.empty())
    for (auto& [name, p] : model.params()) p.value = best.at(name);
  return result;
}

// ---------------------------------------------------------------------------
// Gradient verification: analytic gradients vs central finite differences
// over every element of every parameter. The dropout stream is re-seeded
// before each forward pass so all evaluations see identical masks.
// ---------------------------------------------------------------------------

inline double grad_check(const TrainConfig& cfgIn, const Sentence& sentence,
                         double epsilon = 1e-4, const SidecarStore* sidecar = nullptr) {
  TrainConfig cfg = cfgIn;
  cfg.validate();
  Model model(cfg, build_vocabs({sentence}, cfg.task));
  model.sidecar = sidecar;
  std::mt19937_64 pivotRng(cfg.seed);
  const Pivot pv = choose_pivot(sentence, cfg.task, pivotRng);
  const DepGraph g =
      reorient(build_graph(sentence, model.vocabs.deprel), pv, cfg.reorientMode);
  const std::vector<int> gold = gold_ids(sentence, cfg.task);
  const std::uint64_t dropSeed = derive_seed(cfg.seed, "gradcheck");

  auto loss_value = [&]() {
    Tape tape;
    std::mt19937_64 dropRng(dropSeed);
    Var P = model.emissions(tape, sentence, g, Mode::Train, dropRng);
    Var loss = model.loss(tape, P, gold);
    return tape.val(loss).v[0];
  };

  model.zero_grads();
  {
    Tape tape;
    std::mt19937_64 dropRng(dropSeed);
    Var P = model.emissions(tape, sentence, g, Mode::Train, dropRng);
    Var loss = model.loss(tape, P, gold);
    tape.backward(loss);
  }

  double worst = 0.0;
  for (auto& [name, p] : model.params()) {
    for (std::size_t i = 0; i < p.value.v.size(); ++i) {
      const double keep = p.value.v[i];
      p.value.v[i] = keep + epsilon;
      const double up = loss_value();
      p.value.v[i] = keep - epsilon;
      const double down = loss_value();
      p.value.v[i] = keep;
      const double fd = (up - down) / (2.0 * epsilon);
      const double ga = p.grad.v[i];
      const double diff = std::abs(ga - fd);
      if (diff > 1e-6) worst = std::max(worst, diff / std::max(std::abs(ga), std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace spantagger
