#pragma once

#include <array>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spantagger/depgraph.hpp"
#include "spantagger/model.hpp"
#include "spantagger/rng.hpp"

namespace spantagger {

// Entity-level micro scores: a predicted span counts iff (start, end, label)
// exactly matches a gold span.
struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long numGold = 0;
  long numPred = 0;
  long numCorrect = 0;
  std::map<std::string, std::array<long, 3>> perLabel;  // gold, pred, correct
};

inline EvalReport score_spans(const std::vector<std::vector<Span>>& gold,
                              const std::vector<std::vector<Span>>& pred) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("score_spans: corpus size mismatch");
  EvalReport r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    for (const Span& g : gold[s]) {
      ++r.numGold;
      ++r.perLabel[span_label_name(g.label)][0];
    }
    for (const Span& p : pred[s]) {
      ++r.numPred;
      ++r.perLabel[span_label_name(p.label)][1];
      for (const Span& g : gold[s])
        if (p == g) {
          ++r.numCorrect;
          ++r.perLabel[span_label_name(p.label)][2];
          break;
        }
    }
  }
  r.precision = r.numPred > 0 ? double(r.numCorrect) / r.numPred : 0.0;
  r.recall = r.numGold > 0 ? double(r.numCorrect) / r.numGold : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

// Decode one sentence with the model in eval mode. The pivot draw is seeded
// from the run seed and the sentence id, so results do not depend on corpus
// order and repeat runs are identical.
inline std::vector<int> predict_tags(Model& model, const Sentence& s) {
  std::mt19937_64 pivotRng(derive_seed(model.cfg.seed, s.id));
  const Pivot pv = choose_pivot(s, model.cfg.task, pivotRng);
  const DepGraph g =
      reorient(build_graph(s, model.vocabs.deprel), pv, model.cfg.reorientMode);
  Tape tape;
  std::mt19937_64 dropRng(0);  // eval mode: dropout inactive
  Var P = model.emissions(tape, s, g, Mode::Eval, dropRng);
  return model.decode(tape.val(P));
}

inline EvalReport evaluate(Model& model, const std::vector<Sentence>& corpus) {
  const TaskKind task = model.cfg.task;
  std::vector<std::vector<Span>> gold, pred;
  gold.reserve(corpus.size());
  pred.reserve(corpus.size());
  for (const Sentence& s : corpus) {
    if (!s.has_gold(task))
      throw DataError("sentence '" + s.id + "' has no gold " + task_name(task) + " tags");
    gold.push_back(tags_to_spans(s.tags(task), task, SpanMode::Strict));
    std::vector<std::string> tags;
    for (int id : predict_tags(model, s)) tags.push_back(model.vocabs.tags[id]);
    pred.push_back(tags_to_spans(tags, task, SpanMode::Strict));
  }
  return score_spans(gold, pred);
}

// Copy of the corpus with the task column replaced by predictions; the other
// task's column is left untouched.
inline std::vector<Sentence> predict(Model& model, std::vector<Sentence> corpus) {
  for (Sentence& s : corpus) {
    const std::vector<int> ids = predict_tags(model, s);
    for (int i = 0; i < s.size(); ++i)
      s.tokens[i].tag(model.cfg.task) = model.vocabs.tags[ids[i]];
  }
  return corpus;
}

inline std::string format_score(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

inline std::string machine_line(TaskKind task, const EvalReport& r) {
  std::ostringstream os;
  os << "task=" << task_name(task) << " P=" << format_score(r.precision)
     << " R=" << format_score(r.recall) << " F1=" << format_score(r.f1)
     << " gold=" << r.numGold << " pred=" << r.numPred << " correct=" << r.numCorrect;
  return os.str();
}

inline std::string human_report(TaskKind task, const EvalReport& r) {
  std::ostringstream os;
  os << task_name(task) << " extraction (entity-level, exact span match)\n"
     << "  precision: " << format_score(r.precision) << "  (" << r.numCorrect << "/" << r.numPred
     << ")\n"
     << "  recall:    " << format_score(r.recall) << "  (" << r.numCorrect << "/" << r.numGold
     << ")\n"
     << "  F1:        " << format_score(r.f1) << "\n";
  if (r.perLabel.size() > 1)
    for (const auto& [label, c] : r.perLabel)
      os << "  " << label << ": gold=" << c[0] << " pred=" << c[1] << " correct=" << c[2]
         << "\n";
  return os.str();
}

}  // namespace spantagger
