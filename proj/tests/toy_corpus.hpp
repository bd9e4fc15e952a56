// Hand-built 20-sentence corpus with gold aspect spans (unified 13-label
// scheme) and opinion spans (plain BIEOS). Trees are small but realistic:
// determiners/compounds attach to nouns, predicates to the copula. Sentence
// s06 has no noun and s06/s18 no adjective, exercising the middle-token
// pivot fallback; s13 carries a three-token aspect span.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "spantagger/corpus.hpp"

namespace toy {

using spantagger::Sentence;
using spantagger::Token;

inline Sentence make(const std::string& id,
                     std::vector<std::array<std::string, 6>> rows) {
  Sentence s;
  s.id = id;
  for (auto& r : rows) {
    Token t;
    t.surface = r[0];
    t.pos = r[1];
    t.head = std::stoi(r[2]) - 1;  // rows use 1-based heads, 0 = root
    t.deprel = r[3];
    t.aspectTag = r[4];
    t.opinionTag = r[5];
    s.tokens.push_back(std::move(t));
  }
  return s;
}

inline std::vector<Sentence> corpus() {
  std::vector<Sentence> c;
  c.push_back(make("s01", {{{"the", "DT", "2", "det", "O", "O"},
                            {"pizza", "NN", "3", "nsubj", "S-POS", "O"},
                            {"was", "VBD", "0", "root", "O", "O"},
                            {"great", "JJ", "3", "acomp", "O", "S"}}}));
  c.push_back(make("s02", {{{"the", "DT", "2", "det", "O", "O"},
                            {"service", "NN", "3", "nsubj", "S-NEG", "O"},
                            {"was", "VBD", "0", "root", "O", "O"},
                            {"slow", "JJ", "3", "acomp", "O", "S"}}}));
  c.push_back(make("s03", {{{"spring", "NN", "2", "compound", "B-POS", "O"},
                            {"rolls", "NNS", "3", "nsubj", "E-POS", "O"},
                            {"were", "VBD", "0", "root", "O", "O"},
                            {"amazing", "JJ", "3", "acomp", "O", "S"}}}));
  c.push_back(make("s04", {{{"the", "DT", "3", "det", "O", "O"},
                            {"noodle", "NN", "3", "compound", "B-NEG", "O"},
                            {"soup", "NN", "4", "nsubj", "E-NEG", "O"},
                            {"tasted", "VBD", "0", "root", "O", "O"},
                            {"bland", "JJ", "4", "acomp", "O", "S"}}}));
  c.push_back(make("s05", {{{"decor", "NN", "2", "nsubj", "S-POS", "O"},
                            {"is", "VBZ", "0", "root", "O", "O"},
                            {"nice", "JJ", "2", "acomp", "O", "S"}}}));
  c.push_back(make("s06", {{{"we", "PRP", "2", "nsubj", "O", "O"},
                            {"waited", "VBD", "0", "root", "O", "O"},
                            {"forever", "RB", "2", "advmod", "O", "O"}}}));
  c.push_back(make("s07", {{{"the", "DT", "3", "det", "O", "O"},
                            {"fish", "NN", "3", "compound", "B-POS", "O"},
                            {"tacos", "NNS", "4", "nsubj", "E-POS", "O"},
                            {"were", "VBD", "0", "root", "O", "O"},
                            {"fresh", "JJ", "4", "acomp", "O", "S"},
                            {"and", "CC", "5", "cc", "O", "O"},
                            {"tasty", "JJ", "5", "conj", "O", "S"}}}));
  c.push_back(make("s08", {{{"prices", "NNS", "2", "nsubj", "S-POS", "O"},
                            {"were", "VBD", "0", "root", "O", "O"},
                            {"reasonable", "JJ", "2", "acomp", "O", "S"}}}));
  c.push_back(make("s09", {{{"the", "DT", "3", "det", "O", "O"},
                            {"wine", "NN", "3", "compound", "B-NEU", "O"},
                            {"list", "NN", "4", "nsubj", "E-NEU", "O"},
                            {"was", "VBD", "0", "root", "O", "O"},
                            {"huge", "JJ", "4", "acomp", "O", "S"}}}));
  c.push_back(make("s10", {{{"staff", "NN", "2", "nsubj", "S-NEG", "O"},
                            {"was", "VBD", "0", "root", "O", "O"},
                            {"rude", "JJ", "2", "acomp", "O", "S"}}}));
  c.push_back(make("s11", {{{"the", "DT", "3", "det", "O", "O"},
                            {"green", "JJ", "3", "amod", "B-NEG", "O"},
                            {"curry", "NN", "4", "nsubj", "E-NEG", "O"},
                            {"lacked", "VBD", "0", "root", "O", "O"},
                            {"flavor", "NN", "4", "dobj", "O", "O"}}}));
  c.push_back(make("s12", {{{"lovely", "JJ", "2", "amod", "O", "S"},
                            {"atmosphere", "NN", "0", "root", "S-POS", "O"}}}));
  c.push_back(make("s13", {{{"the", "DT", "4", "det", "O", "O"},
                            {"bread", "NN", "4", "compound", "B-POS", "O"},
                            {"pudding", "NN", "4", "compound", "I-POS", "O"},
                            {"dessert", "NN", "5", "nsubj", "E-POS", "O"},
                            {"was", "VBD", "0", "root", "O", "O"},
                            {"divine", "JJ", "5", "acomp", "O", "S"}}}));
  c.push_back(make("s14", {{{"service", "NN", "2", "nsubj", "S-NEU", "O"},
                            {"was", "VBD", "0", "root", "O", "O"},
                            {"quick", "JJ", "2", "acomp", "O", "S"},
                            {"but", "CC", "3", "cc", "O", "O"},
                            {"impersonal", "JJ", "3", "conj", "O", "S"}}}));
  c.push_back(make("s15", {{{"the", "DT", "2", "det", "O", "O"},
                            {"menu", "NN", "3", "nsubj", "S-NEG", "O"},
                            {"felt", "VBD", "0", "root", "O", "O"},
                            {"dated", "JJ", "3", "acomp", "O", "S"}}}));
  c.push_back(make("s16", {{{"portions", "NNS", "2", "nsubj", "S-POS", "O"},
                            {"are", "VBP", "0", "root", "O", "O"},
                            {"big", "JJ", "2", "acomp", "O", "S"}}}));
  c.push_back(make("s17", {{{"the", "DT", "3", "det", "O", "O"},
                            {"iced", "JJ", "3", "amod", "B-NEG", "O"},
                            {"tea", "NN", "4", "nsubj", "E-NEG", "O"},
                            {"was", "VBD", "0", "root", "O", "O"},
                            {"watery", "JJ", "4", "acomp", "O", "S"}}}));
  c.push_back(make("s18", {{{"i", "PRP", "2", "nsubj", "O", "O"},
                            {"liked", "VBD", "0", "root", "O", "S"},
                            {"the", "DT", "4", "det", "O", "O"},
                            {"salmon", "NN", "2", "dobj", "S-POS", "O"}}}));
  c.push_back(make("s19", {{{"the", "DT", "2", "det", "O", "O"},
                            {"music", "NN", "3", "nsubj", "S-NEG", "O"},
                            {"was", "VBD", "0", "root", "O", "O"},
                            {"too", "RB", "5", "advmod", "O", "B"},
                            {"loud", "JJ", "3", "acomp", "O", "E"}}}));
  c.push_back(make("s20", {{{"great", "JJ", "2", "amod", "O", "S"},
                            {"food", "NN", "0", "root", "S-POS", "O"},
                            {"and", "CC", "2", "cc", "O", "O"},
                            {"great", "JJ", "5", "amod", "O", "S"},
                            {"mood", "NN", "2", "conj", "S-POS", "O"}}}));
  return c;
}

}  // namespace toy
