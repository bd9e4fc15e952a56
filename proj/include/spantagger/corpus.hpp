#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "spantagger/errors.hpp"

namespace spantagger {

enum class TaskKind { Aspect, Opinion };

inline std::string task_name(TaskKind t) { return t == TaskKind::Aspect ? "aspect" : "opinion"; }

inline TaskKind parse_task(const std::string& s) {
  if (s == "aspect") return TaskKind::Aspect;
  if (s == "opinion") return TaskKind::Opinion;
  throw ConfigError("task: unknown value '" + s + "'");
}

// Unified scheme: BIEOS positions crossed with sentiment, plus O (13 labels).
// Plain scheme: bare BIEOS (5 labels).
inline const std::vector<std::string>& unified_tags() {
  static const std::vector<std::string> tags = {
      "O",     "B-POS", "I-POS", "E-POS", "S-POS", "B-NEG", "I-NEG",
      "E-NEG", "S-NEG", "B-NEU", "I-NEU", "E-NEU", "S-NEU"};
  return tags;
}

inline const std::vector<std::string>& plain_tags() {
  static const std::vector<std::string> tags = {"O", "B", "I", "E", "S"};
  return tags;
}

inline const std::vector<std::string>& tag_set(TaskKind task) {
  return task == TaskKind::Aspect ? unified_tags() : plain_tags();
}

inline int tag_id(TaskKind task, const std::string& tag) {
  const auto& set = tag_set(task);
  for (std::size_t i = 0; i < set.size(); ++i)
    if (set[i] == tag) return static_cast<int>(i);
  throw std::invalid_argument("unknown " + task_name(task) + " tag '" + tag + "'");
}

inline bool is_valid_tag(TaskKind task, const std::string& tag) {
  const auto& set = tag_set(task);
  return std::find(set.begin(), set.end(), tag) != set.end();
}

// Position letter (B/I/E/S/O) and sentiment ("POS"/"NEG"/"NEU", empty for
// plain or O tags).
inline char tag_position(const std::string& tag) { return tag.empty() ? 'O' : tag[0]; }

inline std::string tag_sentiment(const std::string& tag) {
  auto dash = tag.find('-');
  return dash == std::string::npos ? std::string() : tag.substr(dash + 1);
}

// BIEOS adjacency rules shared by validation and the optional CRF mask.
inline bool bieos_can_start(const std::string& tag) {
  const char p = tag_position(tag);
  return p == 'B' || p == 'S' || p == 'O';
}

inline bool bieos_can_end(const std::string& tag) {
  const char p = tag_position(tag);
  return p == 'E' || p == 'S' || p == 'O';
}

inline bool bieos_can_follow(const std::string& prev, const std::string& next) {
  const char a = tag_position(prev), b = tag_position(next);
  const bool aOpen = (a == 'B' || a == 'I');
  if (aOpen) {
    // An open span continues with I or closes with E of the same sentiment.
    return (b == 'I' || b == 'E') && tag_sentiment(prev) == tag_sentiment(next);
  }
  // After O, E or S anything that starts fresh is fine.
  return b == 'B' || b == 'S' || b == 'O';
}

inline bool wellformed_tag_sequence(const std::vector<std::string>& tags) {
  if (tags.empty()) return true;
  if (!bieos_can_start(tags.front())) return false;
  for (std::size_t i = 0; i + 1 < tags.size(); ++i)
    if (!bieos_can_follow(tags[i], tags[i + 1])) return false;
  return bieos_can_end(tags.back());
}

enum class SpanLabel { Pos, Neg, Neu, Opinion };

inline std::string span_label_name(SpanLabel l) {
  switch (l) {
    case SpanLabel::Pos: return "POS";
    case SpanLabel::Neg: return "NEG";
    case SpanLabel::Neu: return "NEU";
    case SpanLabel::Opinion: return "OPINION";
  }
  return "?";
}

struct Span {
  int start = 0;
  int end = 0;  // inclusive
  SpanLabel label = SpanLabel::Opinion;

  bool operator==(const Span& o) const {
    return start == o.start && end == o.end && label == o.label;
  }
  bool operator<(const Span& o) const {
    if (start != o.start) return start < o.start;
    if (end != o.end) return end < o.end;
    return static_cast<int>(label) < static_cast<int>(o.label);
  }
};

struct Token {
  std::string surface;
  std::string pos;
  int head = -1;  // 0-based governor index, -1 for ROOT
  std::string deprel;
  std::string aspectTag;   // unified tag or "_"
  std::string opinionTag;  // plain BIEOS tag or "_"

  const std::string& tag(TaskKind task) const {
    return task == TaskKind::Aspect ? aspectTag : opinionTag;
  }
  std::string& tag(TaskKind task) { return task == TaskKind::Aspect ? aspectTag : opinionTag; }
};

struct Sentence {
  std::string id;
  std::vector<Token> tokens;

  int size() const { return static_cast<int>(tokens.size()); }

  std::vector<std::string> tags(TaskKind task) const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const Token& t : tokens) out.push_back(t.tag(task));
    return out;
  }

  bool has_gold(TaskKind task) const {
    for (const Token& t : tokens)
      if (t.tag(task) == "_") return false;
    return !tokens.empty();
  }
};

// Head links must form a tree: exactly one ROOT, no self-loops, every token
// reaching ROOT without revisiting a node.
inline void check_tree(const Sentence& s) {
  const int n = s.size();
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    const int h = s.tokens[i].head;
    if (h == -1) {
      ++roots;
      continue;
    }
    if (h < 0 || h >= n)
      throw DataError("sentence '" + s.id + "': token " + std::to_string(i + 1) +
                      " has head index out of range");
    if (h == i)
      throw DataError("sentence '" + s.id + "': token " + std::to_string(i + 1) +
                      " is its own head");
  }
  if (roots != 1)
    throw DataError("sentence '" + s.id + "': expected exactly one ROOT, found " +
                    std::to_string(roots));
  for (int i = 0; i < n; ++i) {
    std::vector<bool> seen(n, false);
    int cur = i;
    while (cur != -1) {
      if (seen[cur])
        throw DataError("sentence '" + s.id + "': head links contain a cycle through token " +
                        std::to_string(cur + 1));
      seen[cur] = true;
      cur = s.tokens[cur].head;
    }
  }
}

enum class SpanMode { Strict, Lenient };

// Strict: only complete B[I...]E runs with one sentiment, or S, become spans;
// anything ill-formed contributes nothing. Lenient salvages maximal runs and
// is never used for scoring.
inline std::vector<Span> tags_to_spans(const std::vector<std::string>& tags, TaskKind task,
                                       SpanMode mode = SpanMode::Strict) {
  for (const std::string& t : tags)
    if (!is_valid_tag(task, t)) throw std::invalid_argument("unknown tag '" + t + "'");
  auto label_of = [&](const std::string& tag) {
    if (task == TaskKind::Opinion) return SpanLabel::Opinion;
    const std::string s = tag_sentiment(tag);
    if (s == "POS") return SpanLabel::Pos;
    if (s == "NEG") return SpanLabel::Neg;
    return SpanLabel::Neu;
  };
  std::vector<Span> out;
  const int n = static_cast<int>(tags.size());
  if (mode == SpanMode::Strict) {
    int i = 0;
    while (i < n) {
      const char p = tag_position(tags[i]);
      if (p == 'S') {
        out.push_back({i, i, label_of(tags[i])});
        ++i;
      } else if (p == 'B') {
        const std::string sent = tag_sentiment(tags[i]);
        int j = i + 1;
        while (j < n && tag_position(tags[j]) == 'I' && tag_sentiment(tags[j]) == sent) ++j;
        if (j < n && tag_position(tags[j]) == 'E' && tag_sentiment(tags[j]) == sent) {
          out.push_back({i, j, label_of(tags[i])});
          i = j + 1;
        } else {
          ++i;  // ill-formed, no span
        }
      } else {
        ++i;  // O, or orphan I/E
      }
    }
  } else {
    int i = 0;
    while (i < n) {
      const char p = tag_position(tags[i]);
      if (p == 'O') {
        ++i;
        continue;
      }
      const std::string sent = tag_sentiment(tags[i]);
      int j = i;
      if (p == 'B' || p == 'I') {
        while (j + 1 < n) {
          const char q = tag_position(tags[j + 1]);
          if (tag_sentiment(tags[j + 1]) != sent) break;
          if (q == 'I') {
            ++j;
          } else if (q == 'E') {
            ++j;
            break;
          } else {
            break;
          }
        }
      }
      out.push_back({i, j, label_of(tags[i])});
      i = j + 1;
    }
  }
  return out;
}

// Inverse of strict extraction. Spans must be within range and disjoint.
inline std::vector<std::string> spans_to_tags(std::vector<Span> spans, int length,
                                              TaskKind task) {
  std::sort(spans.begin(), spans.end());
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const Span& s = spans[k];
    if (s.start < 0 || s.end >= length || s.start > s.end)
      throw std::invalid_argument("span out of range");
    if (k > 0 && spans[k - 1].end >= s.start)
      throw std::invalid_argument("overlapping spans");
    if (task == TaskKind::Opinion && s.label != SpanLabel::Opinion)
      throw std::invalid_argument("opinion spans must carry the OPINION label");
    if (task == TaskKind::Aspect && s.label == SpanLabel::Opinion)
      throw std::invalid_argument("aspect spans need a sentiment label");
  }
  std::vector<std::string> tags(length, "O");
  auto suffix = [&](SpanLabel l) {
    return task == TaskKind::Opinion ? std::string() : "-" + span_label_name(l);
  };
  for (const Span& s : spans) {
    if (s.start == s.end) {
      tags[s.start] = "S" + suffix(s.label);
    } else {
      tags[s.start] = "B" + suffix(s.label);
      for (int i = s.start + 1; i < s.end; ++i) tags[i] = "I" + suffix(s.label);
      tags[s.end] = "E" + suffix(s.label);
    }
  }
  return tags;
}

// ---------------------------------------------------------------------------
// Corpus file format: sentences separated by blank lines, each introduced by
// "# id = <string>", token lines with 6 tab-separated columns:
// SURFACE  POS  HEAD(1-based, 0=ROOT)  DEPREL  ASPECT_TAG  OPINION_TAG
// "_" marks a missing gold column. Other '#' lines are comments.
// ---------------------------------------------------------------------------

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

inline std::vector<Sentence> read_corpus_stream(std::istream& in, TaskKind task,
                                                const std::string& what) {
  std::vector<Sentence> out;
  Sentence cur;
  bool open = false;
  int lineno = 0;
  int sentStartLine = 0;
  std::string line;

  auto fail = [&](int ln, const std::string& msg) {
    throw DataError(what + ":" + std::to_string(ln) + ": " + msg +
                    (cur.id.empty() ? "" : " (sentence '" + cur.id + "')"));
  };

  auto flush = [&]() {
    if (!open) return;
    if (cur.tokens.empty()) fail(sentStartLine, "sentence has no token lines");
    check_tree(cur);
    bool anyGold = false, anyMissing = false;
    for (const Token& t : cur.tokens) (t.tag(task) == "_" ? anyMissing : anyGold) = true;
    if (anyGold && anyMissing)
      fail(sentStartLine, "mixed gold and '_' entries in the " + task_name(task) + " column");
    out.push_back(std::move(cur));
    cur = Sentence{};
    open = false;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key, eq;
      hs >> key >> eq;
      if (key == "id" && eq == "=") {
        if (open && !cur.tokens.empty()) flush();
        std::string id;
        std::getline(hs, id);
        while (!id.empty() && id.front() == ' ') id.erase(id.begin());
        if (id.empty()) fail(lineno, "empty sentence id");
        cur.id = id;
        open = true;
        sentStartLine = lineno;
      }
      continue;  // other comments ignored
    }
    if (!open) fail(lineno, "token line before any '# id = ...' header");
    std::vector<std::string> cols = split_tabs(line);
    if (cols.size() != 6)
      fail(lineno, "expected 6 tab-separated columns, got " + std::to_string(cols.size()));
    Token tok;
    tok.surface = cols[0];
    tok.pos = cols[1];
    if (cols[2] == "0" || cols[2] == "ROOT") {
      tok.head = -1;
    } else {
      try {
        std::size_t used = 0;
        int h = std::stoi(cols[2], &used);
        if (used != cols[2].size() || h < 1) throw std::invalid_argument("");
        tok.head = h - 1;
      } catch (...) {
        fail(lineno, "bad head field '" + cols[2] + "'");
      }
    }
    tok.deprel = cols[3];
    tok.aspectTag = cols[4];
    tok.opinionTag = cols[5];
    if (tok.aspectTag != "_" && !is_valid_tag(TaskKind::Aspect, tok.aspectTag))
      fail(lineno, "bad aspect tag '" + tok.aspectTag + "'");
    if (tok.opinionTag != "_" && !is_valid_tag(TaskKind::Opinion, tok.opinionTag))
      fail(lineno, "bad opinion tag '" + tok.opinionTag + "'");
    cur.tokens.push_back(std::move(tok));
  }
  flush();
  return out;
}

inline std::vector<Sentence> read_corpus(const std::string& path, TaskKind task) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  return read_corpus_stream(in, task, path);
}

inline void write_corpus_stream(std::ostream& out, const std::vector<Sentence>& corpus) {
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const Sentence& sent = corpus[s];
    out << "# id = " << sent.id << "\n";
    for (const Token& t : sent.tokens)
      out << t.surface << '\t' << t.pos << '\t' << (t.head < 0 ? 0 : t.head + 1) << '\t'
          << t.deprel << '\t' << t.aspectTag << '\t' << t.opinionTag << "\n";
    if (s + 1 < corpus.size()) out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Vocabularies. Surface/POS/deprel maps reserve id 0 for UNK; tags use the
// fixed closed sets above and never map to UNK.
// ---------------------------------------------------------------------------

struct Vocab {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;

  static constexpr int kUnk = 0;

  int add(const std::string& w) {
    auto it = index.find(w);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(words.size());
    words.push_back(w);
    index.emplace(w, id);
    return id;
  }

  int lookup(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? kUnk : it->second;
  }

  int size() const { return static_cast<int>(words.size()); }
};

// Synthetic relation labels minted by star reorientation; kept at fixed ids
// so graphs built from any corpus agree on them.
inline const std::vector<std::string>& reserved_relations() {
  static const std::vector<std::string> r = {"self", "con:2", "con:3", "con:4", "con:far"};
  return r;
}

struct Vocabs {
  Vocab token;
  Vocab pos;
  Vocab deprel;
  std::vector<std::string> tags;  // canonical per-task tag list

  int tag_count() const { return static_cast<int>(tags.size()); }
};

inline Vocabs build_vocabs(const std::vector<Sentence>& corpus, TaskKind task) {
  if (corpus.empty()) throw std::invalid_argument("build_vocabs: empty corpus");
  Vocabs v;
  v.token.add("<UNK>");
  v.pos.add("<UNK>");
  v.deprel.add("<UNK>");
  for (const std::string& r : reserved_relations()) v.deprel.add(r);
  for (const Sentence& s : corpus)
    for (const Token& t : s.tokens) {
      v.token.add(t.surface);
      v.pos.add(t.pos);
      v.deprel.add(t.deprel);
    }
  v.tags = tag_set(task);
  return v;
}

inline void write_vocab(std::ostream& out, const std::string& name, const Vocab& v) {
  out << "vocab " << name << " " << v.size() << "\n";
  for (const std::string& w : v.words) out << w << "\n";
}

inline Vocab read_vocab(std::istream& in, const std::string& expectName) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("vocab block truncated");
  std::istringstream hs(line);
  std::string kw, name;
  int n = -1;
  hs >> kw >> name >> n;
  if (kw != "vocab" || name != expectName || n < 0)
    throw DataError("expected 'vocab " + expectName + " <n>' header, got '" + line + "'");
  Vocab v;
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw DataError("vocab '" + expectName + "' truncated");
    v.add(line);
  }
  if (v.size() != n) throw DataError("vocab '" + expectName + "' has duplicate entries");
  return v;
}

}  // namespace spantagger
