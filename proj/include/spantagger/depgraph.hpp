#pragma once

#include <map>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "spantagger/corpus.hpp"
#include "spantagger/rng.hpp"

namespace spantagger {

enum class ReorientMode { Star, Reroot };

inline std::string reorient_mode_name(ReorientMode m) {
  return m == ReorientMode::Star ? "star" : "reroot";
}

inline ReorientMode parse_reorient_mode(const std::string& s) {
  if (s == "star") return ReorientMode::Star;
  if (s == "reroot") return ReorientMode::Reroot;
  throw ConfigError("reorientMode: unknown value '" + s + "'");
}

struct Pivot {
  enum class How { Noun, Adjective, Middle };
  int index = 0;
  How how = How::Middle;
};

// Undirected message-passing graph: per-node neighbor lists (j, relId),
// sorted by j, each including the node's own self-loop. Relation labels are
// shared by both directions of an edge.
struct DepGraph {
  int n = 0;
  const Vocab* rels = nullptr;
  std::vector<std::vector<std::pair<int, int>>> nbr;

  int self_rel() const { return require_rel("self"); }

  int require_rel(const std::string& name) const {
    const int id = rels->lookup(name);
    if (id == Vocab::kUnk && name != rels->words[Vocab::kUnk])
      throw std::invalid_argument("relation vocabulary lacks reserved label '" + name + "'");
    return id;
  }

  // Count of undirected non-self edges.
  int edge_count() const {
    int c = 0;
    for (int i = 0; i < n; ++i)
      for (auto [j, r] : nbr[i])
        if (j > i) ++c;
    return c;
  }
};

namespace detail {
inline DepGraph from_pairs(int n, const Vocab* rels,
                           const std::map<std::pair<int, int>, int>& undirected) {
  DepGraph g;
  g.n = n;
  g.rels = rels;
  g.nbr.assign(n, {});
  const int self = g.self_rel();
  std::vector<std::map<int, int>> adj(n);
  for (int i = 0; i < n; ++i) adj[i][i] = self;
  for (const auto& [e, rel] : undirected) {
    adj[e.first][e.second] = rel;
    adj[e.second][e.first] = rel;
  }
  for (int i = 0; i < n; ++i)
    for (const auto& [j, rel] : adj[i]) g.nbr[i].push_back({j, rel});
  return g;
}
}  // namespace detail

// One undirected edge per (head, dependent) arc, labeled by the dependent's
// deprel, plus a self-loop at every node.
inline DepGraph build_graph(const Sentence& s, const Vocab& rels) {
  check_tree(s);
  std::map<std::pair<int, int>, int> edges;
  for (int i = 0; i < s.size(); ++i) {
    const int h = s.tokens[i].head;
    if (h < 0) continue;
    edges[{std::min(i, h), std::max(i, h)}] = rels.lookup(s.tokens[i].deprel);
  }
  return detail::from_pairs(s.size(), &rels, edges);
}

inline bool is_noun_pos(const std::string& pos) {
  return pos.rfind("NN", 0) == 0 || pos == "NOUN" || pos == "PROPN";
}

inline bool is_adjective_pos(const std::string& pos) {
  return pos.rfind("JJ", 0) == 0 || pos == "ADJ";
}

// Uniformly random token from the task's POS class; the middle token when the
// class is empty.
inline Pivot choose_pivot(const Sentence& s, TaskKind task, std::mt19937_64& rng) {
  if (s.tokens.empty()) throw std::invalid_argument("choose_pivot: empty sentence");
  std::vector<int> pool;
  const bool wantNoun = task == TaskKind::Aspect;
  for (int i = 0; i < s.size(); ++i) {
    const std::string& pos = s.tokens[i].pos;
    if (wantNoun ? is_noun_pos(pos) : is_adjective_pos(pos)) pool.push_back(i);
  }
  if (pool.empty()) return {s.size() / 2, Pivot::How::Middle};
  const int pick = pool[bounded_rand(rng, pool.size())];
  return {pick, wantNoun ? Pivot::How::Noun : Pivot::How::Adjective};
}

// BFS hops from `from`, ignoring self-loops. -1 marks unreachable nodes.
inline std::vector<int> graph_distances(const DepGraph& g, int from) {
  if (from < 0 || from >= g.n) throw std::invalid_argument("graph_distances: bad start node");
  std::vector<int> dist(g.n, -1);
  std::queue<int> q;
  dist[from] = 0;
  q.push(from);
  while (!q.empty()) {
    const int i = q.front();
    q.pop();
    for (auto [j, rel] : g.nbr[i])
      if (j != i && dist[j] < 0) {
        dist[j] = dist[i] + 1;
        q.push(j);
      }
  }
  return dist;
}

inline int find_rel(const DepGraph& g, int i, int j) {
  for (auto [k, rel] : g.nbr[i])
    if (k == j) return rel;
  return -1;
}

// Star: pivot joined to every other node. Direct neighbors keep their label;
// the rest get "con:<distance>" with everything past 4 hops pooled as
// "con:far". Reroot: recompute arc directions by BFS from the pivot; after
// symmetrization the neighborhoods are unchanged, so this is a label-safe
// conservative alternative.
inline DepGraph reorient(const DepGraph& g, Pivot pivot, ReorientMode mode) {
  if (pivot.index < 0 || pivot.index >= g.n)
    throw std::invalid_argument("reorient: pivot index out of range");
  const int p = pivot.index;
  std::map<std::pair<int, int>, int> edges;
  if (mode == ReorientMode::Star) {
    const std::vector<int> dist = graph_distances(g, p);
    for (int j = 0; j < g.n; ++j) {
      if (j == p) continue;
      if (dist[j] < 0)
        throw std::invalid_argument("reorient: graph is disconnected from the pivot");
      int rel;
      if (dist[j] == 1) {
        rel = find_rel(g, p, j);
      } else if (dist[j] <= 4) {
        rel = g.require_rel("con:" + std::to_string(dist[j]));
      } else {
        rel = g.require_rel("con:far");
      }
      edges[{std::min(p, j), std::max(p, j)}] = rel;
    }
  } else {
    std::vector<int> dist = graph_distances(g, p);
    for (int i = 0; i < g.n; ++i)
      for (auto [j, rel] : g.nbr[i])
        if (j != i && dist[j] == dist[i] + 1) edges[{std::min(i, j), std::max(i, j)}] = rel;
    // Keep anything BFS could not orient (cross edges in non-tree input).
    for (int i = 0; i < g.n; ++i)
      for (auto [j, rel] : g.nbr[i])
        if (j > i && !edges.count({i, j})) edges[{i, j}] = rel;
  }
  return detail::from_pairs(g.n, g.rels, edges);
}

// Flattened edge view consumed by the model: edges grouped by destination
// node i, seg holding n+1 offsets, so row e describes neighbor src[e] ∈ N_i.
struct EdgeList {
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> rel;
  std::vector<int> seg;
};

inline EdgeList flatten(const DepGraph& g) {
  EdgeList e;
  e.seg.push_back(0);
  for (int i = 0; i < g.n; ++i) {
    for (auto [j, rel] : g.nbr[i]) {
      e.src.push_back(j);
      e.dst.push_back(i);
      e.rel.push_back(rel);
    }
    e.seg.push_back(static_cast<int>(e.src.size()));
  }
  return e;
}

}  // namespace spantagger
