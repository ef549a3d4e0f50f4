#pragma once

// Merge step: score every edge of a subtree by how well the cross block
// S(A(e), B(e)) is explained by the rank-one direction u_A u_B^T taken from
// the leading singular vector of S(C1, C2), root each subtree at its best
// edge and connect the roots.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stdr/error.hpp"
#include "stdr/linalg.hpp"
#include "stdr/matrix.hpp"
#include "stdr/trees.hpp"

namespace stdr {

struct EdgeScore {
  EdgeId edge = 0;
  double d = std::numeric_limits<double>::infinity();  // +inf for a zero block
  double alpha = 0.0;
  std::size_t a_size = 0, b_size = 0;
};

/// Leaf sets on either side of e (A contains edge(e).a's side).
inline std::pair<LeafSet, LeafSet> edge_partitions(const UnrootedTree& t, EdgeId e) {
  return split_at_edge(t, e);
}

namespace detail {

/// Scores all edges of `t`. `block` is the similarity among t's leaves and
/// `u` the singular-vector weights, both indexed by `pos[leaf node]`.
inline std::vector<EdgeScore> score_all_edges(const TreeGraph& t, const Matrix& block,
                                              const std::vector<Index>& pos, const Vector& u) {
  const std::size_t k = t.leaf_count();
  std::vector<EdgeScore> out;
  if (t.edge_count() == 0) return out;
  HungTree h = hang(t, t.leaves().front());
  // leaf positions below every node
  std::vector<std::vector<Index>> below(t.node_count());
  for (auto it = h.preorder.rbegin(); it != h.preorder.rend(); ++it) {
    NodeId v = *it;
    if (t.is_leaf(v)) below[v].push_back(pos[v]);
    if (h.parent[v] != v) {
      auto& p = below[h.parent[v]];
      p.insert(p.end(), below[v].begin(), below[v].end());
    }
  }
  std::vector<char> mark(k, 0);
  std::vector<Index> other;
  out.resize(t.edge_count());
  for (NodeId v = 0; v < t.node_count(); ++v) {
    if (h.parent[v] == v) continue;
    const EdgeId e = h.parent_edge[v];
    const auto& a = below[v];
    std::fill(mark.begin(), mark.end(), 0);
    for (Index p : a) mark[p] = 1;
    other.clear();
    for (Index p = 0; p < static_cast<Index>(k); ++p)
      if (!mark[p]) other.push_back(p);
    double na = 0.0, nb = 0.0, cross = 0.0, norm2 = 0.0;
    for (Index p : a) na += u[p] * u[p];
    for (Index q : other) nb += u[q] * u[q];
    for (Index p : a) {
      const double* col = block.col(p).data();
      double acc = 0.0;
      for (Index q : other) {
        acc += col[q] * u[q];
        norm2 += col[q] * col[q];
      }
      cross += u[p] * acc;
    }
    EdgeScore sc;
    sc.edge = e;
    sc.a_size = a.size();
    sc.b_size = other.size();
    if (norm2 > 0.0) {
      sc.alpha = (na > 0.0 && nb > 0.0) ? cross / (na * nb) : 0.0;
      double res = 0.0;
      for (Index p : a) {
        const double* col = block.col(p).data();
        const double up = sc.alpha * u[p];
        for (Index q : other) {
          const double r = col[q] - up * u[q];
          res += r * r;
        }
      }
      sc.d = std::sqrt(res / norm2);
    }
    // A is the side of edge(e).a
    if (t.edge(e).a != v) std::swap(sc.a_size, sc.b_size);
    out[e] = sc;
  }
  return out;
}

inline Bipartition edge_bipartition(const TreeGraph& t, EdgeId e) {
  auto [x, y] = split_at_edge(t, e);
  return make_bipartition(std::move(x), std::move(y));
}

/// argmin d(e); exact ties broken by the smaller bipartition. With every
/// block degenerate the most balanced edge is used.
inline EdgeId argmin_edge(const TreeGraph& t, const std::vector<EdgeScore>& scores) {
  std::optional<EdgeId> best;
  for (const auto& sc : scores) {
    if (!std::isfinite(sc.d)) continue;
    if (!best || sc.d < scores[*best].d) {
      best = sc.edge;
    } else if (sc.d == scores[*best].d &&
               edge_bipartition(t, sc.edge) < edge_bipartition(t, *best)) {
      best = sc.edge;
    }
  }
  if (best) return *best;
  EdgeId centroid = 0;
  std::size_t best_max = std::numeric_limits<std::size_t>::max();
  for (const auto& sc : scores) {
    std::size_t mx = std::max(sc.a_size, sc.b_size);
    if (mx < best_max) {
      best_max = mx;
      centroid = sc.edge;
    }
  }
  return centroid;
}

/// Leaf positions of t relative to `order` (global indices of its leaves).
inline std::vector<Index> leaf_positions(const TreeGraph& t,
                                         const std::unordered_map<std::string, Index>& pos_of) {
  std::vector<Index> pos(t.node_count(), -1);
  for (NodeId v : t.leaves()) {
    auto it = pos_of.find(t.label(v));
    if (it == pos_of.end())
      throw Error(ErrorKind::usage, "subtree leaf '" + t.label(v) + "' not in its clan");
    pos[v] = it->second;
  }
  return pos;
}

inline std::unordered_map<std::string, Index> position_map(const std::vector<std::string>& labels) {
  std::unordered_map<std::string, Index> m;
  for (std::size_t i = 0; i < labels.size(); ++i) m.emplace(labels[i], static_cast<Index>(i));
  return m;
}

}  // namespace detail

/// d(e) = min_alpha ||S(A,B) - alpha u_A u_B^T||_F / ||S(A,B)||_F for one edge
/// of t1, with u indexed in the (sorted) order of C1.
inline EdgeScore edge_score(const SimilarityMatrix& s, const LeafSet& c1, const LeafSet& c2,
                            const UnrootedTree& t1, EdgeId e, const Vector& u) {
  (void)c2;
  if (e >= t1.edge_count()) throw StructuralError("edge not in subtree");
  std::vector<std::string> order(c1.begin(), c1.end());
  if (u.size() != static_cast<Index>(order.size()))
    throw Error(ErrorKind::usage, "u must have one entry per leaf of C1");
  auto idx = s.indices_of(order);
  Matrix block = gather(s.values(), idx, idx);
  auto pos = detail::leaf_positions(t1, detail::position_map(order));
  EdgeScore sc = detail::score_all_edges(t1, block, pos, u)[e];
  if (!std::isfinite(sc.d)) throw DegenerateError("edge score: S(A,B) is the zero block");
  return sc;
}

struct PlaceholderChoice {
  std::optional<EdgeId> edge;  // empty for a single-leaf subtree
  std::vector<EdgeScore> scores;
};

namespace detail {

/// Best placeholder edge of subtree t over the clan `clan` (global indices in
/// `s`), given singular-vector weights `u` over `clan`.
inline PlaceholderChoice choose_placeholder(const Matrix& s, const std::vector<Index>& clan,
                                            const std::vector<std::string>& clan_labels,
                                            const UnrootedTree& t, const Vector& u) {
  PlaceholderChoice c;
  if (t.edge_count() == 0) return c;
  Matrix block = gather(s, clan, clan);
  auto pos = leaf_positions(t, position_map(clan_labels));
  c.scores = score_all_edges(t, block, pos, u);
  c.edge = argmin_edge(t, c.scores);
  return c;
}

}  // namespace detail

inline EdgeId find_placeholder_edge(const SimilarityMatrix& s, const LeafSet& c1,
                                    const LeafSet& c2, const UnrootedTree& t1) {
  if (t1.edge_count() == 0) throw StructuralError("subtree has no edges");
  std::vector<std::string> o1(c1.begin(), c1.end()), o2(c2.begin(), c2.end());
  auto i1 = s.indices_of(o1);
  auto i2 = s.indices_of(o2);
  auto trip = top_singular(gather(s.values(), i1, i2));
  return *detail::choose_placeholder(s.values(), i1, o1, t1, trip.u).edge;
}

struct MergeRecord {
  std::size_t size1 = 0, size2 = 0;
  std::optional<EdgeId> edge1, edge2;
  double d1 = 0.0, d2 = 0.0, alpha1 = 0.0, alpha2 = 0.0;
  std::string split1, split2;  // chosen edge's smaller side, for logs
};

namespace detail {

inline std::string describe_split(const TreeGraph& t, std::optional<EdgeId> e) {
  if (!e) return "-";
  auto [x, y] = split_at_edge(t, *e);
  const LeafSet& small = x.size() <= y.size() ? x : y;
  std::string out;
  for (const auto& l : small) out += (out.empty() ? "" : " ") + l;
  return out;
}

/// Merge on global indices: clan1/clan2 index into `s`, labels parallel.
inline UnrootedTree merge_indexed(const Matrix& s, const std::vector<Index>& clan1,
                                  const std::vector<std::string>& labels1, const UnrootedTree& t1,
                                  const std::vector<Index>& clan2,
                                  const std::vector<std::string>& labels2, const UnrootedTree& t2,
                                  MergeRecord* record = nullptr) {
  Matrix cross = gather(s, clan1, clan2);
  SingularTriplet trip;
  if (cross.cwiseAbs().maxCoeff() > 0.0) {
    trip = top_singular(cross);
  } else {
    trip.u = Vector::Constant(clan1.size(), 1.0 / std::sqrt(double(clan1.size())));
    trip.v = Vector::Constant(clan2.size(), 1.0 / std::sqrt(double(clan2.size())));
  }
  auto p1 = choose_placeholder(s, clan1, labels1, t1, trip.u);
  auto p2 = choose_placeholder(s, clan2, labels2, t2, trip.v);
  if (record) {
    record->size1 = clan1.size();
    record->size2 = clan2.size();
    record->edge1 = p1.edge;
    record->edge2 = p2.edge;
    if (p1.edge) {
      record->d1 = p1.scores[*p1.edge].d;
      record->alpha1 = p1.scores[*p1.edge].alpha;
    }
    if (p2.edge) {
      record->d2 = p2.scores[*p2.edge].d;
      record->alpha2 = p2.scores[*p2.edge].alpha;
    }
    record->split1 = describe_split(t1, p1.edge);
    record->split2 = describe_split(t2, p2.edge);
  }
  return join_at_edges(t1, p1.edge, t2, p2.edge);
}

}  // namespace detail

/// Roots t1 (on C1) and t2 (on C2) at their placeholder edges, chosen with
/// the left and right singular vectors of S(C1, C2), and joins the roots.
inline UnrootedTree merge(const SimilarityMatrix& s, const LeafSet& c1, const UnrootedTree& t1,
                          const LeafSet& c2, const UnrootedTree& t2,
                          MergeRecord* record = nullptr) {
  if (t1.leaf_labels() != c1 || t2.leaf_labels() != c2)
    throw Error(ErrorKind::usage, "merge: subtree leaves must equal their clans");
  std::vector<std::string> o1(c1.begin(), c1.end()), o2(c2.begin(), c2.end());
  return detail::merge_indexed(s.values(), s.indices_of(o1), o1, t1, s.indices_of(o2), o2, t2,
                               record);
}

}  // namespace stdr
