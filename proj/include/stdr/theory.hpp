#pragma once

// Numerical counterparts of the population and finite-sample analysis:
// Kron reduction, the twin-tree construction, tree statistics (eta, r, h),
// closed-form spectra of symmetric trees and the sample-size bounds.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "stdr/error.hpp"
#include "stdr/genmodel.hpp"
#include "stdr/matrix.hpp"
#include "stdr/trees.hpp"

namespace stdr {

/// Tree on explicit nodes whose weights are positive but may exceed 1.
class WeightedTreeGraph : public TreeGraph {
 public:
  WeightedTreeGraph() = default;
  WeightedTreeGraph(std::vector<std::string> labels, std::vector<Edge> edges)
      : TreeGraph(std::move(labels), std::move(edges)) {
    for (const auto& e : this->edges())
      if (!e.weight || !(*e.weight > 0.0) || !std::isfinite(*e.weight))
        throw StructuralError("weighted tree edges need positive finite weights");
  }
  double weight(EdgeId e) const { return *edge(e).weight; }
};

/// Laplacian over all nodes of a weighted graph given as a tree.
inline Matrix graph_laplacian(const TreeGraph& g) {
  const Index n = g.node_count();
  Matrix l = Matrix::Zero(n, n);
  for (const auto& e : g.edges()) {
    const double w = *e.weight;
    l(e.a, e.b) -= w;
    l(e.b, e.a) -= w;
    l(e.a, e.a) += w;
    l(e.b, e.b) += w;
  }
  return l;
}

/// M / M[elim, elim] on the kept indices (result ordered as `keep`). Nodes
/// are eliminated one at a time, fewest remaining neighbours first.
inline Matrix schur_complement(const Matrix& m, const std::vector<Index>& keep) {
  const Index n = m.rows();
  std::vector<char> kept(n, 0);
  for (Index k : keep) {
    if (k < 0 || k >= n) throw Error(ErrorKind::usage, "schur_complement: index out of range");
    kept[k] = 1;
  }
  Matrix w = m;
  std::vector<char> alive(n, 1);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  while (true) {
    Index pick = -1;
    Index best_deg = std::numeric_limits<Index>::max();
    for (Index i = 0; i < n; ++i) {
      if (kept[i] || !alive[i]) continue;
      Index deg = 0;
      for (Index j = 0; j < n; ++j)
        if (j != i && alive[j] && w(i, j) != 0.0) ++deg;
      if (deg < best_deg) {
        best_deg = deg;
        pick = i;
      }
    }
    if (pick < 0) break;
    const double piv = w(pick, pick);
    if (std::abs(piv) <= 1e-14 * scale)
      throw NumericalError("schur_complement: singular eliminated block");
    alive[pick] = 0;
    for (Index a = 0; a < n; ++a) {
      if (!alive[a] || w(a, pick) == 0.0) continue;
      const double f = w(a, pick) / piv;
      for (Index b = 0; b < n; ++b)
        if (alive[b]) w(a, b) -= f * w(pick, b);
    }
  }
  Matrix out(keep.size(), keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t j = 0; j < keep.size(); ++j) out(i, j) = w(keep[i], keep[j]);
  return out;
}

// --- twin tree ----------------------------------------------------------------

struct TwinTree {
  WeightedTreeGraph tree;                  // same nodes/edges as the input
  std::vector<NodeId> order;               // internal nodes in insertion order
  std::vector<Matrix> g_trace;             // G_0, G_1, ... over all nodes
  std::vector<std::vector<double>> t_trace;  // edge weights T_0, T_1, ...
};

/// Builds the reweighted copy of a binary tree whose Kron reduction onto the
/// leaves is the Laplacian of the leaf similarity graph. Internal nodes are
/// inserted one at a time (smallest node id adjacent to >= 2 active nodes).
inline TwinTree twin_tree(const TreeGraph& t, const std::vector<double>& edge_sim,
                          bool keep_trace = false) {
  const std::size_t n = t.node_count();
  if (edge_sim.size() != t.edge_count()) throw Error(ErrorKind::usage, "one similarity per edge");
  for (NodeId v = 0; v < n; ++v)
    if (!t.is_leaf(v) && t.degree(v) != 3)
      throw StructuralError("twin_tree needs a binary tree");
  std::vector<double> w = edge_sim;
  // G_0: leaf similarity graph embedded in the all-node index space
  Matrix g = Matrix::Zero(n, n);
  {
    Matrix s = path_similarity(t, w);
    for (NodeId a : t.leaves())
      for (NodeId b : t.leaves())
        if (a != b) g(a, b) = s(a, b);
  }
  std::vector<char> active(n, 0), added(n, 0);
  for (NodeId v : t.leaves()) active[v] = 1;
  TwinTree out;
  if (keep_trace) {
    out.g_trace.push_back(g);
    out.t_trace.push_back(w);
  }
  std::vector<double> alpha(n);
  std::vector<NodeId> parent(n);
  std::vector<EdgeId> parent_edge(n);
  std::vector<NodeId> visit;
  while (true) {
    NodeId h = n;
    for (NodeId v = 0; v < n && h == n; ++v) {
      if (t.is_leaf(v) || added[v]) continue;
      int cnt = 0;
      for (const auto& nb : t.neighbors(v)) cnt += active[nb.node];
      if (cnt >= 2) h = v;
    }
    if (h == n) break;
    // path products from h, stopping at active nodes
    visit.clear();
    std::vector<NodeId> stack{h};
    std::vector<NodeId> reached;
    alpha[h] = 1.0;
    parent[h] = h;
    while (!stack.empty()) {
      NodeId x = stack.back();
      stack.pop_back();
      visit.push_back(x);
      if (x != h && active[x]) {
        reached.push_back(x);
        continue;
      }
      for (const auto& nb : t.neighbors(x)) {
        if (nb.node == parent[x]) continue;
        parent[nb.node] = x;
        parent_edge[nb.node] = nb.edge;
        alpha[nb.node] = alpha[x] * w[nb.edge];
        stack.push_back(nb.node);
      }
    }
    std::size_t n_active = std::count(active.begin(), active.end(), 1);
    if (reached.size() != n_active)
      throw NumericalError("twin_tree: active set is not a frontier around the new node");
    double d = 0.0;
    for (NodeId x : reached) d += alpha[x];
    // G update
    for (NodeId x : reached)
      for (NodeId y : reached)
        if (x != y) g(x, y) -= alpha[x] * alpha[y];
    for (NodeId x : reached) g(h, x) = g(x, h) = d * alpha[x];
    // T update on every traversed edge (x closer to h than y)
    std::vector<double> w_new = w;
    auto shrink = [&](NodeId v) {
      double s = 1.0 - alpha[v] * alpha[v];
      if (!(s > 0.0)) throw NumericalError("twin_tree: path similarity reached 1");
      return std::sqrt(s);
    };
    for (NodeId y : visit) {
      if (y == h) continue;
      NodeId x = parent[y];
      const double a = (x == h) ? d : shrink(x);
      const double b = active[y] ? 1.0 : shrink(y);
      w_new[parent_edge[y]] = w[parent_edge[y]] * a / b;
    }
    w = std::move(w_new);
    // active set: drop the two smallest-id active neighbours, add h
    int dropped = 0;
    std::vector<NodeId> nbrs;
    for (const auto& nb : t.neighbors(h)) nbrs.push_back(nb.node);
    std::sort(nbrs.begin(), nbrs.end());
    for (NodeId v : nbrs)
      if (active[v] && dropped < 2) {
        active[v] = 0;
        ++dropped;
      }
    active[h] = 1;
    added[h] = 1;
    out.order.push_back(h);
    if (keep_trace) {
      out.g_trace.push_back(g);
      out.t_trace.push_back(w);
    }
  }
  std::vector<Edge> edges = t.edges();
  for (EdgeId e = 0; e < edges.size(); ++e) edges[e].weight = w[e];
  out.tree = WeightedTreeGraph(t.labels(), std::move(edges));
  return out;
}

inline TwinTree twin_tree(const GenerativeTreeModel& model, bool keep_trace = false) {
  return twin_tree(model.tree, model.edge_similarity, keep_trace);
}

inline TwinTree twin_tree(const UnrootedTree& tree, bool keep_trace = false) {
  return twin_tree(tree, edge_weights(tree), keep_trace);
}

/// Laplacian of the leaf similarity graph and the Kron reduction of the
/// twin tree onto the leaves, both in leaf order.
inline std::pair<Matrix, Matrix> twin_tree_identity(const TreeGraph& t,
                                                    const std::vector<double>& edge_sim,
                                                    const TwinTree& twin) {
  std::vector<Index> leaves;
  for (NodeId v : t.leaves()) leaves.push_back(static_cast<Index>(v));
  Matrix s = gather(path_similarity(t, edge_sim), leaves, leaves);
  s.diagonal().setZero();
  Matrix lg = -s;
  lg.diagonal() = s.rowwise().sum();
  Matrix reduced = schur_complement(graph_laplacian(twin.tree), leaves);
  return {lg, reduced};
}

// --- tree statistics ------------------------------------------------------------

struct TreeStats {
  double eta = 1.0;
  double r = 0.0;
  double h = 0.0;
  bool clock = false;  // eta taken from the constant-block hierarchy
};

namespace detail {

/// Constant-block hierarchy: at each level the minimum similarity c must be
/// the whole cross block of exactly two components of {S > c}. Returns
/// false when the matrix has no such structure.
inline bool clock_eta(const Matrix& s, std::vector<Index> set, double& eta) {
  if (set.size() < 2) return true;
  double c = std::numeric_limits<double>::infinity();
  for (Index i : set)
    for (Index j : set)
      if (i != j) c = std::min(c, s(i, j));
  const double tol = 1e-9 * std::max(c, 1e-300);
  std::vector<int> comp(set.size(), -1);
  int ncomp = 0;
  for (std::size_t a = 0; a < set.size(); ++a) {
    if (comp[a] >= 0) continue;
    std::vector<std::size_t> stack{a};
    comp[a] = ncomp;
    while (!stack.empty()) {
      std::size_t x = stack.back();
      stack.pop_back();
      for (std::size_t y = 0; y < set.size(); ++y)
        if (comp[y] < 0 && s(set[x], set[y]) > c + tol) {
          comp[y] = ncomp;
          stack.push_back(y);
        }
    }
    ++ncomp;
  }
  if (ncomp != 2) return false;
  std::vector<Index> a, b;
  for (std::size_t k = 0; k < set.size(); ++k) (comp[k] == 0 ? a : b).push_back(set[k]);
  for (Index i : a)
    for (Index j : b)
      if (std::abs(s(i, j) - c) > tol) return false;
  eta = std::max({eta, double(a.size()) / b.size(), double(b.size()) / a.size()});
  return clock_eta(s, std::move(a), eta) && clock_eta(s, std::move(b), eta);
}

}  // namespace detail

/// eta of the clade hierarchy obtained by rooting t at edge e.
inline double eta_for_rooting(const TreeGraph& t, EdgeId e) {
  RootedTree r = root_at_edge(t, e);
  auto h = detail::hang(r.graph, r.root);
  std::vector<std::size_t> leaves(r.graph.node_count(), 0);
  double eta = 1.0;
  for (auto it = h.preorder.rbegin(); it != h.preorder.rend(); ++it) {
    NodeId v = *it;
    if (r.graph.is_leaf(v)) {
      leaves[v] = 1;
    } else {
      std::vector<std::size_t> kids;
      for (const auto& nb : r.graph.neighbors(v))
        if (nb.node != h.parent[v] || v == r.root) kids.push_back(leaves[nb.node]);
      for (std::size_t k : kids) leaves[v] += k;
      if (kids.size() == 2)
        eta = std::max({eta, double(kids[0]) / kids[1], double(kids[1]) / kids[0]});
    }
  }
  return eta;
}

/// Edge minimising the larger side (smallest id on ties).
inline EdgeId centroid_edge(const TreeGraph& t) {
  EdgeId best = 0;
  std::size_t best_max = std::numeric_limits<std::size_t>::max();
  for (EdgeId e = 0; e < t.edge_count(); ++e) {
    auto [a, b] = split_at_edge(t, e);
    std::size_t mx = std::max(a.size(), b.size());
    if (mx < best_max) {
      best_max = mx;
      best = e;
    }
  }
  return best;
}

/// eta (balancedness), r (diameter, -log units) and h (depth: largest
/// closest-leaf distance from either endpoint of an edge, within its side).
inline TreeStats tree_stats(const TreeGraph& t, const std::vector<double>& edge_sim) {
  if (t.leaf_count() < 2) throw Error(ErrorKind::usage, "tree_stats needs m >= 2");
  Matrix s = path_similarity(t, edge_sim);
  Matrix dist = -s.array().log();
  TreeStats st;
  for (NodeId a : t.leaves())
    for (NodeId b : t.leaves()) st.r = std::max(st.r, dist(a, b));
  for (EdgeId e = 0; e < t.edge_count(); ++e) {
    const Edge& ed = t.edge(e);
    auto sides = split_at_edge(t, e);
    auto closest = [&](NodeId end, const LeafSet& side) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& l : side) best = std::min(best, dist(end, *t.find_leaf(l)));
      return best;
    };
    st.h = std::max({st.h, closest(ed.a, sides.first), closest(ed.b, sides.second)});
  }
  std::vector<Index> leaves;
  for (NodeId v : t.leaves()) leaves.push_back(static_cast<Index>(v));
  double eta = 1.0;
  if (detail::clock_eta(s, leaves, eta)) {
    st.eta = eta;
    st.clock = true;
  } else {
    st.eta = eta_for_rooting(t, centroid_edge(t));
    st.clock = false;
  }
  return st;
}

inline TreeStats tree_stats(const GenerativeTreeModel& model) {
  return tree_stats(model.tree, model.edge_similarity);
}

inline TreeStats tree_stats(const UnrootedTree& t) { return tree_stats(t, edge_weights(t)); }

// --- bounds -------------------------------------------------------------------

/// Samples sufficient for the partition step to return two clans w.p. 1 - eps.
inline double partition_sample_bound(double m, double ell, double eps, const TreeStats& st) {
  require(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
  require(st.r > st.h, "partition bound needs r > h");
  const double gap = std::exp(st.r - st.h) - 1.0;
  const double tail = std::max(1.0, (1.0 + st.eta) * (1.0 + st.eta) / (gap * gap));
  const double root_m = std::sqrt(m) + 1.0;
  return 4.0 * std::log(2.0 * m * m / eps) * st.eta * ell * ell * m * root_m * root_m *
         std::exp(2.0 * st.r) * tail;
}

/// Samples sufficient for the merge step to pick the correct placeholder edge.
inline double merge_sample_bound(double m, double ell, double eps, double big_d, double delta,
                                 double xi) {
  require(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
  require(big_d > 0.0, "D must be positive");
  require(0.0 < delta && delta <= xi && xi < 1.0, "need 0 < delta <= xi < 1");
  const double poly = 2.0 / big_d + 2.5 / (big_d * big_d) + (1.0 + 10.0 * std::sqrt(2.0)) /
                                                               (big_d * big_d * big_d);
  const double xi2 = xi * xi;
  return 8.0 * ell * ell * m * m * m * poly * poly * (xi2 * xi2) /
         (std::pow(delta, 6) * (1.0 - xi2) * (1.0 - xi2)) * std::log(2.0 * m * m / eps);
}

/// Lower bound on d(e) for any incorrect placeholder edge (log base 2).
inline double incorrect_edge_lower_bound(double m, double delta, double xi) {
  require(0.0 < delta && delta <= xi && xi < 1.0, "need 0 < delta <= xi < 1");
  const double d2 = delta * delta, xi2 = xi * xi;
  if (d2 > 0.5) return delta * d2 * (1.0 - xi2) / (std::sqrt(2.0 * m) * xi2);
  return std::pow(std::sqrt(2.0) * delta, std::log2(m)) * d2 * (1.0 - xi2) /
         (2.0 * std::sqrt(m) * xi2);
}

struct SymmetricSpectrum {
  double lambda2 = 0.0;
  double lambda3 = 0.0;        // exact, symmetric tree
  double lambda3_lower = 0.0;  // clock-model lower bound (eta = 1)
  double v2_abs = 0.0;         // |v2(i)| for every i
};

/// Laplacian eigenvalue of the sign vector splitting a clade of size a
/// (power of two) from its sibling, symmetric tree with m leaves.
inline double symmetric_eigenvalue(double m, double a, double delta) {
  const double q = 2.0 * delta * delta;
  if (std::abs(1.0 - q) < 1e-8) {
    // q -> 1 limit: (q^{log a}(2 - q) - q^{log m}) / (1 - q) -> log m - log a + 1
    return delta * delta * (std::log2(m) - std::log2(a) + 1.0);
  }
  return delta * delta *
         ((std::pow(q, std::log2(a)) * (2.0 - q) - std::pow(q, std::log2(m))) / (1.0 - q));
}

/// Spectrum facts for the binary symmetric clock tree with m = 2^depth.
inline SymmetricSpectrum symmetric_spectrum(std::size_t m, double delta) {
  require(m >= 2 && (m & (m - 1)) == 0, "symmetric_spectrum needs m a power of two");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  const double md = static_cast<double>(m);
  const double depth = std::log2(md);
  const double r = 2.0 * depth * -std::log(delta);
  // within-half diameter; see tree_stats for the endpoint depth
  const double h_half = 2.0 * (depth - 1.0) * -std::log(delta);
  SymmetricSpectrum sp;
  sp.lambda2 = std::pow(md, 2.0 * std::log2(delta) + 1.0);
  sp.lambda3 = sp.lambda2 * (0.5 + 0.5 / (delta * delta));
  sp.lambda3_lower = md / 2.0 * (std::exp(-r) + std::exp(-h_half));
  sp.v2_abs = 1.0 / std::sqrt(md);
  return sp;
}

}  // namespace stdr
