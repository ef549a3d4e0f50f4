#pragma once

// Generative latent tree models: JC and HKY transition matrices, random
// topologies (coalescent, birth-death, caterpillar), sequence evolution and
// population similarities.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "stdr/alignment.hpp"
#include "stdr/error.hpp"
#include "stdr/matrix.hpp"
#include "stdr/trees.hpp"

namespace stdr {

using Rng = std::mt19937_64;

inline constexpr double kMinSimilarity = 1e-6;
inline constexpr double kMaxSimilarity = 1.0 - 1e-6;

// --- transition matrices --------------------------------------------------
// Column-stochastic: entry (b, a) = Pr[child = b | parent = a].

inline Matrix jc_matrix(double theta, int ell) {
  require(ell >= 2, "jc_matrix: alphabet size must be >= 2");
  const double cap = static_cast<double>(ell - 1) / ell;
  if (!(theta >= 0.0 && theta < cap))
    throw Error(ErrorKind::usage, "jc_matrix: theta must lie in [0, (ell-1)/ell)");
  Matrix p = Matrix::Constant(ell, ell, theta / (ell - 1));
  p.diagonal().setConstant(1.0 - theta);
  return p;
}

/// Adjacent-node similarity of a JC edge with mutation probability theta.
inline double jc_similarity(double theta, int ell) {
  return std::pow(1.0 - ell * theta / (ell - 1), ell - 1);
}

/// Inverse of jc_similarity.
inline double delta_to_theta(double delta, int ell) {
  require(ell >= 2, "delta_to_theta: alphabet size must be >= 2");
  if (!(delta > 0.0 && delta <= 1.0))
    throw Error(ErrorKind::usage, "delta_to_theta: delta must lie in (0, 1]");
  return (ell - 1.0) / ell * (1.0 - std::pow(delta, 1.0 / (ell - 1)));
}

/// HKY85 rate matrix (row convention, states A,C,G,T), normalised to one
/// expected substitution per unit time at stationarity.
inline Matrix hky_rate_matrix(double kappa, const Vector& freqs) {
  require(kappa > 0.0, "hky: kappa must be positive");
  if (freqs.size() != 4 || (freqs.array() <= 0.0).any() || std::abs(freqs.sum() - 1.0) > 1e-9)
    throw Error(ErrorKind::usage, "hky: base frequencies must be 4 positive values summing to 1");
  Matrix q = Matrix::Zero(4, 4);
  auto transition = [](int i, int j) { return (i ^ j) == 2; };  // A<->G, C<->T
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) q(i, j) = (transition(i, j) ? kappa : 1.0) * freqs[j];
  for (int i = 0; i < 4; ++i) q(i, i) = -q.row(i).sum();
  double mu = 0.0;
  for (int i = 0; i < 4; ++i) mu -= freqs[i] * q(i, i);
  return q / mu;
}

inline Matrix hky_matrix(double branch_scale, double kappa, const Vector& freqs) {
  if (!(branch_scale >= 0.0)) throw Error(ErrorKind::usage, "hky: branch scale must be >= 0");
  Matrix q = hky_rate_matrix(kappa, freqs);
  // Reversible: Pi^{1/2} Q Pi^{-1/2} is symmetric.
  Vector sq = freqs.array().sqrt();
  Matrix sym = sq.asDiagonal() * q * sq.cwiseInverse().asDiagonal();
  sym = 0.5 * (sym + sym.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector ex = (es.eigenvalues() * branch_scale).array().exp();
  Matrix p_row = sq.cwiseInverse().asDiagonal() * es.eigenvectors() * ex.asDiagonal() *
                 es.eigenvectors().transpose() * sq.asDiagonal();
  return p_row.transpose();
}

// --- models ---------------------------------------------------------------

struct GenerativeTreeModel {
  UnrootedTree tree;
  NodeId root = 0;  // generation root
  int ell = 4;
  Vector root_distribution;
  std::vector<Matrix> transitions;  // per edge id, oriented away from root
  std::vector<double> edge_similarity;  // per edge id
  std::string name;
  double kappa = 1.0;
};

namespace detail {

inline NodeId default_root(const TreeGraph& t) {
  for (NodeId v = 0; v < t.node_count(); ++v)
    if (!t.is_leaf(v)) return v;
  return 0;
}

inline bool edge_points_down(const HungTree& h, const Edge& e, NodeId& parent, NodeId& child) {
  if (h.parent[e.b] == e.a) {
    parent = e.a;
    child = e.b;
    return true;
  }
  parent = e.b;
  child = e.a;
  return h.parent[e.a] == e.b;
}

}  // namespace detail

/// Validates the matrices and derives per-edge similarities
/// S = sqrt(det P(child|parent) det P(parent|child)) from node marginals.
inline GenerativeTreeModel make_model(UnrootedTree tree, NodeId root, int ell,
                                      Vector root_distribution, std::vector<Matrix> transitions,
                                      std::string name, double kappa = 1.0) {
  if (root >= tree.node_count()) throw Error(ErrorKind::usage, "model root not in tree");
  if (root_distribution.size() != ell || (root_distribution.array() < 0).any() ||
      std::abs(root_distribution.sum() - 1.0) > 1e-9)
    throw Error(ErrorKind::usage, "root distribution must be a probability vector of size ell");
  if (transitions.size() != tree.edge_count())
    throw Error(ErrorKind::usage, "one transition matrix per edge required");
  auto h = detail::hang(tree, root);
  std::vector<Vector> marginal(tree.node_count());
  marginal[root] = root_distribution;
  for (NodeId v : h.preorder)
    if (v != root) {
      const Matrix& p = transitions[h.parent_edge[v]];
      if (p.rows() != ell || p.cols() != ell)
        throw Error(ErrorKind::usage, "transition matrix has wrong size");
      if ((p.array() < -1e-15).any() ||
          ((p.colwise().sum().array() - 1.0).abs() > 1e-9).any())
        throw Error(ErrorKind::usage, "transition matrix is not column-stochastic");
      marginal[v] = p * marginal[h.parent[v]];
    }
  std::vector<double> sim(tree.edge_count());
  for (EdgeId e = 0; e < tree.edge_count(); ++e) {
    NodeId parent, child;
    detail::edge_points_down(h, tree.edge(e), parent, child);
    double det = transitions[e].determinant();
    if (!(det > 0.0)) throw NumericalError("transition matrix determinant must be positive");
    // det P(parent|child) = det P * prod pi_parent / prod pi_child
    double log_ratio = 0.0;
    for (int k = 0; k < ell; ++k) {
      if (marginal[parent][k] <= 0 || marginal[child][k] <= 0)
        throw NumericalError("node marginal has a zero state probability");
      log_ratio += std::log(marginal[parent][k]) - std::log(marginal[child][k]);
    }
    sim[e] = det * std::exp(0.5 * log_ratio);
  }
  GenerativeTreeModel m{std::move(tree),        root, ell, std::move(root_distribution),
                        std::move(transitions), std::move(sim), std::move(name), kappa};
  return m;
}

/// JC model whose adjacent similarities equal the tree's edge weights.
inline GenerativeTreeModel jc_model(const UnrootedTree& tree, int ell = 4) {
  std::vector<Matrix> ps;
  for (const auto& e : tree.edges()) {
    if (!e.weight) throw Error(ErrorKind::usage, "jc_model needs edge weights");
    ps.push_back(jc_matrix(delta_to_theta(*e.weight, ell), ell));
  }
  return make_model(tree, detail::default_root(tree), ell, Vector::Constant(ell, 1.0 / ell),
                    std::move(ps), "jc");
}

/// JC model from explicit per-edge mutation probabilities.
inline GenerativeTreeModel jc_model_from_thetas(const UnrootedTree& tree,
                                                const std::vector<double>& thetas, int ell = 4) {
  if (thetas.size() != tree.edge_count())
    throw Error(ErrorKind::usage, "one theta per edge required");
  std::vector<Matrix> ps;
  for (double t : thetas) ps.push_back(jc_matrix(t, ell));
  return make_model(tree, detail::default_root(tree), ell, Vector::Constant(ell, 1.0 / ell),
                    std::move(ps), "jc");
}

/// HKY model on a weighted tree; edge weight w gives branch scale -ln(w)/4,
/// which reproduces similarity w exactly when kappa = 1 and freqs are uniform.
inline GenerativeTreeModel hky_model(const UnrootedTree& tree, double kappa = 2.0,
                                     Vector freqs = Vector::Constant(4, 0.25)) {
  std::vector<Matrix> ps;
  for (const auto& e : tree.edges()) {
    if (!e.weight) throw Error(ErrorKind::usage, "hky_model needs edge weights");
    ps.push_back(hky_matrix(-std::log(*e.weight) / 4.0, kappa, freqs));
  }
  return make_model(tree, detail::default_root(tree), 4, freqs, std::move(ps), "hky", kappa);
}

// --- deterministic topologies ----------------------------------------------

inline std::string leaf_name(std::size_t i) { return "x" + std::to_string(i + 1); }

/// Complete rooted binary tree of the given depth with every edge delta,
/// unrooted by suppressing the root (central edge delta^2).
inline UnrootedTree binary_symmetric_tree(int depth, double delta) {
  require(depth >= 1 && depth <= 20, "binary symmetric depth must be in [1,20]");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  // heap layout: node k has children 2k+1, 2k+2; leaves are the last 2^depth
  const std::size_t total = (std::size_t{1} << (depth + 1)) - 1;
  const std::size_t first_leaf = (std::size_t{1} << depth) - 1;
  std::vector<std::string> labels(total);
  for (std::size_t k = first_leaf; k < total; ++k) labels[k] = leaf_name(k - first_leaf);
  std::vector<Edge> edges;
  for (std::size_t k = 1; k < total; ++k) edges.push_back({(k - 1) / 2, k, delta});
  std::tie(labels, edges) = detail::suppress_unary(std::move(labels), std::move(edges));
  return UnrootedTree(std::move(labels), std::move(edges));
}

/// Caterpillar: internal nodes form a path; every edge carries delta.
inline UnrootedTree caterpillar_tree(std::size_t m, double delta) {
  std::vector<double> w(2 * m - 3, delta);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < m; ++i) names.push_back(leaf_name(i));
  std::vector<std::string> labels;
  std::vector<Edge> edges;
  require(m >= 3, "caterpillar needs m >= 3");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  const std::size_t internal = m - 2;
  labels.assign(internal, "");
  for (const auto& n : names) labels.push_back(n);
  auto leaf = [&](std::size_t i) { return internal + i; };
  std::size_t k = 0;
  edges.push_back({0, leaf(0), w[k++]});
  edges.push_back({0, leaf(1), w[k++]});
  for (std::size_t j = 1; j < internal; ++j) {
    edges.push_back({j - 1, j, w[k++]});
    edges.push_back({j, leaf(j + 1), w[k++]});
  }
  edges.push_back({internal - 1, leaf(m - 1), w[k++]});
  return UnrootedTree(std::move(labels), std::move(edges));
}

inline GenerativeTreeModel make_binary_symmetric(int depth, double delta, int ell = 4) {
  require(depth >= 2, "make_binary_symmetric: depth must be >= 2");
  return jc_model(binary_symmetric_tree(depth, delta), ell);
}

inline GenerativeTreeModel make_caterpillar(std::size_t m, double delta, int ell = 4) {
  require(m >= 4, "make_caterpillar: m must be >= 4");
  return jc_model(caterpillar_tree(m, delta), ell);
}

/// Same topology, every edge weight replaced by delta.
inline UnrootedTree with_uniform_weights(const UnrootedTree& t, double delta) {
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  std::vector<Edge> edges = t.edges();
  for (auto& e : edges) e.weight = delta;
  return UnrootedTree(t.labels(), std::move(edges));
}

// --- random topologies -----------------------------------------------------

/// Rooted tree whose edge weights are branch lengths.
struct TimedTree {
  std::vector<std::string> labels;
  std::vector<Edge> edges;
  NodeId root = 0;
};

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double exponential(Rng& rng, double rate) {
  return -std::log1p(-uniform01(rng)) / rate;
}

/// Kingman coalescent: with k lineages the waiting time is Exp(k(k-1)/2).
inline TimedTree coalescent_timed(std::size_t m, std::uint64_t seed) {
  require(m >= 2, "coalescent needs m >= 2");
  Rng rng(seed);
  TimedTree t;
  std::vector<double> height;
  std::vector<NodeId> lineages;
  for (std::size_t i = 0; i < m; ++i) {
    t.labels.push_back(leaf_name(i));
    height.push_back(0.0);
    lineages.push_back(i);
  }
  double now = 0.0;
  while (lineages.size() > 1) {
    const double k = static_cast<double>(lineages.size());
    now += exponential(rng, k * (k - 1) / 2);
    std::size_t i = rng() % lineages.size();
    std::size_t j = rng() % (lineages.size() - 1);
    if (j >= i) ++j;
    NodeId parent = t.labels.size();
    t.labels.emplace_back();
    height.push_back(now);
    for (std::size_t c : {i, j})
      t.edges.push_back({parent, lineages[c], now - height[lineages[c]]});
    if (i < j) std::swap(i, j);
    lineages.erase(lineages.begin() + i);
    lineages.erase(lineages.begin() + j);
    lineages.push_back(parent);
  }
  t.root = lineages.front();
  return t;
}

/// Forward birth-death process, restarted on extinction, stopped when m
/// lineages coexist (plus one more waiting time so tips have positive length);
/// extinct lineages are pruned.
inline TimedTree birth_death_timed(std::size_t m, double birth, double death,
                                   std::uint64_t seed) {
  require(m >= 2, "birth-death needs m >= 2");
  require(birth > death && death >= 0.0, "birth-death needs birth > death >= 0");
  Rng rng(seed);
  const std::size_t max_attempts = 100000;
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    struct Lineage {
      NodeId from;
      double start;
    };
    std::vector<std::string> labels{""};
    std::vector<Edge> edges;
    std::vector<Lineage> alive{{0, 0.0}, {0, 0.0}};
    double now = 0.0;
    while (!alive.empty() && alive.size() < m) {
      now += exponential(rng, alive.size() * (birth + death));
      std::size_t pick = rng() % alive.size();
      Lineage lin = alive[pick];
      alive.erase(alive.begin() + pick);
      NodeId node = labels.size();
      labels.emplace_back();
      edges.push_back({lin.from, node, now - lin.start});
      if (uniform01(rng) < birth / (birth + death)) {
        alive.push_back({node, now});
        alive.push_back({node, now});
      }
      // else: `node` is an extinct tip (unlabelled), pruned below
    }
    if (alive.empty()) continue;
    now += exponential(rng, m * (birth + death));
    std::size_t next = 0;
    for (const auto& lin : alive) {
      NodeId node = labels.size();
      labels.push_back(leaf_name(next++));
      edges.push_back({lin.from, node, now - lin.start});
    }
    // prune extinct tips and the resulting unary nodes; lengths are added
    // by working in similarity space (exp(-len)) where suppression multiplies
    for (auto& e : edges) e.weight = std::exp(-*e.weight);
    std::tie(labels, edges) = detail::suppress_unary(std::move(labels), std::move(edges));
    for (auto& e : edges) e.weight = -std::log(*e.weight);
    TimedTree t{std::move(labels), std::move(edges), 0};
    // root: the unlabelled node with degree 3 is fine to use as any anchor
    t.root = detail::default_root(TreeGraph(t.labels, t.edges));
    return t;
  }
  throw NumericalError("birth-death process went extinct too many times");
}

/// Root-to-leaf path lengths of a timed tree (ultrametric check).
inline std::vector<double> root_to_leaf_lengths(const TimedTree& t) {
  TreeGraph g(t.labels, t.edges);
  auto h = detail::hang(g, t.root);
  std::vector<double> depth(g.node_count(), 0.0);
  std::vector<double> out;
  for (NodeId v : h.preorder) {
    if (v != t.root) depth[v] = depth[h.parent[v]] + *g.edge(h.parent_edge[v]).weight;
    if (g.is_leaf(v)) out.push_back(depth[v]);
  }
  return out;
}

/// Branch length -> similarity exp(-len * rate) clamped to the open interval,
/// then unrooted by suppressing a degree-2 root.
inline UnrootedTree timed_to_unrooted(const TimedTree& t, double rate = 1.0) {
  require(rate > 0.0, "rate must be positive");
  std::vector<Edge> edges = t.edges;
  for (auto& e : edges)
    e.weight = std::clamp(std::exp(-*e.weight * rate), kMinSimilarity, kMaxSimilarity);
  auto [labels, merged] = detail::suppress_unary(t.labels, std::move(edges));
  for (auto& e : merged) e.weight = std::clamp(*e.weight, kMinSimilarity, kMaxSimilarity);
  return UnrootedTree(std::move(labels), std::move(merged));
}

inline UnrootedTree sample_coalescent(std::size_t m, std::uint64_t seed, double rate = 1.0) {
  require(m >= 3, "sample_coalescent: m must be >= 3");
  return timed_to_unrooted(coalescent_timed(m, seed), rate);
}

inline UnrootedTree sample_birth_death(std::size_t m, double birth, double death,
                                       std::uint64_t seed, double rate = 1.0) {
  require(m >= 3, "sample_birth_death: m must be >= 3");
  return timed_to_unrooted(birth_death_timed(m, birth, death, seed), rate);
}

/// Caterpillar with shuffled leaf order and similarities uniform in (lo, hi).
inline UnrootedTree sample_caterpillar(std::size_t m, std::uint64_t seed, double lo = 0.75,
                                       double hi = 0.95) {
  require(m >= 3, "sample_caterpillar: m must be >= 3");
  require(0.0 < lo && lo < hi && hi < 1.0, "caterpillar similarity range must lie in (0,1)");
  Rng rng(seed);
  UnrootedTree base = caterpillar_tree(m, 0.5);
  std::vector<std::string> labels = base.labels();
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  std::size_t next = 0;
  for (auto& l : labels)
    if (!l.empty()) l = leaf_name(perm[next++]);
  std::vector<Edge> edges = base.edges();
  for (auto& e : edges) e.weight = lo + (hi - lo) * uniform01(rng);
  return UnrootedTree(std::move(labels), std::move(edges));
}

// --- sequences and similarities --------------------------------------------

/// Samples n i.i.d. columns; rows follow the tree's leaf order.
inline Alignment evolve_sequences(const GenerativeTreeModel& model, std::size_t n,
                                  std::uint64_t seed) {
  require(n >= 1, "evolve_sequences: n must be >= 1");
  const auto& t = model.tree;
  const int ell = model.ell;
  auto h = detail::hang(t, model.root);
  // cumulative distributions per edge and parent state
  std::vector<std::vector<double>> cum(t.edge_count(), std::vector<double>(ell * ell));
  for (EdgeId e = 0; e < t.edge_count(); ++e)
    for (int a = 0; a < ell; ++a) {
      double acc = 0.0;
      for (int b = 0; b < ell; ++b) {
        acc += model.transitions[e](b, a);
        cum[e][a * ell + b] = acc;
      }
    }
  std::vector<double> root_cum(ell);
  std::partial_sum(model.root_distribution.data(), model.root_distribution.data() + ell,
                   root_cum.begin());
  auto draw = [ell](const double* c, double u) {
    int k = 0;
    while (k + 1 < ell && u >= c[k]) ++k;
    return k;
  };
  std::vector<std::string> labels;
  std::vector<std::size_t> row_of(t.node_count(), 0);
  for (NodeId v : t.leaves()) {
    row_of[v] = labels.size();
    labels.push_back(t.label(v));
  }
  Alignment out(labels, ell, n);
  Rng rng(seed);
  std::vector<int> state(t.node_count());
  for (std::size_t col = 0; col < n; ++col) {
    for (NodeId v : h.preorder) {
      if (v == model.root)
        state[v] = draw(root_cum.data(), uniform01(rng));
      else
        state[v] = draw(cum[h.parent_edge[v]].data() + state[h.parent[v]] * ell, uniform01(rng));
      if (t.is_leaf(v)) out(row_of[v], col) = static_cast<std::uint8_t>(state[v]);
    }
  }
  return out;
}

/// Products of edge similarities along every path, over all nodes.
inline Matrix path_similarity(const TreeGraph& t, const std::vector<double>& edge_sim) {
  const std::size_t n = t.node_count();
  Matrix s = Matrix::Identity(n, n);
  for (NodeId src = 0; src < n; ++src) {
    auto h = detail::hang(t, src);
    for (NodeId v : h.preorder)
      if (v != src) s(src, v) = s(src, h.parent[v]) * edge_sim[h.parent_edge[v]];
  }
  return 0.5 * (s + s.transpose());
}

inline std::vector<double> edge_weights(const TreeGraph& t) {
  std::vector<double> w;
  for (const auto& e : t.edges()) {
    if (!e.weight) throw Error(ErrorKind::usage, "tree has unweighted edges");
    w.push_back(*e.weight);
  }
  return w;
}

namespace detail {
inline SimilarityMatrix leaf_block(const TreeGraph& t, const Matrix& all) {
  std::vector<std::string> labels;
  std::vector<Index> idx;
  for (NodeId v : t.leaves()) {
    labels.push_back(t.label(v));
    idx.push_back(static_cast<Index>(v));
  }
  Matrix s = gather(all, idx, idx);
  s.diagonal().setOnes();
  return SimilarityMatrix(std::move(labels), std::move(s));
}
}  // namespace detail

/// Population similarity matrix over the leaves (tree leaf order).
inline SimilarityMatrix exact_similarity(const GenerativeTreeModel& model) {
  return detail::leaf_block(model.tree, path_similarity(model.tree, model.edge_similarity));
}

/// Same, reading edge weights of a weighted tree as adjacent similarities.
inline SimilarityMatrix exact_similarity(const UnrootedTree& tree) {
  return detail::leaf_block(tree, path_similarity(tree, edge_weights(tree)));
}

}  // namespace stdr
