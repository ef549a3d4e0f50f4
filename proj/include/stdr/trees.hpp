#pragma once

// Leaf-labelled unrooted binary trees: construction, Newick I/O, splits,
// clans, Robinson-Foulds distance, and the rooting/joining surgery used when
// two subtrees are merged.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stdr/error.hpp"

namespace stdr {

using NodeId = std::size_t;
using EdgeId = std::size_t;
using LeafSet = std::set<std::string>;

struct Edge {
  NodeId a;
  NodeId b;
  std::optional<double> weight;  // adjacent-node similarity when present
};

struct Adjacent {
  NodeId node;
  EdgeId edge;
};

/// A split induced by one edge. `side` is the half that does not contain the
/// lexicographically smallest leaf label.
struct Bipartition {
  LeafSet side;
  LeafSet complement;
  auto operator<=>(const Bipartition&) const = default;
};

inline bool is_valid_label(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' ||
           c == '-';
  });
}

/// Undirected tree on explicit nodes. Labelled nodes are leaves; unlabelled
/// nodes are internal. Only connectivity and acyclicity are enforced here.
class TreeGraph {
 public:
  TreeGraph() = default;

  TreeGraph(std::vector<std::string> labels, std::vector<Edge> edges)
      : labels_(std::move(labels)), edges_(std::move(edges)) {
    adj_.resize(labels_.size());
    for (EdgeId e = 0; e < edges_.size(); ++e) {
      const auto& ed = edges_[e];
      if (ed.a >= labels_.size() || ed.b >= labels_.size() || ed.a == ed.b)
        throw StructuralError("edge " + std::to_string(e) + " has invalid endpoints");
      adj_[ed.a].push_back({ed.b, e});
      adj_[ed.b].push_back({ed.a, e});
    }
    if (labels_.empty()) throw StructuralError("tree has no nodes");
    if (edges_.size() + 1 != labels_.size())
      throw StructuralError("tree must have exactly node_count - 1 edges");
    // connectivity (with n-1 edges this also rules out cycles)
    std::vector<char> seen(labels_.size(), 0);
    std::vector<NodeId> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      NodeId v = stack.back();
      stack.pop_back();
      for (const auto& nb : adj_[v])
        if (!seen[nb.node]) {
          seen[nb.node] = 1;
          ++count;
          stack.push_back(nb.node);
        }
    }
    if (count != labels_.size()) throw StructuralError("tree is not connected");
    for (NodeId v = 0; v < labels_.size(); ++v)
      if (!labels_[v].empty()) {
        leaves_.push_back(v);
        if (!leaf_index_.emplace(labels_[v], v).second)
          throw StructuralError("duplicate leaf label '" + labels_[v] + "'");
      }
  }

  std::size_t node_count() const { return labels_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t leaf_count() const { return leaves_.size(); }

  const std::string& label(NodeId v) const { return labels_.at(v); }
  bool is_leaf(NodeId v) const { return !labels_.at(v).empty(); }
  std::size_t degree(NodeId v) const { return adj_.at(v).size(); }
  std::span<const Adjacent> neighbors(NodeId v) const { return adj_.at(v); }
  const Edge& edge(EdgeId e) const { return edges_.at(e); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Leaf node ids in ascending order.
  const std::vector<NodeId>& leaves() const { return leaves_; }

  LeafSet leaf_labels() const {
    LeafSet out;
    for (NodeId v : leaves_) out.insert(labels_[v]);
    return out;
  }

  std::optional<NodeId> find_leaf(const std::string& label) const {
    auto it = leaf_index_.find(label);
    if (it == leaf_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<EdgeId> find_edge(NodeId a, NodeId b) const {
    for (const auto& nb : adj_.at(a))
      if (nb.node == b) return nb.edge;
    return std::nullopt;
  }

  NodeId other_end(EdgeId e, NodeId v) const {
    const auto& ed = edges_.at(e);
    return ed.a == v ? ed.b : ed.a;
  }

  bool has_weights() const {
    return !edges_.empty() && std::all_of(edges_.begin(), edges_.end(),
                                          [](const Edge& e) { return e.weight.has_value(); });
  }

 private:
  std::vector<std::string> labels_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Adjacent>> adj_;
  std::vector<NodeId> leaves_;
  std::unordered_map<std::string, NodeId> leaf_index_;
};

/// Leaf-labelled unrooted binary tree: internal nodes have degree 3, leaves
/// degree 1. m = 1 (single node) and m = 2 (single edge) are representable.
/// Immutable after construction; surgery returns new trees.
class UnrootedTree : public TreeGraph {
 public:
  UnrootedTree() : UnrootedTree(std::vector<std::string>{"_"}, {}) {}

  UnrootedTree(std::vector<std::string> labels, std::vector<Edge> edges)
      : TreeGraph(std::move(labels), std::move(edges)) {
    const std::size_t m = leaf_count();
    if (m == 0) throw StructuralError("tree has no labelled leaves");
    for (NodeId v = 0; v < node_count(); ++v) {
      if (is_leaf(v)) {
        if (!is_valid_label(label(v)))
          throw StructuralError("invalid leaf label '" + label(v) + "'");
        if (m >= 2 && degree(v) != 1)
          throw StructuralError("leaf '" + label(v) + "' has degree " +
                                std::to_string(degree(v)));
      } else if (degree(v) != 3) {
        throw StructuralError("internal node " + std::to_string(v) + " has degree " +
                              std::to_string(degree(v)) + " (binary trees need 3)");
      }
    }
    for (const auto& e : this->edges())
      if (e.weight && !(*e.weight > 0.0 && *e.weight < 1.0))
        throw StructuralError("edge weight outside (0,1)");
  }

  explicit UnrootedTree(const TreeGraph& g) : UnrootedTree(g.labels(), g.edges()) {}
};

/// A tree with one distinguished root; after root_at_edge the root is a new
/// unlabelled node of degree 2. For a single-leaf tree the root is that leaf.
struct RootedTree {
  TreeGraph graph;
  NodeId root = 0;
};

namespace detail {

/// Parent pointers and a preorder traversal of a tree hung from `root`.
struct HungTree {
  std::vector<NodeId> parent;       // parent[root] == root
  std::vector<EdgeId> parent_edge;  // undefined for root
  std::vector<NodeId> preorder;
};

inline HungTree hang(const TreeGraph& t, NodeId root) {
  HungTree h;
  const std::size_t n = t.node_count();
  h.parent.assign(n, n);
  h.parent_edge.assign(n, 0);
  h.preorder.reserve(n);
  h.parent[root] = root;
  std::vector<NodeId> stack{root};
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    h.preorder.push_back(v);
    auto nbs = t.neighbors(v);
    for (auto it = nbs.rbegin(); it != nbs.rend(); ++it) {
      if (it->node == h.parent[v]) continue;
      h.parent[it->node] = v;
      h.parent_edge[it->node] = it->edge;
      stack.push_back(it->node);
    }
  }
  return h;
}

inline std::optional<double> merge_weights(std::optional<double> x, std::optional<double> y) {
  if (x && y) return *x * *y;
  return x ? x : y;
}

/// Removes unlabelled nodes of degree <= 2 (joining the two incident edges,
/// weights multiplied) and unlabelled degree-1 stubs, then compacts ids.
inline std::pair<std::vector<std::string>, std::vector<Edge>> suppress_unary(
    std::vector<std::string> labels, std::vector<Edge> edges) {
  const std::size_t n = labels.size();
  std::vector<char> alive_edge(edges.size(), 1);
  std::vector<char> alive_node(n, 1);
  std::vector<std::vector<EdgeId>> inc(n);
  for (EdgeId e = 0; e < edges.size(); ++e) {
    inc[edges[e].a].push_back(e);
    inc[edges[e].b].push_back(e);
  }
  auto live_inc = [&](NodeId v) {
    std::vector<EdgeId> out;
    for (EdgeId e : inc[v])
      if (alive_edge[e]) out.push_back(e);
    return out;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (NodeId v = 0; v < n; ++v) {
      if (!alive_node[v] || !labels[v].empty()) continue;
      auto le = live_inc(v);
      std::size_t alive_nodes = std::count(alive_node.begin(), alive_node.end(), 1);
      if (le.size() == 1 && alive_nodes > 1) {
        alive_edge[le[0]] = 0;
        alive_node[v] = 0;
        changed = true;
      } else if (le.size() == 2) {
        const Edge& e1 = edges[le[0]];
        const Edge& e2 = edges[le[1]];
        NodeId x = e1.a == v ? e1.b : e1.a;
        NodeId y = e2.a == v ? e2.b : e2.a;
        Edge merged{x, y, merge_weights(e1.weight, e2.weight)};
        alive_edge[le[0]] = alive_edge[le[1]] = 0;
        alive_node[v] = 0;
        EdgeId id = edges.size();
        edges.push_back(merged);
        alive_edge.push_back(1);
        inc[x].push_back(id);
        inc[y].push_back(id);
        changed = true;
      }
    }
  }
  std::vector<NodeId> remap(n, n);
  std::vector<std::string> out_labels;
  for (NodeId v = 0; v < n; ++v)
    if (alive_node[v]) {
      remap[v] = out_labels.size();
      out_labels.push_back(labels[v]);
    }
  std::vector<Edge> out_edges;
  for (EdgeId e = 0; e < edges.size(); ++e)
    if (alive_edge[e])
      out_edges.push_back({remap[edges[e].a], remap[edges[e].b], edges[e].weight});
  return {std::move(out_labels), std::move(out_edges)};
}

using Bits = std::vector<std::uint64_t>;

inline void set_bit(Bits& b, std::size_t i) { b[i / 64] |= std::uint64_t{1} << (i % 64); }
inline bool test_bit(const Bits& b, std::size_t i) { return (b[i / 64] >> (i % 64)) & 1U; }

/// Sorted label order shared by two trees being compared.
struct LabelIndex {
  std::vector<std::string> sorted;
  std::unordered_map<std::string, std::size_t> pos;

  explicit LabelIndex(const LeafSet& labels) : sorted(labels.begin(), labels.end()) {
    for (std::size_t i = 0; i < sorted.size(); ++i) pos.emplace(sorted[i], i);
  }
  std::size_t words() const { return (sorted.size() + 63) / 64; }
};

/// Leaf bitset below each node when the tree is hung from `root`.
inline std::vector<Bits> subtree_bits(const TreeGraph& t, const HungTree& h,
                                      const LabelIndex& idx) {
  std::vector<Bits> below(t.node_count(), Bits(idx.words(), 0));
  for (auto it = h.preorder.rbegin(); it != h.preorder.rend(); ++it) {
    NodeId v = *it;
    if (t.is_leaf(v)) set_bit(below[v], idx.pos.at(t.label(v)));
    if (h.parent[v] != v)
      for (std::size_t w = 0; w < below[v].size(); ++w) below[h.parent[v]][w] |= below[v][w];
  }
  return below;
}

inline Bits canonical(Bits b, std::size_t m) {
  if (test_bit(b, 0)) {
    for (auto& w : b) w = ~w;
    if (m % 64 != 0) b.back() &= (std::uint64_t{1} << (m % 64)) - 1;
  }
  return b;
}

/// Canonical bitsets of the nontrivial splits (one per internal edge).
inline std::set<Bits> split_bits(const TreeGraph& t, const LabelIndex& idx) {
  std::set<Bits> out;
  const std::size_t m = idx.sorted.size();
  if (m < 4) return out;
  HungTree h = hang(t, t.leaves().front());
  auto below = subtree_bits(t, h, idx);
  for (NodeId v = 0; v < t.node_count(); ++v) {
    if (h.parent[v] == v) continue;
    if (t.is_leaf(v) || t.is_leaf(h.parent[v])) continue;
    out.insert(canonical(below[v], m));
  }
  return out;
}

// --- Newick parsing -------------------------------------------------------

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : s_(text) {}

  void parse(std::vector<std::string>& labels, std::vector<Edge>& edges) {
    labels_ = &labels;
    edges_ = &edges;
    skip_ws();
    subtree();
    skip_ws();
    expect(';');
    skip_ws();
    if (pos_ != s_.size()) throw ParseError("trailing characters after ';'", pos_);
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::vector<std::string>* labels_ = nullptr;
  std::vector<Edge>* edges_ = nullptr;

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void expect(char c) {
    if (peek() != c) {
      if (pos_ >= s_.size())
        throw ParseError(std::string("unexpected end of input, expected '") + c + "'", pos_);
      throw ParseError(std::string("expected '") + c + "', found '" + peek() + "'", pos_);
    }
    ++pos_;
  }
  static bool label_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  }
  std::string label() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && label_char(s_[pos_])) ++pos_;
    return std::string(s_.substr(start, pos_ - start));
  }
  std::optional<double> length() {
    skip_ws();
    if (peek() != ':') return std::nullopt;
    ++pos_;
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
            s_[pos_] == 'e' || s_[pos_] == 'E' || s_[pos_] == '-' || s_[pos_] == '+'))
      ++pos_;
    if (start == pos_) throw ParseError("expected branch length", start);
    std::string num(s_.substr(start, pos_ - start));
    std::size_t used = 0;
    double value = 0;
    try {
      value = std::stod(num, &used);
    } catch (const std::exception&) {
      throw ParseError("malformed branch length '" + num + "'", start);
    }
    if (used != num.size()) throw ParseError("malformed branch length '" + num + "'", start);
    return value;
  }

  NodeId subtree() {
    NodeId self = labels_->size();
    labels_->emplace_back();
    skip_ws();
    if (peek() == '(') {
      ++pos_;
      std::size_t children = 0;
      while (true) {
        skip_ws();
        NodeId child = subtree();
        auto len = length();
        edges_->push_back({self, child, len});
        ++children;
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        expect(')');
        break;
      }
      (void)children;
      skip_ws();
      label();  // internal-node labels (e.g. support values) are dropped
    } else {
      std::size_t start = pos_;
      std::string name = label();
      if (name.empty()) {
        if (pos_ >= s_.size()) throw ParseError("unexpected end of input", pos_);
        throw ParseError(std::string("unexpected character '") + peek() + "'", start);
      }
      (*labels_)[self] = std::move(name);
    }
    return self;
  }
};

}  // namespace detail

enum class NewickLengths { as_weights, ignore };

/// Parses a Newick string into an unrooted binary tree. A degree-2 root is
/// suppressed (its two edges are joined, similarity weights multiplied).
/// Branch lengths become edge weights unless `lengths == ignore`.
inline UnrootedTree parse_newick(std::string_view text,
                                 NewickLengths lengths = NewickLengths::as_weights) {
  std::vector<std::string> labels;
  std::vector<Edge> edges;
  detail::NewickParser(text).parse(labels, edges);
  if (lengths == NewickLengths::ignore)
    for (auto& e : edges) e.weight.reset();

  // Any unlabelled node with degree != 3 other than a degree-2 root is a
  // structural error, so only the root may be suppressed.
  std::vector<std::size_t> deg(labels.size(), 0);
  for (const auto& e : edges) {
    ++deg[e.a];
    ++deg[e.b];
  }
  for (NodeId v = 1; v < labels.size(); ++v)
    if (labels[v].empty() && deg[v] != 3)
      throw StructuralError("non-binary internal node with " + std::to_string(deg[v] - 1) +
                            " children");
  if (labels[0].empty()) {
    if (deg[0] == 2) {
      std::tie(labels, edges) = detail::suppress_unary(std::move(labels), std::move(edges));
    } else if (deg[0] != 3) {
      throw StructuralError("root has " + std::to_string(deg[0]) +
                            " children; expected 2 (rooted) or 3 (unrooted)");
    }
  }
  return UnrootedTree(std::move(labels), std::move(edges));
}

namespace detail {

inline void format_weight(std::ostringstream& os, const std::optional<double>& w) {
  if (w) os << ':' << std::setprecision(17) << *w;
}

inline void write_subtree(const TreeGraph& t, NodeId v, NodeId parent, std::ostringstream& os) {
  if (t.is_leaf(v)) {
    os << t.label(v);
    return;
  }
  os << '(';
  bool first = true;
  for (const auto& nb : t.neighbors(v)) {
    if (nb.node == parent) continue;
    if (!first) os << ',';
    first = false;
    write_subtree(t, nb.node, v, os);
    format_weight(os, t.edge(nb.edge).weight);
  }
  os << ')';
}

}  // namespace detail

/// Serialises a tree as Newick. Trees with m >= 3 are written as a
/// trifurcation at the internal node next to the smallest-labelled leaf.
inline std::string write_newick(const UnrootedTree& t) {
  std::ostringstream os;
  const std::size_t m = t.leaf_count();
  if (m == 1) return t.label(t.leaves().front()) + ";";
  if (m == 2) {
    NodeId a = t.leaves()[0], b = t.leaves()[1];
    if (t.label(b) < t.label(a)) std::swap(a, b);
    os << '(' << t.label(a);
    detail::format_weight(os, t.edge(0).weight);
    os << ',' << t.label(b) << ");";
    return os.str();
  }
  NodeId smallest = t.leaves().front();
  for (NodeId v : t.leaves())
    if (t.label(v) < t.label(smallest)) smallest = v;
  NodeId start = t.neighbors(smallest)[0].node;
  detail::write_subtree(t, start, start, os);
  os << ';';
  return os.str();
}

/// Leaf sets on the two sides of edge `e` (first = side of edge().a).
inline std::pair<LeafSet, LeafSet> split_at_edge(const TreeGraph& t, EdgeId e) {
  if (e >= t.edge_count()) throw StructuralError("edge " + std::to_string(e) + " not in tree");
  const Edge& ed = t.edge(e);
  LeafSet side_a;
  std::vector<NodeId> stack{ed.a};
  std::vector<char> seen(t.node_count(), 0);
  seen[ed.a] = seen[ed.b] = 1;
  while (!stack.empty()) {
    NodeId v = stack.back();
    stack.pop_back();
    if (t.is_leaf(v)) side_a.insert(t.label(v));
    for (const auto& nb : t.neighbors(v))
      if (!seen[nb.node]) {
        seen[nb.node] = 1;
        stack.push_back(nb.node);
      }
  }
  LeafSet side_b;
  for (NodeId v : t.leaves())
    if (!side_a.count(t.label(v))) side_b.insert(t.label(v));
  return {std::move(side_a), std::move(side_b)};
}

inline Bipartition make_bipartition(LeafSet x, LeafSet y) {
  const std::string& smallest =
      x.empty() ? *y.begin() : (y.empty() ? *x.begin() : std::min(*x.begin(), *y.begin()));
  if (x.count(smallest)) std::swap(x, y);
  return {std::move(x), std::move(y)};
}

/// One bipartition per internal edge (m - 3 of them for m >= 4), sorted.
inline std::vector<Bipartition> bipartitions(const UnrootedTree& t) {
  std::vector<Bipartition> out;
  if (t.leaf_count() < 4) return out;
  for (EdgeId e = 0; e < t.edge_count(); ++e) {
    const Edge& ed = t.edge(e);
    if (t.is_leaf(ed.a) || t.is_leaf(ed.b)) continue;
    auto [x, y] = split_at_edge(t, e);
    out.push_back(make_bipartition(std::move(x), std::move(y)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// True iff `s` is separated from the remaining leaves by a single edge.
inline bool is_clan(const UnrootedTree& t, const LeafSet& s) {
  if (s.empty()) throw Error(ErrorKind::usage, "clan query with empty leaf set");
  for (const auto& lbl : s)
    if (!t.find_leaf(lbl)) throw Error(ErrorKind::usage, "unknown leaf label '" + lbl + "'");
  const std::size_t m = t.leaf_count();
  if (s.size() == 1 || s.size() + 1 == m || s.size() == m) return true;
  detail::LabelIndex idx(t.leaf_labels());
  detail::Bits b(idx.words(), 0);
  for (const auto& lbl : s) detail::set_bit(b, idx.pos.at(lbl));
  auto splits = detail::split_bits(t, idx);
  return splits.count(detail::canonical(b, m)) > 0;
}

namespace detail {
inline void check_rf_inputs(const UnrootedTree& a, const UnrootedTree& b) {
  if (a.leaf_labels() != b.leaf_labels())
    throw Error(ErrorKind::usage, "RF distance needs identical leaf sets");
  if (a.leaf_count() < 4) throw Error(ErrorKind::usage, "RF distance needs m >= 4");
}
}  // namespace detail

/// Size of the symmetric difference of the nontrivial split sets.
inline std::size_t rf_distance(const UnrootedTree& a, const UnrootedTree& b) {
  detail::check_rf_inputs(a, b);
  detail::LabelIndex idx(a.leaf_labels());
  auto sa = detail::split_bits(a, idx);
  auto sb = detail::split_bits(b, idx);
  std::size_t common = 0;
  for (const auto& s : sa) common += sb.count(s);
  return sa.size() + sb.size() - 2 * common;
}

/// RF distance divided by 2m - 6.
inline double normalized_rf(const UnrootedTree& a, const UnrootedTree& b) {
  std::size_t rf = rf_distance(a, b);
  return static_cast<double>(rf) / static_cast<double>(2 * a.leaf_count() - 6);
}

/// Subdivides edge `e` with a new degree-2 root node. A weighted edge is split
/// into two halves of weight sqrt(w) so path similarities are unchanged.
inline RootedTree root_at_edge(const TreeGraph& t, EdgeId e) {
  if (e >= t.edge_count()) throw StructuralError("edge " + std::to_string(e) + " not in tree");
  std::vector<std::string> labels = t.labels();
  std::vector<Edge> edges = t.edges();
  NodeId root = labels.size();
  labels.emplace_back();
  Edge old = edges[e];
  std::optional<double> half;
  if (old.weight) half = std::sqrt(*old.weight);
  edges[e] = {old.a, root, half};
  edges.push_back({root, old.b, half});
  return {TreeGraph(std::move(labels), std::move(edges)), root};
}

/// Roots t1 at e1 and t2 at e2 and connects the two roots. A missing edge is
/// only allowed for a single-leaf tree, whose leaf is then attached directly.
inline UnrootedTree join_at_edges(const UnrootedTree& t1, std::optional<EdgeId> e1,
                                  const UnrootedTree& t2, std::optional<EdgeId> e2) {
  for (NodeId v : t1.leaves())
    if (t2.find_leaf(t1.label(v)))
      throw StructuralError("join_at_edges: label '" + t1.label(v) + "' in both trees");
  auto rooted = [](const UnrootedTree& t, std::optional<EdgeId> e) -> RootedTree {
    if (e) return root_at_edge(t, *e);
    if (t.node_count() != 1)
      throw StructuralError("join_at_edges: placeholder edge required for trees with m >= 2");
    return {TreeGraph(t.labels(), t.edges()), 0};
  };
  RootedTree r1 = rooted(t1, e1);
  RootedTree r2 = rooted(t2, e2);
  std::vector<std::string> labels = r1.graph.labels();
  std::vector<Edge> edges = r1.graph.edges();
  const std::size_t off = labels.size();
  labels.insert(labels.end(), r2.graph.labels().begin(), r2.graph.labels().end());
  for (const auto& ed : r2.graph.edges()) edges.push_back({ed.a + off, ed.b + off, ed.weight});
  edges.push_back({r1.root, r2.root + off, std::nullopt});
  return UnrootedTree(std::move(labels), std::move(edges));
}

/// Induced subtree on `keep` (degree-2 nodes suppressed, weights multiplied).
inline UnrootedTree restrict_to(const UnrootedTree& t, const LeafSet& keep) {
  if (keep.empty()) throw Error(ErrorKind::usage, "restrict_to: empty leaf set");
  std::optional<NodeId> start;
  for (const auto& lbl : keep) {
    auto v = t.find_leaf(lbl);
    if (!v) throw Error(ErrorKind::usage, "unknown leaf label '" + lbl + "'");
    if (!start) start = v;
  }
  auto h = detail::hang(t, *start);
  std::vector<char> needed(t.node_count(), 0);
  for (auto it = h.preorder.rbegin(); it != h.preorder.rend(); ++it) {
    NodeId v = *it;
    if (t.is_leaf(v) && keep.count(t.label(v))) needed[v] = 1;
    if (needed[v] && h.parent[v] != v) needed[h.parent[v]] = 1;
  }
  std::vector<NodeId> remap(t.node_count(), t.node_count());
  std::vector<std::string> labels;
  for (NodeId v = 0; v < t.node_count(); ++v)
    if (needed[v]) {
      remap[v] = labels.size();
      labels.push_back(t.label(v));
    }
  std::vector<Edge> edges;
  for (const auto& e : t.edges())
    if (needed[e.a] && needed[e.b]) edges.push_back({remap[e.a], remap[e.b], e.weight});
  std::tie(labels, edges) = detail::suppress_unary(std::move(labels), std::move(edges));
  return UnrootedTree(std::move(labels), std::move(edges));
}

/// Unique unrooted topology on at most three leaves.
inline UnrootedTree small_tree(const std::vector<std::string>& labels) {
  switch (labels.size()) {
    case 1:
      return UnrootedTree({labels[0]}, {});
    case 2:
      return UnrootedTree({labels[0], labels[1]}, {{0, 1, std::nullopt}});
    case 3:
      return UnrootedTree({"", labels[0], labels[1], labels[2]},
                          {{0, 1, std::nullopt}, {0, 2, std::nullopt}, {0, 3, std::nullopt}});
    default:
      throw Error(ErrorKind::usage, "small_tree needs 1 to 3 labels");
  }
}

}  // namespace stdr
