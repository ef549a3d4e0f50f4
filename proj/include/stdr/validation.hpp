#pragma once

// Self-checks of the population results, run by `stdr validate-theory`.
// Each row reports a measured residual against a fixed tolerance.

#include <cmath>
#include <string>
#include <vector>

#include "stdr/experiment.hpp"
#include "stdr/genmodel.hpp"
#include "stdr/merging.hpp"
#include "stdr/partition.hpp"
#include "stdr/recovery.hpp"
#include "stdr/similarity.hpp"
#include "stdr/theory.hpp"

namespace stdr {

struct CheckRow {
  std::string check;
  std::string detail;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ValidationOptions {
  double twin_perturbation = 0.0;  // added to one twin-tree weight (negative control)
  std::size_t models = 40;         // random models per exact-S suite
  std::uint64_t seed = 1;
};

namespace detail {

inline GenerativeTreeModel validation_model(std::size_t k, std::size_t m, std::uint64_t seed) {
  static const char* kinds[] = {"coalescent", "birth-death", "caterpillar"};
  ModelSpec spec;
  spec.topology = kinds[k % 3];
  spec.m = m;
  spec.rate = 0.5;
  spec.birth = 1.0;
  spec.death = 0.3;
  return build_model(spec, seed);
}

inline CheckRow max_row(std::string check, std::string detail, double measured, double tol) {
  return {std::move(check), std::move(detail), measured, tol, measured <= tol};
}

}  // namespace detail

/// Twin-tree rows: the quartet worked example and the Kron identity on
/// random models.
inline std::vector<CheckRow> validate_twin_tree(const ValidationOptions& opt) {
  std::vector<CheckRow> rows;
  auto q = parse_newick("(x1:0.5,x2:0.5,(x3:0.5,x4:0.5):0.5);");
  auto twin = twin_tree(q, true);
  std::vector<double> g1;
  const Matrix& g = twin.g_trace.at(1);
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = i + 1; j < g.cols(); ++j)
      if (std::abs(g(i, j)) > 1e-12) g1.push_back(g(i, j));
  std::sort(g1.begin(), g1.end());
  const std::vector<double> want_g1{3.0 / 16, 3.0 / 8, 3.0 / 8, 0.75, 0.75};
  double err = g1.size() == want_g1.size() ? 0.0 : 1.0;
  for (std::size_t i = 0; i < std::min(g1.size(), want_g1.size()); ++i)
    err = std::max(err, std::abs(g1[i] - want_g1[i]));
  rows.push_back(detail::max_row("twin_tree_quartet_G1", "weights 3/4 3/4 3/8 3/8 3/16", err, 1e-12));

  err = 0.0;
  for (EdgeId e = 0; e < twin.tree.edge_count(); ++e) {
    const auto& ed = twin.tree.edge(e);
    bool pendant = twin.tree.is_leaf(ed.a) || twin.tree.is_leaf(ed.b);
    err = std::max(err, std::abs(twin.tree.weight(e) - (pendant ? 0.75 : 1.5)));
  }
  rows.push_back(detail::max_row("twin_tree_quartet_T2", "weights 3/4 x4 and 3/2", err, 1e-12));

  double worst = 0.0;
  for (std::size_t k = 0; k < opt.models; ++k) {
    auto model = detail::validation_model(k, 4 + k % 29, derive_seed(opt.seed, 11, k));
    auto tw = twin_tree(model);
    if (opt.twin_perturbation != 0.0) {
      auto edges = tw.tree.edges();
      edges[0].weight = *edges[0].weight + opt.twin_perturbation;
      tw.tree = WeightedTreeGraph(tw.tree.labels(), std::move(edges));
    }
    auto [lg, reduced] = twin_tree_identity(model.tree, model.edge_similarity, tw);
    worst = std::max(worst, (lg - reduced).cwiseAbs().maxCoeff());
  }
  rows.push_back(detail::max_row("schur_identity", std::to_string(opt.models) + " random models",
                                 worst, 1e-9));
  return rows;
}

/// Closed-form spectrum of the symmetric clock tree against a dense solve.
inline std::vector<CheckRow> validate_symmetric_spectrum() {
  double e2 = 0.0, e3 = 0.0, ev = 0.0;
  for (int depth : {2, 3, 4, 5})
    for (double delta : {0.5, 0.65, 0.8}) {
      auto s = exact_similarity(make_binary_symmetric(depth, delta));
      Eigen::SelfAdjointEigenSolver<Matrix> es(laplacian(s));
      auto sp = symmetric_spectrum(s.size(), delta);
      e2 = std::max(e2, std::abs(es.eigenvalues()[1] - sp.lambda2) / sp.lambda2);
      e3 = std::max(e3, std::abs(es.eigenvalues()[2] - sp.lambda3) / sp.lambda3);
      ev = std::max(ev, (es.eigenvectors().col(1).cwiseAbs().array() - sp.v2_abs).abs().maxCoeff());
    }
  return {detail::max_row("symmetric_lambda2", "relative error m=4..32", e2, 1e-9),
          detail::max_row("symmetric_lambda3", "relative error m=4..32", e3, 1e-9),
          detail::max_row("symmetric_v2", "| |v2(i)| - 1/sqrt(m) |", ev, 1e-9)};
}

/// Placeholder scores on exact S: zero at the correct edge, above the
/// lower bound elsewhere.
inline std::vector<CheckRow> validate_merge_gap() {
  double correct = 0.0, violation = 0.0;
  for (int depth : {3, 4, 5})
    for (double delta : {0.75, 0.8, 0.9}) {
      auto model = make_binary_symmetric(depth, delta);
      auto s = exact_similarity(model);
      const std::size_t m = s.size();
      LeafSet c1, c2;
      for (std::size_t i = 0; i < m; ++i) (i < m / 2 ? c1 : c2).insert(leaf_name(i));
      const double bound = incorrect_edge_lower_bound(m, delta, delta);
      for (const auto& [a, b] : {std::pair{c1, c2}, std::pair{c2, c1}}) {
        auto t = restrict_to(model.tree, a);
        Vector u = top_singular(gather(s.values(), s.indices_of(a), s.indices_of(b))).u;
        for (EdgeId e = 0; e < t.edge_count(); ++e) {
          auto [x, y] = split_at_edge(t, e);
          double d = edge_score(s, a, b, t, e, u).d;
          if (is_clan(model.tree, x) && is_clan(model.tree, y))
            correct = std::max(correct, d);
          else
            violation = std::max(violation, bound - d);
        }
      }
    }
  return {detail::max_row("merge_correct_edge", "max d(e*)", correct, 1e-9),
          detail::max_row("merge_incorrect_bound", "max(bound - d(e)) clipped at 0",
                          std::max(violation, 0.0), 0.0)};
}

/// Exact-S suites: sign partition, brute-force min cut and full recovery.
inline std::vector<CheckRow> validate_exact_recovery(const ValidationOptions& opt) {
  std::size_t part_fail = 0, cut_fail = 0, rec_fail = 0;
  for (std::size_t k = 0; k < opt.models; ++k) {
    auto model = detail::validation_model(k, 8 + k % 25, derive_seed(opt.seed, 12, k));
    auto s = exact_similarity(model);
    auto p = sign_partition(fiedler_from_similarity(s.values()).vector, s.labels());
    part_fail += !(is_clan(model.tree, p.c1) && is_clan(model.tree, p.c2));

    auto small = detail::validation_model(k, 4 + k % 7, derive_seed(opt.seed, 13, k));
    auto ss = exact_similarity(small);
    auto mc = mincut_partition_bruteforce(ss);
    cut_fail += !(is_clan(small.tree, mc.c1) && is_clan(small.tree, mc.c2));

    ReconstructionConfig cfg;
    cfg.tau = 4 + 4 * (k % 3);
    rec_fail += rf_distance(stdr(s, cfg), model.tree) != 0;
  }
  const std::string n = std::to_string(opt.models) + " random models";
  return {detail::max_row("partition_clans", "failures over " + n, part_fail, 0),
          detail::max_row("mincut_clans", "failures over " + n, cut_fail, 0),
          detail::max_row("stdr_exact_recovery", "RF > 0 count over " + n, rec_fail, 0)};
}

inline std::vector<CheckRow> validate_theory(const ValidationOptions& opt = {}) {
  std::vector<CheckRow> rows;
  for (auto* part : {&validate_symmetric_spectrum, &validate_merge_gap}) {
    auto r = (*part)();
    rows.insert(rows.end(), r.begin(), r.end());
  }
  auto tw = validate_twin_tree(opt);
  rows.insert(rows.begin(), tw.begin(), tw.end());
  auto ex = validate_exact_recovery(opt);
  rows.insert(rows.end(), ex.begin(), ex.end());
  return rows;
}

}  // namespace stdr
