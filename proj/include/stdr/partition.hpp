#pragma once

// Splitting a set of terminal nodes into two candidate clans: Fiedler sign
// and largest-gap candidates selected by the smaller second singular value
// of the cross block, plus exhaustive min-cut and distance-based baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "stdr/error.hpp"
#include "stdr/linalg.hpp"
#include "stdr/matrix.hpp"
#include "stdr/similarity.hpp"
#include "stdr/trees.hpp"

namespace stdr {

enum class PartitionStrategy { sign, gap, mincut, distance, component, min_row_sum };

inline const char* to_string(PartitionStrategy s) {
  switch (s) {
    case PartitionStrategy::sign: return "sign";
    case PartitionStrategy::gap: return "gap";
    case PartitionStrategy::mincut: return "mincut";
    case PartitionStrategy::distance: return "distance";
    case PartitionStrategy::component: return "component";
    case PartitionStrategy::min_row_sum: return "min_row_sum";
  }
  return "?";
}

struct PartitionResult {
  std::vector<Index> side1, side2;  // positions in the input order, ascending
  LeafSet c1, c2;                   // labels (empty when no labels were given)
  PartitionStrategy strategy = PartitionStrategy::sign;
  double sigma1 = std::numeric_limits<double>::quiet_NaN();
  double sigma2 = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline PartitionResult make_partition(const std::vector<char>& in_first,
                                      const std::vector<std::string>* labels,
                                      PartitionStrategy strategy) {
  PartitionResult r;
  r.strategy = strategy;
  for (std::size_t i = 0; i < in_first.size(); ++i) {
    (in_first[i] ? r.side1 : r.side2).push_back(static_cast<Index>(i));
    if (labels) (in_first[i] ? r.c1 : r.c2).insert((*labels)[i]);
  }
  if (r.side1.empty() || r.side2.empty())
    throw DegenerateError(std::string(to_string(strategy)) + " partition has an empty side");
  return r;
}

inline const std::vector<std::string>* opt_labels(const std::vector<std::string>& labels,
                                                  std::size_t m) {
  if (labels.empty()) return nullptr;
  if (labels.size() != m) throw Error(ErrorKind::usage, "label count does not match vector size");
  return &labels;
}

}  // namespace detail

/// C1 = {i : v(i) >= 0}, C2 = the rest.
inline PartitionResult sign_partition(const Vector& v, const std::vector<std::string>& labels = {}) {
  std::vector<char> first(v.size());
  for (Index i = 0; i < v.size(); ++i) first[i] = v[i] >= 0.0;
  return detail::make_partition(first, detail::opt_labels(labels, v.size()),
                                PartitionStrategy::sign);
}

/// Split at the largest gap between consecutive sorted entries; ties go to
/// the earliest gap. C1 is the upper part (entries above the gap).
inline PartitionResult gap_partition(const Vector& v, const std::vector<std::string>& labels = {}) {
  const Index m = v.size();
  if (m < 2) throw Error(ErrorKind::usage, "gap_partition needs m >= 2");
  std::vector<Index> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v[a] < v[b]; });
  Index best = 0;
  double best_gap = -1.0;
  for (Index k = 0; k + 1 < m; ++k) {
    double g = v[order[k + 1]] - v[order[k]];
    if (g > best_gap) {
      best_gap = g;
      best = k;
    }
  }
  if (!(best_gap > 0.0)) throw DegenerateError("gap partition of a constant vector");
  std::vector<char> first(m, 0);
  for (Index k = best + 1; k < m; ++k) first[order[k]] = 1;
  return detail::make_partition(first, detail::opt_labels(labels, m), PartitionStrategy::gap);
}

/// Fills sigma1/sigma2 of the cross block S(C1, C2).
inline void score_partition(const Matrix& s, PartitionResult& p) {
  Matrix cross = gather(s, p.side1, p.side2);
  if (cross.cwiseAbs().maxCoeff() == 0.0) {
    p.sigma1 = p.sigma2 = 0.0;
    return;
  }
  auto t = top_singular(cross);
  p.sigma1 = t.sigma1;
  p.sigma2 = t.sigma2;
}

/// Candidate with the smallest sigma2 of its cross block. Values within
/// 1e-9 * sigma1 of the incumbent count as ties and keep the earlier one.
inline PartitionResult choose_partition(const Matrix& s, std::vector<PartitionResult> candidates) {
  if (candidates.empty()) throw Error(ErrorKind::usage, "choose_partition: no candidates");
  for (auto& c : candidates) score_partition(s, c);
  std::size_t best = 0;
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double tol = 1e-9 * std::max(candidates[best].sigma1, candidates[k].sigma1);
    if (candidates[k].sigma2 < candidates[best].sigma2 - tol) best = k;
  }
  return candidates[best];
}

inline PartitionResult choose_partition(const SimilarityMatrix& s,
                                        std::vector<PartitionResult> candidates) {
  return choose_partition(s.values(), std::move(candidates));
}

namespace detail {

/// Splits off the connected component (edges: S > 0) containing index 0.
inline PartitionResult component_partition(const Matrix& s,
                                           const std::vector<std::string>* labels) {
  const Index m = s.rows();
  std::vector<char> seen(m, 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    Index i = stack.back();
    stack.pop_back();
    for (Index j = 0; j < m; ++j)
      if (!seen[j] && s(i, j) > 0.0) {
        seen[j] = 1;
        stack.push_back(j);
      }
  }
  return make_partition(seen, labels, PartitionStrategy::component);
}

}  // namespace detail

/// The full partition step on a similarity block: Fiedler vector, sign and
/// gap candidates, selection by sigma2. Fallbacks: one-signed vector -> gap
/// only; constant vector -> split off the leaf with minimal row sum;
/// disconnected graph -> split off the first connected component.
inline PartitionResult spectral_partition(const Matrix& s,
                                          const std::vector<std::string>& labels = {},
                                          bool with_gap = true) {
  const Index m = s.rows();
  if (m < 2) throw Error(ErrorKind::usage, "spectral_partition needs m >= 2");
  const auto* lbl = detail::opt_labels(labels, m);
  if (m == 2) {
    PartitionResult r = detail::make_partition({1, 0}, lbl, PartitionStrategy::sign);
    score_partition(s, r);
    return r;
  }
  FiedlerResult f;
  try {
    f = fiedler_from_similarity(s);
  } catch (const DisconnectedGraphError&) {
    PartitionResult r = detail::component_partition(s, lbl);
    score_partition(s, r);
    return r;
  }
  std::vector<PartitionResult> candidates;
  try {
    candidates.push_back(sign_partition(f.vector, labels));
  } catch (const DegenerateError&) {
  }
  if (with_gap || candidates.empty()) try {
      candidates.push_back(gap_partition(f.vector, labels));
    } catch (const DegenerateError&) {
    }
  if (candidates.empty()) {
    Vector rows = s.rowwise().sum();
    Index k = 0;
    rows.minCoeff(&k);
    std::vector<char> first(m, 1);
    first[k] = 0;
    PartitionResult r = detail::make_partition(first, lbl, PartitionStrategy::min_row_sum);
    score_partition(s, r);
    return r;
  }
  return choose_partition(s, std::move(candidates));
}

inline PartitionResult spectral_partition(const SimilarityMatrix& s) {
  return spectral_partition(s.values(), s.labels());
}

/// Exhaustive minimiser of the cut sum_{i in A, j in B} S(i,j) over all
/// nontrivial bipartitions (m <= 20). Ties keep the first in enumeration
/// order (bitmask over indices 1..m-1, index 0 always in A).
inline PartitionResult mincut_partition_bruteforce(const Matrix& s,
                                                   const std::vector<std::string>& labels = {}) {
  const Index m = s.rows();
  if (m < 2) throw Error(ErrorKind::usage, "mincut needs m >= 2");
  if (m > 20) throw Error(ErrorKind::usage, "mincut brute force is limited to m <= 20");
  // bit k of the mask puts index k+1 into B; index 0 always stays in A
  const std::uint32_t full = (std::uint32_t{1} << (m - 1)) - 1;
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0;
  std::vector<char> in_b(m, 0);
  for (std::uint32_t mask = 1; mask <= full; ++mask) {
    for (Index k = 1; k < m; ++k) in_b[k] = (mask >> (k - 1)) & 1U;
    double cut = 0.0;
    for (Index i = 0; i < m; ++i)
      if (!in_b[i])
        for (Index j = 1; j < m; ++j)
          if (in_b[j]) cut += s(i, j);
    if (cut < best) {
      best = cut;
      best_mask = mask;
    }
  }
  std::vector<char> first(m, 1);
  for (Index k = 1; k < m; ++k) first[k] = !((best_mask >> (k - 1)) & 1U);
  auto r = detail::make_partition(first, detail::opt_labels(labels, m), PartitionStrategy::mincut);
  score_partition(s, r);
  return r;
}

inline PartitionResult mincut_partition_bruteforce(const SimilarityMatrix& s) {
  return mincut_partition_bruteforce(s.values(), s.labels());
}

/// Sign pattern of the leading (largest |eigenvalue|) eigenvector of the
/// doubly centred -D.
inline PartitionResult distance_spectral_partition(const Matrix& d,
                                                   const std::vector<std::string>& labels = {}) {
  const Index m = d.rows();
  if (m < 2) throw Error(ErrorKind::usage, "distance partition needs m >= 2");
  Matrix centred = -d;
  centred.rowwise() -= centred.colwise().mean();
  centred.colwise() -= centred.rowwise().mean();
  centred = 0.5 * (centred + centred.transpose());
  auto es = dense_eigen(centred);
  const Vector& ev = es.eigenvalues();
  Index k = std::abs(ev[0]) > std::abs(ev[m - 1]) ? 0 : m - 1;
  if (std::abs(ev[k]) <= 1e-14 * std::max(1.0, d.cwiseAbs().maxCoeff()))
    throw DegenerateError("distance matrix has no leading direction");
  Vector v = es.eigenvectors().col(k);
  canonical_sign(v);
  auto r = sign_partition(v, labels);
  r.strategy = PartitionStrategy::distance;
  return r;
}

}  // namespace stdr
