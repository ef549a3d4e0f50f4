#pragma once

// Experiment plumbing shared by the CLI and the acceptance suite: model
// specs, method runners and summary statistics.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stdr/genmodel.hpp"
#include "stdr/partition.hpp"
#include "stdr/recovery.hpp"
#include "stdr/similarity.hpp"
#include "stdr/trees.hpp"

namespace stdr {

struct ModelSpec {
  std::string topology = "coalescent";  // coalescent | birth-death | caterpillar | binary-symmetric
  std::size_t m = 64;
  double delta = 0.0;  // > 0: every adjacent similarity set to delta
  double rate = 1.0;   // branch length -> similarity scale for random trees
  double birth = 1.0, death = 0.0;
  std::string substitution = "jc";  // jc | hky
  double kappa = 2.0;
};

inline bool is_known_topology(const std::string& t) {
  return t == "coalescent" || t == "birth-death" || t == "caterpillar" || t == "binary-symmetric";
}

/// Weighted tree for a spec (weights are adjacent similarities).
inline UnrootedTree sample_tree(const ModelSpec& spec, std::uint64_t seed) {
  UnrootedTree t;
  if (spec.topology == "coalescent") {
    t = sample_coalescent(spec.m, seed, spec.rate);
  } else if (spec.topology == "birth-death") {
    t = sample_birth_death(spec.m, spec.birth, spec.death, seed, spec.rate);
  } else if (spec.topology == "caterpillar") {
    t = sample_caterpillar(spec.m, seed);
  } else if (spec.topology == "binary-symmetric") {
    int depth = 0;
    while ((std::size_t{1} << depth) < spec.m) ++depth;
    if ((std::size_t{1} << depth) != spec.m)
      throw Error(ErrorKind::usage, "binary-symmetric needs m a power of two");
    return binary_symmetric_tree(depth, spec.delta > 0 ? spec.delta : 0.65);
  } else {
    throw Error(ErrorKind::usage, "unknown model '" + spec.topology + "'");
  }
  if (spec.delta > 0) t = with_uniform_weights(t, spec.delta);
  return t;
}

inline GenerativeTreeModel build_model(const ModelSpec& spec, std::uint64_t seed) {
  UnrootedTree t = sample_tree(spec, seed);
  if (spec.substitution == "jc") return jc_model(t);
  if (spec.substitution == "hky") return hky_model(t, spec.kappa);
  throw Error(ErrorKind::usage, "unknown substitution model '" + spec.substitution + "'");
}

/// Per-cell seed so grid cells are reproducible independently.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t x = base ^ (0x9E3779B97F4A7C15ULL * (a + 1)) ^ (0xC2B2AE3D27D4EB4FULL * (b + 1));
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  return x;
}

struct MethodResult {
  UnrootedTree tree;
  double seconds = 0.0;
  Diagnostics diag;
};

inline bool is_known_method(const std::string& m) {
  return m == "nj" || m == "stdr+nj" || m == "stdr+external" || m == "stdr+trivial";
}

/// Runs one reconstruction method on precomputed similarities.
inline MethodResult run_method(const std::string& method, const SimilarityMatrix& s,
                               const Alignment* x, ReconstructionConfig cfg) {
  auto t0 = std::chrono::steady_clock::now();
  MethodResult r;
  if (method == "nj") {
    r.tree = neighbor_joining(similarity_to_distance(s));
  } else if (method == "stdr+nj" || method == "stdr+external" || method == "stdr+trivial") {
    cfg.subroutine = method == "stdr+nj"         ? SubroutineKind::nj
                     : method == "stdr+external" ? SubroutineKind::external
                                                 : SubroutineKind::trivial;
    r.tree = detail::run(s, x, cfg, cfg.parallelism, &r.diag);
  } else {
    throw Error(ErrorKind::usage, "unknown method '" + method + "'");
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Whether the top-level partition of S splits the leaves into two clans of
/// the reference tree.
inline bool top_partition_is_clan(const SimilarityMatrix& s, const UnrootedTree& truth) {
  PartitionResult p = spectral_partition(s);
  return is_clan(truth, p.c1) && is_clan(truth, p.c2);
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

/// Sample standard deviation (n - 1 denominator).
inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / (v.size() - 1));
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * (i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = mean(lx), my = mean(ly);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace stdr
