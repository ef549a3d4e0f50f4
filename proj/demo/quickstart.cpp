// Simulate a tree and an alignment, reconstruct with STDR+NJ and plain NJ,
// and compare both against the true tree.

#include <cstdio>

#include "stdr/stdr.hpp"

int main() {
  stdr::ModelSpec spec;
  spec.topology = "coalescent";
  spec.m = 512;
  spec.delta = 0.9;
  auto model = stdr::build_model(spec, 42);
  auto alignment = stdr::evolve_sequences(model, 1000, 43);

  // similarities are computed once and shared by every subproblem
  auto s = stdr::estimate_similarity(alignment);

  stdr::ReconstructionConfig cfg;
  cfg.tau = 64;
  auto stdr_nj = stdr::run_method("stdr+nj", s, &alignment, cfg);
  auto nj = stdr::run_method("nj", s, &alignment, cfg);

  std::printf("m = %zu leaves, n = 1000 sites\n", s.size());
  std::printf("stdr+nj  nRF %.4f  %.2f s  (%zu subproblems)\n",
              stdr::normalized_rf(stdr_nj.tree, model.tree), stdr_nj.seconds,
              stdr_nj.diag.subroutine_calls);
  std::printf("nj       nRF %.4f  %.2f s\n", stdr::normalized_rf(nj.tree, model.tree), nj.seconds);
  return 0;
}
