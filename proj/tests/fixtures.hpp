#pragma once

// Random model families shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <string>

#include "stdr/genmodel.hpp"

namespace fixtures {

enum class Family { coalescent, birth_death, caterpillar };

inline const char* name(Family f) {
  switch (f) {
    case Family::coalescent: return "coalescent";
    case Family::birth_death: return "birth-death";
    case Family::caterpillar: return "caterpillar";
  }
  return "?";
}

/// Weighted random tree. Rates keep adjacent similarities away from the
/// clamp floor at the sizes used in tests.
inline stdr::UnrootedTree random_tree(Family f, std::size_t m, std::uint64_t seed) {
  switch (f) {
    case Family::coalescent: return stdr::sample_coalescent(m, seed, 0.5);
    case Family::birth_death: return stdr::sample_birth_death(m, 1.0, 0.3, seed, 0.5);
    case Family::caterpillar: return stdr::sample_caterpillar(m, seed);
  }
  return {};
}

inline stdr::GenerativeTreeModel random_model(Family f, std::size_t m, std::uint64_t seed) {
  return stdr::jc_model(random_tree(f, m, seed));
}

}  // namespace fixtures
