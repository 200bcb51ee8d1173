//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <vector>

#include "molrat/mol_graph.hpp"

namespace molrat {

struct Ring {
  std::vector<int> atoms;  // cyclic order, consecutive atoms bonded
  std::vector<int> bonds;  // bonds[i] joins atoms[i] and atoms[i+1]
  bool aromatic = false;
};

inline constexpr int kMaxRingSize = 8;

/// Smallest set of smallest rings, restricted to rings of at most
/// `max_size` atoms. Candidates are shortest-path cycles through each root;
/// a greedy GF(2) elimination keeps the shortest independent ones.
std::vector<Ring> find_sssr(const MolGraph &g, int max_size = kMaxRingSize);

/// 1 for bonds that lie on some cycle (non-bridges), else 0.
std::vector<char> ring_bond_flags(const MolGraph &g);

}  // namespace molrat
