//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <vector>

#include "molrat/mol_graph.hpp"

namespace molrat {

/// One pruning action on a connected molecule: a peripheral bond (removed
/// together with its degree-1 endpoint) or a peripheral ring (ring atoms
/// with no neighbor outside the ring are removed together with the ring
/// bonds not shared with another ring).
struct Deletion {
  enum class Kind { PeripheralBond, PeripheralRing };

  Kind kind = Kind::PeripheralBond;
  std::vector<int> removed_atoms;  // sorted
  std::vector<int> removed_bonds;  // sorted

  friend bool operator==(const Deletion &, const Deletion &) = default;
};

/// All legal deletions of a connected graph: bond deletions in bond-index
/// order, then ring deletions in ring-perception order. Throws GraphError
/// for disconnected input.
std::vector<Deletion> peripheral_deletions(const MolGraph &g);

/// Reduced graph; atoms keep their relative order. `kept`, when given,
/// receives the source index of each remaining atom. Throws GraphError for
/// deletions that do not fit the graph.
MolGraph apply_deletion(const MolGraph &g, const Deletion &d, std::vector<int> *kept = nullptr);

}  // namespace molrat
