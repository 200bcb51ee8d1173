//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <optional>
#include <vector>

#include "molrat/mol_graph.hpp"

namespace molrat {

inline constexpr int kMaxSubstructureAtoms = 60;

/// Injective map from atoms of `pattern` into `target` preserving element,
/// charge, aromatic flag, and every pattern bond with its order (extra
/// target bonds are allowed). Returns nullopt when no embedding exists.
/// Throws ResourceError when either graph exceeds kMaxSubstructureAtoms.
std::optional<std::vector<int>> contains_subgraph(const MolGraph &target, const MolGraph &pattern);

/// Every embedding, up to `limit` of them.
std::vector<std::vector<int>> all_embeddings(const MolGraph &target, const MolGraph &pattern,
                                             std::size_t limit = 10000);

}  // namespace molrat
