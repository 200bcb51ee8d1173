//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "molrat/forest.hpp"
#include "molrat/mol_graph.hpp"
#include "molrat/rationale.hpp"

namespace molrat {

inline constexpr int kMaxMcsAtoms = 20;

/// Pairs (atom in a, atom in b), sorted by the a index.
using AtomMapping = std::vector<std::pair<int, int>>;

/// All maximum-atom connected common subgraphs of a and b, one mapping per
/// distinct superposition (mappings whose superposed graphs are isomorphic
/// with the same overlap are reported once). Mapped atoms carry equal
/// labels; a bond present in both graphs between mapped atoms has the same
/// order in both; the mapped atoms are connected through bonds present in
/// both. Returns an empty list when no atom label is shared. Throws
/// ResourceError when either input exceeds kMaxMcsAtoms atoms or the
/// enumeration exceeds `max_mappings` raw mappings.
std::vector<AtomMapping> max_common_substructure(const MolGraph &a, const MolGraph &b,
                                                 std::size_t max_mappings = 200000);

/// Union of a and b with mapped atoms identified: a's atoms keep their
/// indices and b's unmapped atoms follow in index order. `b_index` receives
/// the union index of each b atom. Valence is not checked.
MolGraph superpose(const MolGraph &a, const MolGraph &b, const AtomMapping &mapping,
                   std::vector<int> *b_index = nullptr);

/// Superpositions of b onto a over every maximum mapping that pass the
/// valence check, deduplicated by key; a single two-fragment rationale
/// when no atom label is shared. Scores are left empty.
std::vector<Rationale> merge_pair(const Rationale &a, const Rationale &b);

struct MergeParams {
  std::size_t shortlist = 20;  // per property
  unsigned threads = 0;
};

struct MergeStats {
  std::size_t candidates = 0;
  std::size_t oversized_pairs = 0;
  std::size_t accepted = 0;
};

/// Multi-property vocabulary: shortlists each input vocabulary (by
/// `ranking[i][k]` when given, else by the property score; ties by fewer
/// atoms, then key), folds merge_pair left over the property order, and
/// keeps candidates meeting every threshold. Members carry all scores.
RationaleVocab build_multi_vocab(std::span<const RationaleVocab> vocabs, std::span<const PropertySpec> props,
                                 const MergeParams &params,
                                 std::span<const std::vector<double>> ranking = {},
                                 MergeStats *stats = nullptr);

}  // namespace molrat
