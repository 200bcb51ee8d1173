//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "molrat/mol_graph.hpp"

namespace molrat {

/// Vertex- and edge-labeled graph view used by the canonical labeling search.
struct LabeledGraph {
  struct Edge {
    int u;
    int v;
    int label;
  };
  std::vector<std::uint64_t> vertex_labels;
  std::vector<Edge> edges;
};

LabeledGraph labeled_view(const MolGraph &g);
/// Same as labeled_view but each atom label is combined with `extra[i]`.
LabeledGraph labeled_view(const MolGraph &g, std::span<const std::uint64_t> extra);

/// Canonical vertex order: result[k] is the vertex placed at canonical
/// position k. Isomorphic labeled graphs produce orders under which the
/// relabeled graphs are identical. Color refinement followed by
/// individualization over tied cells; interchangeable twins are explored
/// once.
std::vector<int> canonical_order(const LabeledGraph &g);

/// Canonical position of each atom (inverse of canonical_order).
std::vector<int> canonical_ranks(const MolGraph &g);

/// Exact canonical encoding as a compact string (labels and edges in
/// canonical order). Equal iff the labeled graphs are isomorphic.
std::string canonical_encoding(const LabeledGraph &g);

/// Canonical SMILES of the molecule; equal for isomorphic graphs and
/// distinct for non-isomorphic ones.
std::string canonical_key(const MolGraph &g);

/// Canonical SMILES; `emit_order[i]` is the atom written i-th, which is the
/// index that atom gets when the string is parsed back.
std::string canonical_smiles(const MolGraph &g, std::vector<int> *emit_order);

/// Atoms renumbered into canonical SMILES order, so that
/// parse_smiles(canonical_key(g)) reproduces the result atom for atom.
MolGraph canonical_relabel(const MolGraph &g, std::vector<int> *order = nullptr);

bool isomorphic(const MolGraph &a, const MolGraph &b);

}  // namespace molrat
