//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "molrat/mol_graph.hpp"

namespace molrat {

/// Parses the supported SMILES subset: organic-subset atoms (C N O S P F Cl
/// Br I), lowercase aromatics (c n o s p), bracket atoms with H count and
/// charge, branches, ring closures (digits and %nn), bond symbols - = # :
/// and '.' fragment separators. Stereo marks, isotopes and atom classes are
/// rejected. Throws ParseError carrying the offending position.
MolGraph parse_smiles(std::string_view text);

/// Canonical SMILES (same string as canonical_key).
std::string write_smiles(const MolGraph &g);

/// SMILES with a random traversal; used to produce alternative renderings
/// of the same molecule.
std::string write_smiles_random(const MolGraph &g, std::uint64_t seed);

/// Depth-first SMILES writer. Lower `priority` atoms start components and
/// are visited first among siblings. When `emit_order` is non-null it
/// receives atoms in the order they appear in the output string, which is
/// the atom order parse_smiles will assign.
std::string write_smiles_prioritized(const MolGraph &g, std::span<const int> priority,
                                     std::vector<int> *emit_order = nullptr);

/// Atom-indexed JSON dump for debugging.
nlohmann::json graph_to_json(const MolGraph &g);

}  // namespace molrat
