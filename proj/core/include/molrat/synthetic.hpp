//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <string>
#include <vector>

#include "molrat/mol_graph.hpp"
#include "molrat/rng.hpp"

namespace molrat {

/// Random valence-valid molecule growth. Each step picks an atom with free
/// valence uniformly and attaches either a new ring (probability
/// `ring_prob`, joined by one single bond) or a single new atom. Pieces are
/// only ever attached by one bond, so any planted motif stays reachable by
/// peripheral deletions.
struct SyntheticParams {
  int min_atoms = 8;
  int max_atoms = 25;
  double ring_prob = 0.3;
};

MolGraph random_molecule(Rng &rng, const SyntheticParams &params);

/// Grows a random molecule around a copy of `motif` (atoms 0..|motif|-1).
MolGraph planted_molecule(Rng &rng, const SyntheticParams &params, const MolGraph &motif);

struct LabeledCorpus {
  std::vector<MolGraph> molecules;
  std::vector<std::vector<int>> labels;  // labels[property][molecule]
};

/// Corpus where each motif is planted independently with probability
/// `plant_prob`; the label of property i is containment of motif i.
LabeledCorpus synthetic_corpus(Rng &rng, int size, const std::vector<MolGraph> &motifs,
                               double plant_prob, const SyntheticParams &params);

}  // namespace molrat
