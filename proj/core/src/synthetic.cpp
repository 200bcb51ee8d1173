//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/synthetic.hpp"

#include <algorithm>
#include <array>

#include "molrat/substructure.hpp"

namespace molrat {

namespace {

struct Weighted {
  Element element;
  double weight;
};

constexpr std::array<Weighted, 6> kAtomMix = {{{Element::C, 0.60},
                                               {Element::N, 0.15},
                                               {Element::O, 0.15},
                                               {Element::S, 0.04},
                                               {Element::F, 0.03},
                                               {Element::Cl, 0.03}}};

Element pick_element(Rng &rng) {
  double u = rng.uniform();
  for (const auto &w : kAtomMix) {
    if (u < w.weight) return w.element;
    u -= w.weight;
  }
  return Element::C;
}

int free_valence(const MolGraphBuilder &b, int atom) { return b.peek().free_valence(atom); }

int pick_anchor(Rng &rng, const MolGraphBuilder &b) {
  std::vector<int> open;
  for (int a = 0; a < b.num_atoms(); ++a)
    if (free_valence(b, a) >= 1) open.push_back(a);
  if (open.empty()) return -1;
  return open[rng.below(static_cast<int>(open.size()))];
}

// Adds a ring of `size` atoms and returns the index of its first atom.
int add_ring(Rng &rng, MolGraphBuilder &b, int size) {
  const double kind = rng.uniform();
  const int first = b.num_atoms();
  if (size == 6 && kind < 0.6) {
    // benzene, or pyridine with probability 1/6 of the aromatic rings
    const bool pyridine = rng.uniform() < 1.0 / 6.0;
    for (int i = 0; i < 6; ++i) {
      Atom a{Element::C, 0, true};
      if (pyridine && i == 3) a.element = Element::N;
      b.add_atom(a);
    }
    for (int i = 0; i < 6; ++i) b.add_bond(first + i, first + (i + 1) % 6, BondOrder::Aromatic);
    return first;
  }
  for (int i = 0; i < size; ++i) {
    Atom a{Element::C, 0, false};
    if (i > 1 && rng.uniform() < 0.15) a.element = rng.uniform() < 0.5 ? Element::N : Element::O;
    b.add_atom(a);
  }
  for (int i = 0; i < size; ++i) b.add_bond(first + i, first + (i + 1) % size, BondOrder::Single);
  return first;
}

void grow(Rng &rng, MolGraphBuilder &b, const SyntheticParams &p, int target) {
  while (b.num_atoms() < target) {
    const int anchor = pick_anchor(rng, b);
    if (anchor < 0) break;
    const int room = p.max_atoms - b.num_atoms();
    if (rng.uniform() < p.ring_prob && room >= 5) {
      const int size = room >= 6 && rng.uniform() < 0.6 ? 6 : 5;
      const int r = add_ring(rng, b, size);
      b.add_bond(anchor, r, BondOrder::Single);
      continue;
    }
    Atom atom{pick_element(rng), 0, false};
    const int fresh = b.add_atom(atom);
    const int room_anchor = free_valence(b, anchor);
    const int room_new = max_valence(atom);
    BondOrder order = BondOrder::Single;
    const bool anchor_aromatic = b.peek().atom(anchor).aromatic;
    if (!anchor_aromatic) {
      const double u = rng.uniform();
      if (u < 0.03 && room_anchor >= 3 && room_new >= 3)
        order = BondOrder::Triple;
      else if (u < 0.18 && room_anchor >= 2 && room_new >= 2)
        order = BondOrder::Double;
    }
    b.add_bond(anchor, fresh, order);
  }
}

int target_size(Rng &rng, const SyntheticParams &p, int planted) {
  int target = rng.between(p.min_atoms, p.max_atoms);
  if (target < planted + 2) target = std::min(std::max(p.max_atoms, planted), planted + 2);
  return target;
}

}  // namespace

MolGraph random_molecule(Rng &rng, const SyntheticParams &params) {
  MolGraphBuilder b;
  const int target = target_size(rng, params, 0);
  b.add_atom(Atom{Element::C, 0, false});
  grow(rng, b, params, target);
  return std::move(b).build();
}

MolGraph planted_molecule(Rng &rng, const SyntheticParams &params, const MolGraph &motif) {
  MolGraphBuilder b(motif);
  grow(rng, b, params, target_size(rng, params, motif.num_atoms()));
  return std::move(b).build();
}

LabeledCorpus synthetic_corpus(Rng &rng, int size, const std::vector<MolGraph> &motifs,
                               double plant_prob, const SyntheticParams &params) {
  LabeledCorpus out;
  out.labels.assign(motifs.size(), {});
  for (int i = 0; i < size; ++i) {
    MolGraphBuilder b;
    int planted = 0;
    for (const auto &m : motifs) {
      if (!rng.bernoulli(plant_prob)) continue;
      const int off = b.num_atoms();
      std::vector<int> open_before;
      for (int a = 0; a < off; ++a)
        if (b.peek().free_valence(a) >= 1) open_before.push_back(a);
      for (const auto &atom : m.atoms()) b.add_atom(atom);
      for (const auto &bd : m.bonds()) b.add_bond(bd.begin + off, bd.end + off, bd.order);
      if (off > 0) {
        std::vector<int> open_motif;
        for (int a = off; a < b.num_atoms(); ++a)
          if (b.peek().free_valence(a) >= 1) open_motif.push_back(a);
        if (open_before.empty() || open_motif.empty())
          throw GraphError("synthetic_corpus: motifs cannot be joined (no free valence)");
        b.add_bond(open_before[rng.below(static_cast<int>(open_before.size()))],
                   open_motif[rng.below(static_cast<int>(open_motif.size()))], BondOrder::Single);
      }
      planted += m.num_atoms();
    }
    if (b.num_atoms() == 0) b.add_atom(Atom{Element::C, 0, false});
    grow(rng, b, params, target_size(rng, params, planted));
    MolGraph g = std::move(b).build();
    for (std::size_t p = 0; p < motifs.size(); ++p)
      out.labels[p].push_back(contains_subgraph(g, motifs[p]).has_value() ? 1 : 0);
    out.molecules.push_back(std::move(g));
  }
  return out;
}

}  // namespace molrat
