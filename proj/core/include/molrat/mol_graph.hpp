//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "molrat/error.hpp"

namespace molrat {

enum class Element : std::uint8_t { C, N, O, S, P, F, Cl, Br, I };

inline constexpr int kNumElements = 9;

std::string_view element_symbol(Element e);
int atomic_number(Element e);
// Returns false when the symbol is not one of the supported elements.
bool element_from_symbol(std::string_view sym, Element &out);

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

/// Bond-order contribution in units of half bonds (aromatic = 3 halves).
int half_order(BondOrder o);
char bond_symbol(BondOrder o);

struct Atom {
  Element element = Element::C;
  int charge = 0;
  bool aromatic = false;

  friend bool operator==(const Atom &, const Atom &) = default;
};

struct Bond {
  int begin = 0;
  int end = 0;
  BondOrder order = BondOrder::Single;

  int other(int atom) const { return atom == begin ? end : begin; }
};

/// Maximum valence for an atom, adjusted for formal charge.
int max_valence(const Atom &atom);

/// Dense label used by the fingerprint, the generator vocabulary and
/// canonicalization: element, charge and aromatic flag packed together.
std::uint32_t atom_label(const Atom &atom);

/// Labeled undirected molecular graph. Values are immutable once built by
/// MolGraphBuilder or by one of the graph transforms.
class MolGraph {
public:
  struct Neighbor {
    int atom;
    int bond;
  };

  MolGraph() = default;

  int num_atoms() const { return static_cast<int>(atoms_.size()); }
  int num_bonds() const { return static_cast<int>(bonds_.size()); }
  bool empty() const { return atoms_.empty(); }

  const Atom &atom(int i) const { return atoms_[i]; }
  const Bond &bond(int i) const { return bonds_[i]; }
  std::span<const Atom> atoms() const { return atoms_; }
  std::span<const Bond> bonds() const { return bonds_; }
  std::span<const Neighbor> neighbors(int atom) const { return adj_[atom]; }
  int degree(int atom) const { return static_cast<int>(adj_[atom].size()); }

  /// Bond index between two atoms, or -1.
  int bond_between(int a, int b) const;

  /// Sum of bond orders at an atom: aromatic bonds count 1.5 and the sum is
  /// rounded down.
  int valence_sum(int atom) const;
  int free_valence(int atom) const { return max_valence(atoms_[atom]) - valence_sum(atom); }

  bool is_connected() const;
  /// Connected component id per atom; ids are dense and ordered by the
  /// lowest atom index in each component.
  std::vector<int> components(int *count = nullptr) const;

  /// Subgraph induced by `keep` (atom order preserved), minus `drop_bonds`.
  MolGraph subgraph(std::span<const int> keep, std::span<const int> drop_bonds = {}) const;
  /// Atoms renumbered so that new atom i is old atom order[i].
  MolGraph permuted(std::span<const int> order) const;
  /// Disjoint union; atoms of `other` follow this graph's atoms.
  MolGraph disjoint_union(const MolGraph &other) const;

private:
  friend class MolGraphBuilder;

  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adj_;
};

/// Incremental construction with invariant checks (no self loops, no
/// parallel bonds, valence limits).
class MolGraphBuilder {
public:
  MolGraphBuilder() = default;
  explicit MolGraphBuilder(const MolGraph &start);

  int add_atom(const Atom &atom);
  /// Throws GraphError on self loops, duplicate bonds or bad indices.
  int add_bond(int a, int b, BondOrder order);

  int num_atoms() const { return g_.num_atoms(); }
  const MolGraph &peek() const { return g_; }

  /// Validates valence and returns the graph.
  MolGraph build(bool check_valence = true) &&;

private:
  MolGraph g_;
};

/// True when every atom respects max_valence.
bool valence_ok(const MolGraph &g);

}  // namespace molrat
