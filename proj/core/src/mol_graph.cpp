//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/mol_graph.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <numeric>

namespace molrat {

namespace {
constexpr std::array<std::string_view, kNumElements> kSymbols = {"C", "N", "O", "S", "P",
                                                                "F", "Cl", "Br", "I"};
constexpr std::array<int, kNumElements> kAtomicNumbers = {6, 7, 8, 16, 15, 9, 17, 35, 53};
constexpr std::array<int, kNumElements> kMaxValence = {4, 3, 2, 6, 5, 1, 1, 1, 1};
}  // namespace

std::string_view element_symbol(Element e) { return kSymbols[static_cast<int>(e)]; }

int atomic_number(Element e) { return kAtomicNumbers[static_cast<int>(e)]; }

bool element_from_symbol(std::string_view sym, Element &out) {
  for (int i = 0; i < kNumElements; ++i) {
    if (kSymbols[i] == sym) {
      out = static_cast<Element>(i);
      return true;
    }
  }
  return false;
}

int half_order(BondOrder o) {
  switch (o) {
  case BondOrder::Single: return 2;
  case BondOrder::Double: return 4;
  case BondOrder::Triple: return 6;
  case BondOrder::Aromatic: return 3;
  }
  return 2;
}

char bond_symbol(BondOrder o) {
  switch (o) {
  case BondOrder::Single: return '-';
  case BondOrder::Double: return '=';
  case BondOrder::Triple: return '#';
  case BondOrder::Aromatic: return ':';
  }
  return '-';
}

int max_valence(const Atom &atom) {
  const int base = kMaxValence[static_cast<int>(atom.element)];
  if (atom.element == Element::C) return std::max(0, base - std::abs(atom.charge));
  return std::max(0, base + atom.charge);
}

std::uint32_t atom_label(const Atom &atom) {
  return static_cast<std::uint32_t>(atom.element) |
         (static_cast<std::uint32_t>(atom.charge + 8) << 4) |
         (static_cast<std::uint32_t>(atom.aromatic) << 9);
}

int MolGraph::bond_between(int a, int b) const {
  if (adj_[a].size() > adj_[b].size()) std::swap(a, b);
  for (const auto &nb : adj_[a])
    if (nb.atom == b) return nb.bond;
  return -1;
}

int MolGraph::valence_sum(int atom) const {
  int halves = 0;
  for (const auto &nb : adj_[atom]) halves += half_order(bonds_[nb.bond].order);
  return halves / 2;
}

std::vector<int> MolGraph::components(int *count) const {
  std::vector<int> comp(atoms_.size(), -1);
  std::vector<int> stack;
  int next = 0;
  for (int s = 0; s < num_atoms(); ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const auto &nb : adj_[u]) {
        if (comp[nb.atom] < 0) {
          comp[nb.atom] = next;
          stack.push_back(nb.atom);
        }
      }
    }
    ++next;
  }
  if (count != nullptr) *count = next;
  return comp;
}

bool MolGraph::is_connected() const {
  if (atoms_.empty()) return true;
  int count = 0;
  components(&count);
  return count == 1;
}

MolGraph MolGraph::subgraph(std::span<const int> keep, std::span<const int> drop_bonds) const {
  std::vector<int> remap(atoms_.size(), -1);
  MolGraphBuilder b;
  for (int old : keep) {
    if (old < 0 || old >= num_atoms() || remap[old] >= 0)
      throw GraphError("subgraph: invalid or repeated atom index " + std::to_string(old));
    remap[old] = b.add_atom(atoms_[old]);
  }
  std::vector<char> dropped(bonds_.size(), 0);
  for (int bi : drop_bonds) {
    if (bi < 0 || bi >= num_bonds()) throw GraphError("subgraph: invalid bond index");
    dropped[bi] = 1;
  }
  for (int bi = 0; bi < num_bonds(); ++bi) {
    const Bond &bd = bonds_[bi];
    if (dropped[bi] || remap[bd.begin] < 0 || remap[bd.end] < 0) continue;
    b.add_bond(remap[bd.begin], remap[bd.end], bd.order);
  }
  return std::move(b).build(false);
}

MolGraph MolGraph::permuted(std::span<const int> order) const {
  if (static_cast<int>(order.size()) != num_atoms())
    throw GraphError("permuted: order length mismatch");
  return subgraph(order);
}

MolGraph MolGraph::disjoint_union(const MolGraph &other) const {
  MolGraphBuilder b(*this);
  const int off = num_atoms();
  for (const auto &a : other.atoms_) b.add_atom(a);
  for (const auto &bd : other.bonds_) b.add_bond(bd.begin + off, bd.end + off, bd.order);
  return std::move(b).build(false);
}

MolGraphBuilder::MolGraphBuilder(const MolGraph &start) : g_(start) {}

int MolGraphBuilder::add_atom(const Atom &atom) {
  g_.atoms_.push_back(atom);
  g_.adj_.emplace_back();
  return g_.num_atoms() - 1;
}

int MolGraphBuilder::add_bond(int a, int b, BondOrder order) {
  const int n = g_.num_atoms();
  if (a < 0 || b < 0 || a >= n || b >= n) throw GraphError("bond references a missing atom");
  if (a == b) throw GraphError("self-loop on atom " + std::to_string(a));
  if (g_.bond_between(a, b) >= 0)
    throw GraphError("duplicate bond " + std::to_string(a) + "-" + std::to_string(b));
  const int idx = g_.num_bonds();
  g_.bonds_.push_back(Bond{a, b, order});
  g_.adj_[a].push_back({b, idx});
  g_.adj_[b].push_back({a, idx});
  return idx;
}

MolGraph MolGraphBuilder::build(bool check_valence) && {
  if (check_valence) {
    for (int i = 0; i < g_.num_atoms(); ++i) {
      if (g_.valence_sum(i) > max_valence(g_.atom(i)))
        throw GraphError("valence exceeded on atom " + std::to_string(i) + " (" +
                         std::string(element_symbol(g_.atom(i).element)) + ")");
    }
  }
  return std::move(g_);
}

bool valence_ok(const MolGraph &g) {
  for (int i = 0; i < g.num_atoms(); ++i)
    if (g.valence_sum(i) > max_valence(g.atom(i))) return false;
  return true;
}

}  // namespace molrat
