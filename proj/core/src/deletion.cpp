//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/deletion.hpp"

#include <algorithm>

#include "molrat/rings.hpp"

namespace molrat {

namespace {

bool remainder_connected(const MolGraph &g, const std::vector<char> &atom_gone,
                         const std::vector<char> &bond_gone) {
  int start = -1, remaining = 0;
  for (int a = 0; a < g.num_atoms(); ++a)
    if (!atom_gone[a]) {
      ++remaining;
      if (start < 0) start = a;
    }
  if (remaining == 0) return false;
  std::vector<char> seen(g.num_atoms(), 0);
  std::vector<int> stack{start};
  seen[start] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const auto &nb : g.neighbors(u)) {
      if (bond_gone[nb.bond] || atom_gone[nb.atom] || seen[nb.atom]) continue;
      seen[nb.atom] = 1;
      ++reached;
      stack.push_back(nb.atom);
    }
  }
  return reached == remaining;
}

}  // namespace

std::vector<Deletion> peripheral_deletions(const MolGraph &g) {
  if (!g.is_connected()) throw GraphError("peripheral_deletions: input graph is disconnected");
  std::vector<Deletion> out;
  const auto on_ring = ring_bond_flags(g);
  for (int b = 0; b < g.num_bonds(); ++b) {
    const Bond &bd = g.bond(b);
    if (bd.order == BondOrder::Aromatic || on_ring[b]) continue;
    const bool lb = g.degree(bd.begin) == 1, le = g.degree(bd.end) == 1;
    if (lb == le) continue;
    out.push_back({Deletion::Kind::PeripheralBond, {lb ? bd.begin : bd.end}, {b}});
  }

  const auto rings = find_sssr(g);
  std::vector<int> ring_count(g.num_bonds(), 0);
  for (const auto &r : rings)
    for (int b : r.bonds) ++ring_count[b];
  for (const auto &r : rings) {
    std::vector<char> atom_gone(g.num_atoms(), 0), bond_gone(g.num_bonds(), 0);
    Deletion d;
    d.kind = Deletion::Kind::PeripheralRing;
    for (int a : r.atoms) {
      bool inside = true;
      for (const auto &nb : g.neighbors(a))
        if (std::find(r.atoms.begin(), r.atoms.end(), nb.atom) == r.atoms.end()) inside = false;
      if (inside) {
        atom_gone[a] = 1;
        d.removed_atoms.push_back(a);
      }
    }
    if (d.removed_atoms.empty()) continue;
    for (int b : r.bonds)
      if (ring_count[b] == 1) bond_gone[b] = 1;
    for (int a : d.removed_atoms)
      for (const auto &nb : g.neighbors(a)) bond_gone[nb.bond] = 1;
    if (!remainder_connected(g, atom_gone, bond_gone)) continue;
    for (int b = 0; b < g.num_bonds(); ++b)
      if (bond_gone[b]) d.removed_bonds.push_back(b);
    std::sort(d.removed_atoms.begin(), d.removed_atoms.end());
    out.push_back(std::move(d));
  }
  return out;
}

MolGraph apply_deletion(const MolGraph &g, const Deletion &d, std::vector<int> *kept) {
  std::vector<char> gone(g.num_atoms(), 0);
  for (int a : d.removed_atoms) {
    if (a < 0 || a >= g.num_atoms()) throw GraphError("stale deletion: atom index out of range");
    gone[a] = 1;
  }
  for (int b : d.removed_bonds)
    if (b < 0 || b >= g.num_bonds()) throw GraphError("stale deletion: bond index out of range");
  std::vector<int> keep;
  for (int a = 0; a < g.num_atoms(); ++a)
    if (!gone[a]) keep.push_back(a);
  if (keep.empty() || keep.size() == static_cast<std::size_t>(g.num_atoms()))
    throw GraphError("stale deletion: must remove some but not all atoms");
  MolGraph out = g.subgraph(keep, d.removed_bonds);
  if (!out.is_connected()) throw GraphError("stale deletion: result is disconnected");
  if (kept != nullptr) *kept = std::move(keep);
  return out;
}

}  // namespace molrat
