//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/rings.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <queue>

namespace molrat {

namespace {

using BondSet = std::vector<std::uint64_t>;

BondSet make_set(int nbonds) { return BondSet((nbonds + 63) / 64, 0); }

void flip(BondSet &s, int b) { s[b / 64] ^= std::uint64_t{1} << (b % 64); }

bool test(const BondSet &s, int b) { return (s[b / 64] >> (b % 64)) & 1U; }

int lowest_bit(const BondSet &s) {
  for (std::size_t w = 0; w < s.size(); ++w)
    if (s[w] != 0) return static_cast<int>(w * 64 + __builtin_ctzll(s[w]));
  return -1;
}

struct Candidate {
  int size;
  std::vector<int> bonds;  // sorted
};

// Orders the atoms of a cycle given by its bond set.
Ring ring_from_bonds(const MolGraph &g, const std::vector<int> &bonds) {
  Ring r;
  const int start_bond = bonds.front();
  int cur = g.bond(start_bond).begin;
  int prev_bond = -1;
  const int len = static_cast<int>(bonds.size());
  for (int k = 0; k < len; ++k) {
    r.atoms.push_back(cur);
    int next_bond = -1;
    for (const auto &nb : g.neighbors(cur)) {
      if (nb.bond == prev_bond) continue;
      if (std::binary_search(bonds.begin(), bonds.end(), nb.bond)) {
        if (k == 0 && nb.bond != start_bond) continue;
        next_bond = nb.bond;
        break;
      }
    }
    r.bonds.push_back(next_bond);
    prev_bond = next_bond;
    cur = g.bond(next_bond).other(cur);
  }
  r.aromatic = std::all_of(r.bonds.begin(), r.bonds.end(),
                           [&](int b) { return g.bond(b).order == BondOrder::Aromatic; });
  return r;
}

}  // namespace

std::vector<char> ring_bond_flags(const MolGraph &g) {
  const int n = g.num_atoms();
  std::vector<char> on_ring(g.num_bonds(), 1);
  std::vector<int> disc(n, -1), low(n, 0);
  int timer = 0;
  std::function<void(int, int)> dfs = [&](int u, int parent_bond) {
    disc[u] = low[u] = timer++;
    for (const auto &nb : g.neighbors(u)) {
      if (nb.bond == parent_bond) continue;
      if (disc[nb.atom] < 0) {
        dfs(nb.atom, nb.bond);
        low[u] = std::min(low[u], low[nb.atom]);
        if (low[nb.atom] > disc[u]) on_ring[nb.bond] = 0;
      } else {
        low[u] = std::min(low[u], disc[nb.atom]);
      }
    }
  };
  for (int s = 0; s < n; ++s)
    if (disc[s] < 0) dfs(s, -1);
  return on_ring;
}

std::vector<Ring> find_sssr(const MolGraph &g, int max_size) {
  const int n = g.num_atoms();
  const int m = g.num_bonds();
  int comps = 0;
  g.components(&comps);
  const int rank = m - n + comps;
  if (rank <= 0) return {};

  const auto on_ring = ring_bond_flags(g);
  std::vector<Candidate> cands;
  std::vector<int> dist(n), parent_bond(n);
  for (int r = 0; r < n; ++r) {
    bool touches_ring = false;
    for (const auto &nb : g.neighbors(r)) touches_ring |= on_ring[nb.bond] != 0;
    if (!touches_ring) continue;
    std::fill(dist.begin(), dist.end(), -1);
    std::fill(parent_bond.begin(), parent_bond.end(), -1);
    std::queue<int> q;
    dist[r] = 0;
    q.push(r);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (const auto &nb : g.neighbors(u)) {
        if (dist[nb.atom] >= 0) continue;
        dist[nb.atom] = dist[u] + 1;
        parent_bond[nb.atom] = nb.bond;
        q.push(nb.atom);
      }
    }
    auto path_to_root = [&](int x, std::vector<int> &atoms, std::vector<int> &bonds) {
      while (x != r) {
        atoms.push_back(x);
        bonds.push_back(parent_bond[x]);
        x = g.bond(parent_bond[x]).other(x);
      }
    };
    for (int b = 0; b < m; ++b) {
      if (!on_ring[b]) continue;
      const int x = g.bond(b).begin, y = g.bond(b).end;
      if (dist[x] < 0 || dist[y] < 0) continue;
      if (parent_bond[x] == b || parent_bond[y] == b) continue;
      const int size = dist[x] + dist[y] + 1;
      if (size > max_size) continue;
      std::vector<int> ax, bx, ay, by;
      path_to_root(x, ax, bx);
      path_to_root(y, ay, by);
      bool disjoint = true;
      for (int a : ax)
        if (std::find(ay.begin(), ay.end(), a) != ay.end()) disjoint = false;
      if (!disjoint) continue;
      std::vector<int> bonds = bx;
      bonds.insert(bonds.end(), by.begin(), by.end());
      bonds.push_back(b);
      std::sort(bonds.begin(), bonds.end());
      cands.push_back({size, std::move(bonds)});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate &a, const Candidate &b) {
    if (a.size != b.size) return a.size < b.size;
    return a.bonds < b.bonds;
  });
  cands.erase(std::unique(cands.begin(), cands.end(),
                          [](const Candidate &a, const Candidate &b) { return a.bonds == b.bonds; }),
              cands.end());

  std::vector<BondSet> basis;  // reduced rows, each with a distinct pivot
  std::vector<int> pivots;
  std::vector<Ring> rings;
  for (const auto &c : cands) {
    if (static_cast<int>(rings.size()) == rank) break;
    BondSet v = make_set(m);
    for (int b : c.bonds) flip(v, b);
    for (std::size_t i = 0; i < basis.size(); ++i)
      if (test(v, pivots[i]))
        for (std::size_t w = 0; w < v.size(); ++w) v[w] ^= basis[i][w];
    const int p = lowest_bit(v);
    if (p < 0) continue;
    for (std::size_t i = 0; i < basis.size(); ++i)
      if (test(basis[i], p))
        for (std::size_t w = 0; w < v.size(); ++w) basis[i][w] ^= v[w];
    basis.push_back(std::move(v));
    pivots.push_back(p);
    rings.push_back(ring_from_bonds(g, c.bonds));
  }
  return rings;
}

}  // namespace molrat
