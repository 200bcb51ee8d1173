//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <functional>
#include <set>
#include <vector>

#include "molrat/mol_graph.hpp"
#include "molrat/rng.hpp"
#include "molrat/synthetic.hpp"

namespace molrat::testing {

// Largest connected common subgraph by trying every partial injective map.
inline int brute_force_mcs_size(const MolGraph &a, const MolGraph &b) {
  std::vector<int> map(a.num_atoms(), -1);
  std::vector<char> used(b.num_atoms(), 0);
  int best = 0;
  auto valid = [&] {
    std::vector<int> mapped;
    for (int u = 0; u < a.num_atoms(); ++u)
      if (map[u] >= 0) mapped.push_back(u);
    if (mapped.empty()) return 0;
    // Orders agree where both bonds exist; connectivity over common bonds.
    std::vector<std::vector<int>> adj(a.num_atoms());
    for (int u : mapped)
      for (int w : mapped) {
        if (u >= w) continue;
        const int e = a.bond_between(u, w), f = b.bond_between(map[u], map[w]);
        if (e >= 0 && f >= 0) {
          if (a.bond(e).order != b.bond(f).order) return 0;
          adj[u].push_back(w);
          adj[w].push_back(u);
        }
      }
    std::set<int> seen{mapped[0]};
    std::vector<int> stack{mapped[0]};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int w : adj[u])
        if (seen.insert(w).second) stack.push_back(w);
    }
    return seen.size() == mapped.size() ? static_cast<int>(mapped.size()) : 0;
  };
  std::function<void(int)> go = [&](int u) {
    if (u == a.num_atoms()) {
      best = std::max(best, valid());
      return;
    }
    go(u + 1);
    for (int v = 0; v < b.num_atoms(); ++v) {
      if (used[v] || !(a.atom(u) == b.atom(v))) continue;
      used[v] = 1;
      map[u] = v;
      go(u + 1);
      map[u] = -1;
      used[v] = 0;
    }
  };
  go(0);
  return best;
}

inline MolGraph random_small(Rng &rng, int max_atoms) {
  SyntheticParams p{2, max_atoms, 0.25};
  for (;;) {
    MolGraph g = random_molecule(rng, p);
    if (g.num_atoms() <= max_atoms) return g;
  }
}

}  // namespace molrat::testing
