//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/substructure.hpp"

#include <algorithm>
#include <string>

namespace molrat {

namespace {

class Matcher {
public:
  Matcher(const MolGraph &t, const MolGraph &p, std::size_t limit) : t_(t), p_(p), limit_(limit) {
    if (t.num_atoms() > kMaxSubstructureAtoms || p.num_atoms() > kMaxSubstructureAtoms)
      throw ResourceError("substructure search limited to " +
                          std::to_string(kMaxSubstructureAtoms) + " atoms");
    plan();
  }

  std::vector<std::vector<int>> run() {
    if (p_.num_atoms() > t_.num_atoms() || p_.num_bonds() > t_.num_bonds()) return {};
    if (p_.empty()) return {{}};
    map_.assign(p_.num_atoms(), -1);
    used_.assign(t_.num_atoms(), 0);
    extend(0);
    return std::move(found_);
  }

private:
  // Pattern atoms in connected BFS order, each component seeded at its
  // rarest-label, highest-degree atom.
  void plan() {
    const int n = p_.num_atoms();
    std::vector<int> freq(1024, 0);
    for (const auto &a : t_.atoms()) ++freq[atom_label(a) & 1023];
    std::vector<char> placed(n, 0);
    parent_.assign(n, -1);
    while (static_cast<int>(order_.size()) < n) {
      int seed = -1;
      for (int v = 0; v < n; ++v) {
        if (placed[v]) continue;
        if (seed < 0) {
          seed = v;
          continue;
        }
        const int fv = freq[atom_label(p_.atom(v)) & 1023], fs = freq[atom_label(p_.atom(seed)) & 1023];
        if (fv < fs || (fv == fs && p_.degree(v) > p_.degree(seed))) seed = v;
      }
      placed[seed] = 1;
      std::size_t head = order_.size();
      order_.push_back(seed);
      while (head < order_.size()) {
        const int u = order_[head++];
        for (const auto &nb : p_.neighbors(u)) {
          if (placed[nb.atom]) continue;
          placed[nb.atom] = 1;
          parent_[nb.atom] = u;
          order_.push_back(nb.atom);
        }
      }
    }
  }

  bool compatible(int pv, int tv) const {
    if (used_[tv]) return false;
    if (!(p_.atom(pv) == t_.atom(tv))) return false;
    if (t_.degree(tv) < p_.degree(pv)) return false;
    for (const auto &nb : p_.neighbors(pv)) {
      const int mt = map_[nb.atom];
      if (mt < 0) continue;
      const int tb = t_.bond_between(tv, mt);
      if (tb < 0 || t_.bond(tb).order != p_.bond(nb.bond).order) return false;
    }
    return true;
  }

  bool extend(std::size_t depth) {
    if (depth == order_.size()) {
      found_.push_back(map_);
      return found_.size() >= limit_;
    }
    const int pv = order_[depth];
    auto attempt = [&](int tv) {
      if (!compatible(pv, tv)) return false;
      map_[pv] = tv;
      used_[tv] = 1;
      const bool stop = extend(depth + 1);
      map_[pv] = -1;
      used_[tv] = 0;
      return stop;
    };
    if (parent_[pv] >= 0) {
      for (const auto &nb : t_.neighbors(map_[parent_[pv]]))
        if (attempt(nb.atom)) return true;
    } else {
      for (int tv = 0; tv < t_.num_atoms(); ++tv)
        if (attempt(tv)) return true;
    }
    return false;
  }

  const MolGraph &t_;
  const MolGraph &p_;
  std::size_t limit_;
  std::vector<int> order_;
  std::vector<int> parent_;
  std::vector<int> map_;
  std::vector<char> used_;
  std::vector<std::vector<int>> found_;
};

}  // namespace

std::optional<std::vector<int>> contains_subgraph(const MolGraph &target, const MolGraph &pattern) {
  auto found = Matcher(target, pattern, 1).run();
  if (found.empty()) return std::nullopt;
  return std::move(found.front());
}

std::vector<std::vector<int>> all_embeddings(const MolGraph &target, const MolGraph &pattern,
                                             std::size_t limit) {
  return Matcher(target, pattern, limit).run();
}

}  // namespace molrat
