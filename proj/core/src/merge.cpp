//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/merge.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <unordered_set>

#include "molrat/canonical.hpp"
#include "molrat/parallel.hpp"

namespace molrat {

namespace {

class McsSearch {
public:
  McsSearch(const MolGraph &a, const MolGraph &b, std::size_t cap)
      : a_(a), b_(b), cap_(cap), map_a_(a.num_atoms(), -1), map_b_(b.num_atoms(), -1),
        forbidden_(static_cast<std::size_t>(a.num_atoms()) * b.num_atoms(), 0) {
    comp_a_ = a.components();
    comp_b_ = b.components();
  }

  std::vector<AtomMapping> run() {
    // Seed pairs in lexicographic order; a seed excludes every earlier seed,
    // so each connected mapping is enumerated exactly once.
    std::vector<std::pair<int, int>> seeds;
    for (int u = 0; u < a_.num_atoms(); ++u)
      for (int v = 0; v < b_.num_atoms(); ++v)
        if (a_.atom(u) == b_.atom(v)) seeds.emplace_back(u, v);
    for (const auto &[u, v] : seeds) {
      include(u, v);
      search();
      exclude(u, v);
      forbid(u, v) = 1;
    }
    return std::move(best_);
  }

private:
  char &forbid(int u, int v) { return forbidden_[static_cast<std::size_t>(u) * b_.num_atoms() + v]; }

  void include(int u, int v) {
    map_a_[u] = v;
    map_b_[v] = u;
    mapped_.push_back(u);
  }

  void exclude(int u, int v) {
    map_a_[u] = -1;
    map_b_[v] = -1;
    mapped_.pop_back();
  }

  // Both-present bonds between (u, v) and every mapped pair agree on order,
  // and at least one such bond exists.
  bool consistent(int u, int v) const {
    bool linked = false;
    for (const auto &nb : a_.neighbors(u)) {
      const int w = map_a_[nb.atom];
      if (w < 0) continue;
      const int f = b_.bond_between(v, w);
      if (f < 0) continue;
      if (b_.bond(f).order != a_.bond(nb.bond).order) return false;
      linked = true;
    }
    return linked;
  }

  bool next_candidate(int &cu, int &cv) {
    cu = cv = -1;
    for (int x : mapped_) {
      for (const auto &na : a_.neighbors(x)) {
        const int u = na.atom;
        if (map_a_[u] >= 0) continue;
        for (const auto &nb : b_.neighbors(map_a_[x])) {
          const int v = nb.atom;
          if (map_b_[v] >= 0 || forbid(u, v) || !(a_.atom(u) == b_.atom(v))) continue;
          if (b_.bond(nb.bond).order != a_.bond(na.bond).order) continue;
          if (cu >= 0 && std::make_pair(u, v) >= std::make_pair(cu, cv)) continue;
          if (!consistent(u, v)) continue;
          cu = u;
          cv = v;
        }
      }
    }
    return cu >= 0;
  }

  // Mapped atoms plus a maximum matching of allowed pairs among the unmapped
  // atoms of the components that hold the current mapping.
  int bound() {
    const int ca = comp_a_[mapped_.front()], cb = comp_b_[map_a_[mapped_.front()]];
    std::vector<int> left, right;
    for (int u = 0; u < a_.num_atoms(); ++u)
      if (map_a_[u] < 0 && comp_a_[u] == ca) left.push_back(u);
    for (int v = 0; v < b_.num_atoms(); ++v)
      if (map_b_[v] < 0 && comp_b_[v] == cb) right.push_back(v);
    std::vector<int> match_right(b_.num_atoms(), -1);
    int matched = 0;
    std::vector<char> seen;
    std::function<bool(int)> augment = [&](int u) {
      for (int v : right) {
        if (seen[v] || forbid(u, v) || !(a_.atom(u) == b_.atom(v))) continue;
        seen[v] = 1;
        if (match_right[v] < 0 || augment(match_right[v])) {
          match_right[v] = u;
          return true;
        }
      }
      return false;
    };
    for (int u : left) {
      seen.assign(b_.num_atoms(), 0);
      if (augment(u)) ++matched;
    }
    return static_cast<int>(mapped_.size()) + matched;
  }

  void search() {
    if (bound() < best_size_) return;
    int u, v;
    if (!next_candidate(u, v)) {
      record();
      return;
    }
    include(u, v);
    search();
    exclude(u, v);
    forbid(u, v) = 1;
    search();
    forbid(u, v) = 0;
  }

  void record() {
    const int size = static_cast<int>(mapped_.size());
    if (size < best_size_) return;
    if (size > best_size_) {
      best_size_ = size;
      best_.clear();
    }
    if (++raw_ > cap_) throw ResourceError("max_common_substructure: mapping enumeration cap exceeded");
    AtomMapping m;
    for (int x : mapped_) m.emplace_back(x, map_a_[x]);
    std::sort(m.begin(), m.end());
    best_.push_back(std::move(m));
  }

  const MolGraph &a_;
  const MolGraph &b_;
  std::size_t cap_;
  std::size_t raw_ = 0;
  std::vector<int> map_a_, map_b_;
  std::vector<int> mapped_;
  std::vector<char> forbidden_;
  std::vector<int> comp_a_, comp_b_;
  int best_size_ = 1;
  std::vector<AtomMapping> best_;
};

std::string marked_union_key(const MolGraph &a, const MolGraph &b, const AtomMapping &m) {
  const MolGraph u = superpose(a, b, m);
  std::vector<std::uint64_t> marks(u.num_atoms(), 0);
  for (const auto &[x, y] : m) marks[x] = 1;
  return canonical_encoding(labeled_view(u, marks));
}

}  // namespace

std::vector<AtomMapping> max_common_substructure(const MolGraph &a, const MolGraph &b, std::size_t max_mappings) {
  if (a.num_atoms() > kMaxMcsAtoms || b.num_atoms() > kMaxMcsAtoms)
    throw ResourceError("max_common_substructure: inputs limited to " + std::to_string(kMaxMcsAtoms) +
                        " atoms (got " + std::to_string(a.num_atoms()) + " and " + std::to_string(b.num_atoms()) +
                        ")");
  auto raw = McsSearch(a, b, max_mappings).run();
  std::vector<AtomMapping> out;
  std::unordered_set<std::string> seen;
  for (auto &m : raw)
    if (seen.insert(marked_union_key(a, b, m)).second) out.push_back(std::move(m));
  return out;
}

MolGraph superpose(const MolGraph &a, const MolGraph &b, const AtomMapping &mapping, std::vector<int> *b_index) {
  std::vector<int> index(b.num_atoms(), -1);
  for (const auto &[x, y] : mapping) index[y] = x;
  MolGraphBuilder builder(a);
  for (int v = 0; v < b.num_atoms(); ++v)
    if (index[v] < 0) index[v] = builder.add_atom(b.atom(v));
  for (const auto &bd : b.bonds()) {
    const int u = index[bd.begin], w = index[bd.end];
    const int existing = builder.peek().bond_between(u, w);
    if (existing >= 0) {
      if (builder.peek().bond(existing).order != bd.order) throw GraphError("superpose: bond order conflict");
      continue;
    }
    builder.add_bond(u, w, bd.order);
  }
  if (b_index != nullptr) *b_index = std::move(index);
  return std::move(builder).build(false);
}

std::vector<Rationale> merge_pair(const Rationale &a, const Rationale &b) {
  std::vector<Rationale> out;
  auto periph_union = [&](const std::vector<int> &b_index) {
    std::vector<int> p = a.peripheral;
    for (int x : b.peripheral) p.push_back(b_index[x]);
    return p;
  };
  const auto mappings = max_common_substructure(a.graph, b.graph);
  if (mappings.empty()) {
    std::vector<int> b_index(b.graph.num_atoms());
    for (int v = 0; v < b.graph.num_atoms(); ++v) b_index[v] = a.graph.num_atoms() + v;
    out.push_back(canonicalize(a.graph.disjoint_union(b.graph), periph_union(b_index)));
    return out;
  }
  std::unordered_set<std::string> keys;
  for (const auto &m : mappings) {
    std::vector<int> b_index;
    MolGraph u;
    try {
      u = superpose(a.graph, b.graph, m, &b_index);
    } catch (const GraphError &) {
      continue;
    }
    if (!valence_ok(u)) continue;
    Rationale r = canonicalize(std::move(u), periph_union(b_index));
    if (keys.insert(r.key()).second) out.push_back(std::move(r));
  }
  return out;
}

RationaleVocab build_multi_vocab(std::span<const RationaleVocab> vocabs, std::span<const PropertySpec> props,
                                 const MergeParams &params, std::span<const std::vector<double>> ranking,
                                 MergeStats *stats) {
  if (vocabs.size() < 2) throw Error("build_multi_vocab: need at least two vocabularies");
  if (props.size() != vocabs.size()) throw Error("build_multi_vocab: one property per vocabulary required");
  if (!ranking.empty() && ranking.size() != vocabs.size())
    throw Error("build_multi_vocab: ranking must cover every vocabulary");

  std::vector<std::vector<Rationale>> shortlists;
  for (std::size_t i = 0; i < vocabs.size(); ++i) {
    const auto &items = vocabs[i].items();
    if (!ranking.empty() && ranking[i].size() != items.size())
      throw Error("build_multi_vocab: ranking length differs from vocabulary size");
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::string> keys;
    for (const auto &r : items) keys.push_back(r.key());
    auto value = [&](std::size_t k) {
      if (!ranking.empty()) return ranking[i][k];
      const auto it = items[k].scores.find(props[i].name);
      return it == items[k].scores.end() ? props[i].score(items[k].graph) : it->second;
    };
    auto score = [&](std::size_t k) { return props[i].score(items[k].graph); };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return std::make_tuple(-value(x), -score(x), items[x].graph.num_atoms(), keys[x]) <
             std::make_tuple(-value(y), -score(y), items[y].graph.num_atoms(), keys[y]);
    });
    order.resize(std::min(order.size(), params.shortlist));
    std::vector<Rationale> list;
    for (std::size_t k : order) list.push_back(items[k]);
    shortlists.push_back(std::move(list));
  }

  MergeStats local;
  std::vector<Rationale> acc = shortlists[0];
  for (std::size_t i = 1; i < shortlists.size(); ++i) {
    const auto &right = shortlists[i];
    std::vector<std::vector<Rationale>> results(acc.size() * right.size());
    std::vector<char> oversized(results.size(), 0);
    parallel_for(
        results.size(),
        [&](std::size_t k) {
          const Rationale &x = acc[k / right.size()], &y = right[k % right.size()];
          if (x.graph.num_atoms() > kMaxMcsAtoms || y.graph.num_atoms() > kMaxMcsAtoms) {
            oversized[k] = 1;
            return;
          }
          results[k] = merge_pair(x, y);
        },
        params.threads);
    std::vector<Rationale> next;
    std::unordered_set<std::string> seen;
    for (std::size_t k = 0; k < results.size(); ++k) {
      local.oversized_pairs += oversized[k];
      for (auto &r : results[k])
        if (seen.insert(r.key()).second) next.push_back(std::move(r));
    }
    acc = std::move(next);
  }
  local.candidates = acc.size();

  std::vector<std::string> names;
  for (const auto &p : props) names.push_back(p.name);
  RationaleVocab out(names);
  std::vector<std::map<std::string, double>> scores(acc.size());
  std::vector<char> keep(acc.size(), 0);
  parallel_for(
      acc.size(),
      [&](std::size_t k) {
        bool ok = true;
        for (const auto &p : props) {
          const double s = p.score(acc[k].graph);
          scores[k][p.name] = s;
          ok = ok && s >= p.threshold;
        }
        keep[k] = ok;
      },
      params.threads);
  for (std::size_t k = 0; k < acc.size(); ++k) {
    if (!keep[k]) continue;
    acc[k].scores = std::move(scores[k]);
    if (out.add(std::move(acc[k]))) ++local.accepted;
  }
  if (stats != nullptr) *stats = local;
  return out;
}

}  // namespace molrat
