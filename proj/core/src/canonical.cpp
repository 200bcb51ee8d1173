//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/canonical.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <utility>

#include "molrat/smiles.hpp"

namespace molrat {

namespace {

// Upper bound on explored leaves of the individualization tree. Molecules
// hit it only with extreme non-twin symmetry; the result stays a valid
// labeling but is then not guaranteed canonical.
constexpr int kMaxLeaves = 20000;

struct Adjacency {
  // adj[v] = (neighbor, edge label), sorted by neighbor.
  std::vector<std::vector<std::pair<int, int>>> adj;

  explicit Adjacency(const LabeledGraph &g) : adj(g.vertex_labels.size()) {
    for (const auto &e : g.edges) {
      adj[e.u].emplace_back(e.v, e.label);
      adj[e.v].emplace_back(e.u, e.label);
    }
    for (auto &a : adj) std::sort(a.begin(), a.end());
  }
};

// Colors are positions: the color of a vertex is the number of vertices in
// strictly smaller classes.
std::vector<int> initial_colors(const LabeledGraph &g) {
  const int n = static_cast<int>(g.vertex_labels.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return g.vertex_labels[a] < g.vertex_labels[b];
  });
  std::vector<int> color(n);
  for (int i = 0; i < n; ++i) {
    if (i > 0 && g.vertex_labels[idx[i]] == g.vertex_labels[idx[i - 1]])
      color[idx[i]] = color[idx[i - 1]];
    else
      color[idx[i]] = i;
  }
  return color;
}

int count_classes(const std::vector<int> &color) {
  std::vector<char> seen(color.size(), 0);
  int k = 0;
  for (int c : color)
    if (!seen[c]) {
      seen[c] = 1;
      ++k;
    }
  return k;
}

void refine(const Adjacency &A, std::vector<int> &color) {
  const int n = static_cast<int>(color.size());
  int classes = count_classes(color);
  std::vector<std::vector<std::pair<int, int>>> sig(n);
  std::vector<int> idx(n);
  while (classes < n) {
    for (int v = 0; v < n; ++v) {
      auto &s = sig[v];
      s.clear();
      for (const auto &[w, lab] : A.adj[v]) s.emplace_back(lab, color[w]);
      std::sort(s.begin(), s.end());
    }
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      if (color[a] != color[b]) return color[a] < color[b];
      return sig[a] < sig[b];
    });
    std::vector<int> next(n);
    int next_classes = 0;
    for (int i = 0; i < n; ++i) {
      const int v = idx[i];
      if (i > 0) {
        const int u = idx[i - 1];
        if (color[u] == color[v] && sig[u] == sig[v]) {
          next[v] = next[u];
          continue;
        }
      }
      next[v] = i;
      ++next_classes;
    }
    color.swap(next);
    if (next_classes == classes) break;
    classes = next_classes;
  }
}

bool are_twins(const Adjacency &A, int u, int v) {
  auto strip = [](const std::vector<std::pair<int, int>> &nb, int drop) {
    std::vector<std::pair<int, int>> out;
    out.reserve(nb.size());
    for (const auto &p : nb)
      if (p.first != drop) out.push_back(p);
    return out;
  };
  return strip(A.adj[u], v) == strip(A.adj[v], u);
}

struct Search {
  const LabeledGraph &g;
  Adjacency A;
  std::vector<std::uint64_t> best_code;
  std::vector<int> best_order;
  int leaves = 0;

  explicit Search(const LabeledGraph &graph) : g(graph), A(graph) {}

  std::vector<std::uint64_t> encode(const std::vector<int> &order) const {
    const int n = static_cast<int>(order.size());
    std::vector<int> pos(n);
    for (int i = 0; i < n; ++i) pos[order[i]] = i;
    std::vector<std::uint64_t> code;
    code.reserve(n + 3 * g.edges.size());
    for (int i = 0; i < n; ++i) code.push_back(g.vertex_labels[order[i]]);
    std::vector<std::array<std::uint64_t, 3>> es;
    es.reserve(g.edges.size());
    for (const auto &e : g.edges) {
      auto a = static_cast<std::uint64_t>(pos[e.u]);
      auto b = static_cast<std::uint64_t>(pos[e.v]);
      if (a > b) std::swap(a, b);
      es.push_back({a, b, static_cast<std::uint64_t>(e.label)});
    }
    std::sort(es.begin(), es.end());
    for (const auto &e : es) code.insert(code.end(), e.begin(), e.end());
    return code;
  }

  void run(std::vector<int> color) {
    refine(A, color);
    const int n = static_cast<int>(color.size());
    // First non-singleton cell by color.
    std::vector<int> cell_size(n, 0);
    for (int c : color) ++cell_size[c];
    int target = -1;
    for (int c = 0; c < n; ++c)
      if (cell_size[c] > 1) {
        target = c;
        break;
      }
    if (target < 0) {
      std::vector<int> order(n);
      for (int v = 0; v < n; ++v) order[color[v]] = v;
      auto code = encode(order);
      if (best_order.empty() || code < best_code) {
        best_code = std::move(code);
        best_order = std::move(order);
      }
      ++leaves;
      return;
    }
    std::vector<int> cell;
    for (int v = 0; v < n; ++v)
      if (color[v] == target) cell.push_back(v);
    std::vector<int> reps;
    for (int v : cell) {
      bool twin = false;
      for (int r : reps)
        if (are_twins(A, r, v)) {
          twin = true;
          break;
        }
      if (!twin) reps.push_back(v);
    }
    for (int v : reps) {
      if (leaves >= kMaxLeaves && !best_order.empty()) return;
      std::vector<int> next = color;
      for (int w : cell)
        if (w != v) next[w] = target + 1;
      run(std::move(next));
    }
  }
};

}  // namespace

LabeledGraph labeled_view(const MolGraph &g) {
  LabeledGraph out;
  out.vertex_labels.reserve(g.num_atoms());
  for (const auto &a : g.atoms()) out.vertex_labels.push_back(atom_label(a));
  out.edges.reserve(g.num_bonds());
  for (const auto &b : g.bonds())
    out.edges.push_back({b.begin, b.end, static_cast<int>(b.order)});
  return out;
}

LabeledGraph labeled_view(const MolGraph &g, std::span<const std::uint64_t> extra) {
  LabeledGraph out = labeled_view(g);
  for (std::size_t i = 0; i < out.vertex_labels.size(); ++i)
    out.vertex_labels[i] |= extra[i] << 16;
  return out;
}

std::vector<int> canonical_order(const LabeledGraph &g) {
  if (g.vertex_labels.empty()) return {};
  Search s(g);
  s.run(initial_colors(g));
  return s.best_order;
}

std::vector<int> canonical_ranks(const MolGraph &g) {
  const auto order = canonical_order(labeled_view(g));
  std::vector<int> rank(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<int>(i);
  return rank;
}

std::string canonical_encoding(const LabeledGraph &g) {
  const auto order = canonical_order(g);
  const int n = static_cast<int>(order.size());
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) pos[order[i]] = i;
  std::string out;
  for (int i = 0; i < n; ++i) {
    out += std::to_string(g.vertex_labels[order[i]]);
    out += ',';
  }
  std::vector<std::array<int, 3>> es;
  for (const auto &e : g.edges) es.push_back({std::min(pos[e.u], pos[e.v]), std::max(pos[e.u], pos[e.v]), e.label});
  std::sort(es.begin(), es.end());
  out += '|';
  for (const auto &e : es) {
    out += std::to_string(e[0]) + '-' + std::to_string(e[1]) + ':' + std::to_string(e[2]) + ';';
  }
  return out;
}

std::string canonical_key(const MolGraph &g) { return canonical_smiles(g, nullptr); }

std::string canonical_smiles(const MolGraph &g, std::vector<int> *emit_order) {
  if (g.empty()) {
    if (emit_order != nullptr) emit_order->clear();
    return {};
  }
  const auto rank = canonical_ranks(g);
  return write_smiles_prioritized(g, rank, emit_order);
}

MolGraph canonical_relabel(const MolGraph &g, std::vector<int> *order) {
  std::vector<int> emit;
  canonical_smiles(g, &emit);
  MolGraph out = g.permuted(emit);
  if (order != nullptr) *order = std::move(emit);
  return out;
}

bool isomorphic(const MolGraph &a, const MolGraph &b) {
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds()) return false;
  return canonical_encoding(labeled_view(a)) == canonical_encoding(labeled_view(b));
}

}  // namespace molrat
