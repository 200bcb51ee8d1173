//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/extract.hpp"

#include <cmath>
#include <tuple>

#include "molrat/canonical.hpp"
#include "molrat/parallel.hpp"

namespace molrat {

int select_action(std::span<const EdgeStats> edges, double c_puct) {
  if (edges.empty()) throw Error("select_action: state has no legal deletions");
  int total = 0;
  for (const auto &e : edges) total += e.visits;
  const double root = std::sqrt(static_cast<double>(total));
  int best = 0;
  double best_value = 0.0;
  for (int i = 0; i < static_cast<int>(edges.size()); ++i) {
    const auto &e = edges[i];
    const double value = e.mean_value() + c_puct * e.prior * root / (1.0 + e.visits);
    if (i == 0 || value > best_value || (value == best_value && e.prior > edges[best].prior)) {
      best = i;
      best_value = value;
    }
  }
  return best;
}

void backup(std::span<EdgeStats *const> path, double reward) {
  for (EdgeStats *e : path) {
    e->visits += 1;
    e->total_value += reward;
  }
}

RationaleSearch::RationaleSearch(MolGraph root, ScoreFn score, double threshold, MctsParams params)
    : score_(std::move(score)), threshold_(threshold), params_(params) {
  if (!root.is_connected()) throw GraphError("rationale search: molecule must be connected");
  std::vector<int> origin(root.num_atoms());
  for (int i = 0; i < root.num_atoms(); ++i) origin[i] = i;
  intern(std::move(root), std::move(origin));
}

int RationaleSearch::intern(MolGraph g, std::vector<int> origin) {
  std::string key = canonical_key(g);
  if (auto it = by_key_.find(key); it != by_key_.end()) return it->second;
  SearchNode node;
  node.score = score_(g);
  node.state = std::move(g);
  node.origin = std::move(origin);
  node.key = key;
  nodes_.push_back(std::move(node));
  is_found_.push_back(0);
  const int id = static_cast<int>(nodes_.size()) - 1;
  by_key_.emplace(std::move(key), id);
  return id;
}

void RationaleSearch::expand(int id) {
  if (nodes_[id].expanded) return;
  auto actions = peripheral_deletions(nodes_[id].state);
  std::vector<EdgeStats> edges(actions.size());
  std::vector<int> children(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    std::vector<int> kept;
    MolGraph child = apply_deletion(nodes_[id].state, actions[i], &kept);
    std::vector<int> origin;
    origin.reserve(kept.size());
    for (int k : kept) origin.push_back(nodes_[id].origin[k]);
    children[i] = intern(std::move(child), std::move(origin));
    edges[i].prior = nodes_[children[i]].score;
  }
  SearchNode &node = nodes_[id];
  node.actions = std::move(actions);
  node.edges = std::move(edges);
  node.children = std::move(children);
  node.expanded = true;
}

std::vector<int> RationaleSearch::eligible(int id) {
  expand(id);
  const SearchNode &node = nodes_[id];
  std::vector<int> out;
  const bool small = node.state.num_atoms() < params_.max_atoms;
  for (int i = 0; i < static_cast<int>(node.edges.size()); ++i)
    if (!small || node.edges[i].prior >= threshold_) out.push_back(i);
  return out;
}

bool RationaleSearch::is_terminal(int id) { return eligible(id).empty(); }

std::vector<int> RationaleSearch::iterate() {
  std::vector<int> path{0};
  std::vector<Step> steps;
  int first_small = -1;
  for (;;) {
    const int cur = path.back();
    if (first_small < 0 && nodes_[cur].state.num_atoms() < params_.max_atoms) first_small = cur;
    const auto options = eligible(cur);
    if (options.empty()) break;
    std::vector<EdgeStats> subset;
    subset.reserve(options.size());
    for (int i : options) subset.push_back(nodes_[cur].edges[i]);
    const int action = options[select_action(subset, params_.c_puct)];
    nodes_[cur].visits += 1;
    steps.push_back({cur, action});
    path.push_back(nodes_[cur].children[action]);
  }
  const int leaf = path.back();
  std::vector<EdgeStats *> edges;
  for (const auto &s : steps) edges.push_back(&nodes_[s.node].edges[s.action]);
  backup(edges, nodes_[leaf].score);

  for (int id : {first_small, leaf}) {
    if (id < 0 || is_found_[id]) continue;
    if (nodes_[id].score >= threshold_ && nodes_[id].state.num_atoms() < params_.max_atoms) {
      is_found_[id] = 1;
      found_.push_back(id);
    }
  }
  return path;
}

void RationaleSearch::run() {
  for (int i = 0; i < params_.iterations; ++i) iterate();
}

std::vector<Rationale> extract_rationales(const MolGraph &g, const ScoreFn &score, double threshold,
                                          const std::string &property_name, const MctsParams &params) {
  RationaleSearch search(g, score, threshold, params);
  search.run();
  std::vector<Rationale> out;
  for (int id : search.found()) {
    const SearchNode &node = search.node(id);
    Rationale r = make_rationale(g, node.state, node.origin);
    r.scores[property_name] = node.score;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<Rationale> extract_rationales(const MolGraph &g, const PropertySpec &prop, const MctsParams &params) {
  const ForestModel &model = *prop.predictor;
  return extract_rationales(
      g, [&model](const MolGraph &s) { return model.predict(s); }, prop.threshold, prop.name, params);
}

const Rationale *best_rationale(std::span<const Rationale> found, const std::string &property_name) {
  const Rationale *best = nullptr;
  std::tuple<int, double, std::string> best_rank;
  for (const auto &r : found) {
    const auto it = r.scores.find(property_name);
    const double s = it == r.scores.end() ? 0.0 : it->second;
    std::tuple<int, double, std::string> rank{r.graph.num_atoms(), -s, r.key()};
    if (best == nullptr || rank < best_rank) {
      best = &r;
      best_rank = std::move(rank);
    }
  }
  return best;
}

RationaleVocab build_vocab(std::span<const MolGraph> positives, const PropertySpec &prop, const MctsParams &params,
                           VocabStats *stats, unsigned threads) {
  if (positives.empty()) throw Error("build_vocab: empty positive set");
  std::vector<std::vector<Rationale>> per_molecule(positives.size());
  std::vector<char> positive(positives.size(), 0);
  parallel_for(
      positives.size(),
      [&](std::size_t i) {
        if (prop.score(positives[i]) < prop.threshold) return;
        positive[i] = 1;
        per_molecule[i] = extract_rationales(positives[i], prop, params);
      },
      threads);
  VocabStats local;
  RationaleVocab vocab({prop.name});
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (!positive[i]) {
      ++local.skipped_negative;
      continue;
    }
    if (per_molecule[i].empty()) ++local.molecules_without_rationale;
    for (auto &r : per_molecule[i]) vocab.add(std::move(r));
  }
  if (local.skipped_negative == static_cast<int>(positives.size()))
    throw Error("build_vocab: no input molecule is predicted positive for " + prop.name);
  if (stats != nullptr) *stats = local;
  return vocab;
}

}  // namespace molrat
