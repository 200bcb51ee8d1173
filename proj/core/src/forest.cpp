//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "molrat/parallel.hpp"
#include "molrat/rng.hpp"

namespace molrat {

namespace {

constexpr int kForestFormatVersion = 1;

class TreeBuilder {
public:
  TreeBuilder(const std::vector<std::vector<int>> &on_bits, std::span<const int> labels, int width,
              int max_depth, std::uint64_t seed)
      : on_bits_(on_bits), labels_(labels), max_depth_(max_depth), rng_(seed),
        ones_(width, 0), pos_ones_(width, 0) {
    tries_ = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(width)))));
  }

  DecisionTree build() {
    std::vector<int> pos, neg;
    for (std::size_t i = 0; i < labels_.size(); ++i) (labels_[i] ? pos : neg).push_back(static_cast<int>(i));
    std::vector<int> sample;
    sample.reserve(labels_.size());
    for (std::size_t i = 0; i < pos.size(); ++i) sample.push_back(pos[rng_.below(static_cast<int>(pos.size()))]);
    for (std::size_t i = 0; i < neg.size(); ++i) sample.push_back(neg[rng_.below(static_cast<int>(neg.size()))]);
    grow(sample, 0);
    return std::move(tree_);
  }

private:
  int add_leaf(double value) {
    tree_.feature.push_back(-1);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.push_back(value);
    return static_cast<int>(tree_.feature.size()) - 1;
  }

  int grow(std::vector<int> &sample, int depth) {
    const int n = static_cast<int>(sample.size());
    int npos = 0;
    for (int i : sample) npos += labels_[i];
    const int node = add_leaf(n == 0 ? 0.0 : static_cast<double>(npos) / n);
    if (depth >= max_depth_ || npos == 0 || npos == n) return node;

    touched_.clear();
    for (int i : sample)
      for (int bit : on_bits_[i]) {
        if (ones_[bit] == 0) touched_.push_back(bit);
        ++ones_[bit];
        pos_ones_[bit] += labels_[i];
      }
    std::vector<int> varying;
    for (int bit : touched_)
      if (ones_[bit] < n) varying.push_back(bit);
    std::sort(varying.begin(), varying.end());

    int best = -1;
    double best_impurity = 0.0;
    const int k = std::min<int>(tries_, static_cast<int>(varying.size()));
    for (int t = 0; t < k; ++t) {
      const int j = t + rng_.below(static_cast<int>(varying.size()) - t);
      std::swap(varying[t], varying[j]);
      const int bit = varying[t];
      const double n1 = ones_[bit], p1 = pos_ones_[bit];
      const double n0 = n - n1, p0 = npos - p1;
      // Weighted Gini of the children, up to a constant factor.
      const double impurity = p1 * (n1 - p1) / n1 + p0 * (n0 - p0) / n0;
      if (best < 0 || impurity < best_impurity) {
        best = bit;
        best_impurity = impurity;
      }
    }
    for (int bit : touched_) ones_[bit] = pos_ones_[bit] = 0;
    if (best < 0) return node;

    std::vector<int> left, right;
    for (int i : sample) {
      const bool on = std::binary_search(on_bits_[i].begin(), on_bits_[i].end(), best);
      (on ? right : left).push_back(i);
    }
    std::vector<int>().swap(sample);
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.feature[node] = best;
    tree_.left[node] = l;
    tree_.right[node] = r;
    return node;
  }

  const std::vector<std::vector<int>> &on_bits_;
  std::span<const int> labels_;
  int max_depth_;
  Rng rng_;
  int tries_ = 1;
  std::vector<int> ones_;
  std::vector<int> pos_ones_;
  std::vector<int> touched_;
  DecisionTree tree_;
};

void check_labels(std::span<const int> labels) {
  if (labels.size() < 2) throw Error("forest: need at least 2 examples");
  bool has_pos = false, has_neg = false;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error("forest: labels must be 0 or 1");
    (y ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw Error("forest: both classes must be present");
}

}  // namespace

double DecisionTree::predict(const BitFingerprint &x) const {
  int node = 0;
  while (feature[node] >= 0) node = x.test(feature[node]) ? right[node] : left[node];
  return value[node];
}

ForestModel::ForestModel(std::vector<DecisionTree> trees, ForestParams params)
    : trees_(std::move(trees)), params_(params) {}

double ForestModel::predict(const BitFingerprint &x) const {
  if (trees_.empty()) throw Error("forest: model has no trees");
  if (x.width() != params_.fingerprint_width)
    throw Error("forest: fingerprint width " + std::to_string(x.width()) + " does not match model width " +
                std::to_string(params_.fingerprint_width));
  double sum = 0.0;
  for (const auto &t : trees_) sum += t.predict(x);
  return sum / static_cast<double>(trees_.size());
}

BitFingerprint ForestModel::featurize(const MolGraph &g) const {
  return morgan_fingerprint(g, params_.fingerprint_radius, params_.fingerprint_width);
}

double ForestModel::predict(const MolGraph &g) const { return predict(featurize(g)); }

nlohmann::json ForestModel::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto &t : trees_)
    trees.push_back({{"feature", t.feature}, {"left", t.left}, {"right", t.right}, {"value", t.value}});
  return {{"format", "molrat.forest"},
          {"version", kForestFormatVersion},
          {"num_trees", params_.num_trees},
          {"max_depth", params_.max_depth},
          {"seed", params_.seed},
          {"fingerprint_radius", params_.fingerprint_radius},
          {"fingerprint_width", params_.fingerprint_width},
          {"trees", trees}};
}

ForestModel ForestModel::from_json(const nlohmann::json &j) {
  if (j.value("format", "") != "molrat.forest") throw ArtifactError("not a forest checkpoint");
  if (j.at("version").get<int>() != kForestFormatVersion)
    throw ArtifactError("unsupported forest checkpoint version " + j.at("version").dump());
  ForestParams p;
  p.num_trees = j.at("num_trees").get<int>();
  p.max_depth = j.at("max_depth").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.fingerprint_radius = j.at("fingerprint_radius").get<int>();
  p.fingerprint_width = j.at("fingerprint_width").get<int>();
  std::vector<DecisionTree> trees;
  for (const auto &t : j.at("trees")) {
    DecisionTree tree{t.at("feature").get<std::vector<int>>(), t.at("left").get<std::vector<int>>(),
                      t.at("right").get<std::vector<int>>(), t.at("value").get<std::vector<double>>()};
    const std::size_t n = tree.feature.size();
    if (n == 0 || tree.left.size() != n || tree.right.size() != n || tree.value.size() != n)
      throw ArtifactError("forest checkpoint: inconsistent tree arrays");
    for (std::size_t i = 0; i < n; ++i) {
      if (tree.feature[i] >= p.fingerprint_width) throw ArtifactError("forest checkpoint: split bit out of range");
      if (tree.feature[i] >= 0 && (tree.left[i] <= static_cast<int>(i) || tree.right[i] <= static_cast<int>(i) ||
                                   tree.left[i] >= static_cast<int>(n) || tree.right[i] >= static_cast<int>(n)))
        throw ArtifactError("forest checkpoint: bad child index");
      if (tree.value[i] < 0.0 || tree.value[i] > 1.0) throw ArtifactError("forest checkpoint: leaf value outside [0,1]");
    }
    trees.push_back(std::move(tree));
  }
  return ForestModel(std::move(trees), p);
}

ForestModel train_forest(std::span<const BitFingerprint> x, std::span<const int> labels,
                         const ForestParams &params) {
  check_labels(labels);
  if (x.size() != labels.size()) throw Error("forest: feature and label counts differ");
  if (params.num_trees < 1 || params.max_depth < 0) throw Error("forest: bad tree count or depth");
  std::vector<std::vector<int>> on_bits(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].width() != params.fingerprint_width) throw Error("forest: fingerprint width mismatch");
    on_bits[i] = x[i].on_bits();
  }
  std::vector<DecisionTree> trees(params.num_trees);
  parallel_for(
      trees.size(),
      [&](std::size_t t) {
        trees[t] = TreeBuilder(on_bits, labels, params.fingerprint_width, params.max_depth,
                               Rng::derive(params.seed, t))
                       .build();
      },
      params.threads);
  return ForestModel(std::move(trees), params);
}

ForestModel train_forest(std::span<const MolGraph> molecules, std::span<const int> labels,
                         const ForestParams &params) {
  std::vector<BitFingerprint> x;
  x.reserve(molecules.size());
  for (const auto &g : molecules)
    x.push_back(morgan_fingerprint(g, params.fingerprint_radius, params.fingerprint_width));
  return train_forest(x, labels, params);
}

double predict_score(const ForestModel &m, const MolGraph &g) { return m.predict(g); }

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_labels(labels);
  if (scores.size() != labels.size()) throw Error("auroc: score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) pos_rank_sum += midrank;
    i = j;
  }
  for (int y : labels) npos += y;
  const double p = static_cast<double>(npos), q = static_cast<double>(n - npos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double auroc(const ForestModel &m, std::span<const MolGraph> molecules, std::span<const int> labels) {
  std::vector<double> scores;
  scores.reserve(molecules.size());
  for (const auto &g : molecules) scores.push_back(m.predict(g));
  return auroc(scores, labels);
}

LabelTable read_label_csv(std::istream &in) {
  auto split = [](std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  LabelTable table;
  std::string line;
  if (!std::getline(in, line)) throw ArtifactError("label CSV is empty");
  auto header = split(line);
  if (header.size() < 2 || header[0] != "smiles") throw ArtifactError("label CSV header must start with 'smiles,'");
  table.property_names.assign(header.begin() + 1, header.end());
  table.labels.assign(table.property_names.size(), {});
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw ArtifactError("label CSV row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                          " cells, expected " + std::to_string(header.size()));
    table.smiles.push_back(cells[0]);
    for (std::size_t p = 0; p + 1 < cells.size(); ++p) {
      if (cells[p + 1] != "0" && cells[p + 1] != "1")
        throw ArtifactError("label CSV row " + std::to_string(row) + ": label must be 0 or 1");
      table.labels[p].push_back(cells[p + 1] == "1");
    }
  }
  return table;
}

void write_label_csv(std::ostream &out, const LabelTable &table) {
  out << "smiles";
  for (const auto &n : table.property_names) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < table.smiles.size(); ++r) {
    out << table.smiles[r];
    for (const auto &col : table.labels) out << ',' << col[r];
    out << '\n';
  }
}

}  // namespace molrat
