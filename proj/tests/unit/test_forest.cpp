//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <sstream>

#include "molrat/forest.hpp"
#include "molrat/rng.hpp"
#include "molrat/smiles.hpp"
#include "molrat/synthetic.hpp"

using namespace molrat;

namespace {

DecisionTree leaf(double v) { return DecisionTree{{-1}, {-1}, {-1}, {v}}; }

// Fraction of (positive, negative) pairs ranked correctly, ties counted half.
double pairwise_auc(const std::vector<double> &s, const std::vector<int> &y) {
  double good = 0, total = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[i] || y[j]) continue;
      total += 1;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return good / total;
}

}  // namespace

TEST(Forest, SingleSeparatingBit) {
  std::vector<BitFingerprint> x;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    BitFingerprint fp(64, 0);
    fp.set(1);
    if (i % 3 == 0) fp.set(5);
    x.push_back(fp);
    y.push_back(i % 3 == 0);
  }
  ForestParams p;
  p.num_trees = 1;
  p.fingerprint_width = 64;
  const ForestModel m = train_forest(x, y, p);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(m.predict(x[i]) >= 0.5, y[i] == 1);
}

TEST(Forest, EnsembleMean) {
  ForestParams p;
  p.fingerprint_width = 64;
  BitFingerprint x(64, 2);
  EXPECT_EQ(ForestModel({leaf(1), leaf(1)}, p).predict(x), 1.0);
  EXPECT_EQ(ForestModel({leaf(0), leaf(0), leaf(0)}, p).predict(x), 0.0);
  EXPECT_EQ(ForestModel({leaf(1), leaf(1), leaf(1), leaf(0)}, p).predict(x), 0.75);
}

TEST(Forest, PlantedMotifHeldOutAuroc) {
  Rng rng(100);
  const auto corpus = synthetic_corpus(rng, 2000, {parse_smiles("c1ccccc1C(=O)N")}, 0.2, {});
  std::vector<MolGraph> train(corpus.molecules.begin(), corpus.molecules.begin() + 1500);
  std::vector<MolGraph> test(corpus.molecules.begin() + 1500, corpus.molecules.end());
  std::vector<int> ytrain(corpus.labels[0].begin(), corpus.labels[0].begin() + 1500);
  std::vector<int> ytest(corpus.labels[0].begin() + 1500, corpus.labels[0].end());
  ForestParams p;
  p.seed = 7;
  const ForestModel m = train_forest(train, ytrain, p);
  const double a = auroc(m, test, ytest);
  EXPECT_GE(a, 0.95);
  for (const auto &g : test) {
    const double s = predict_score(m, g);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Forest, DeterministicBytesAndJsonRoundTrip) {
  Rng rng(3);
  const auto corpus = synthetic_corpus(rng, 300, {parse_smiles("C(=O)O")}, 0.3, {});
  ForestParams p;
  p.num_trees = 12;
  p.seed = 99;
  const std::string a = train_forest(corpus.molecules, corpus.labels[0], p).to_json().dump();
  const std::string b = train_forest(corpus.molecules, corpus.labels[0], p).to_json().dump();
  EXPECT_EQ(a, b);
  p.threads = 4;
  EXPECT_EQ(train_forest(corpus.molecules, corpus.labels[0], p).to_json().dump(), a);
  const ForestModel back = ForestModel::from_json(nlohmann::json::parse(a));
  EXPECT_EQ(back.to_json().dump(), a);
  auto bad = nlohmann::json::parse(a);
  bad["version"] = 99;
  EXPECT_THROW(ForestModel::from_json(bad), ArtifactError);
}

TEST(Forest, DuplicatedTreeMovesScoreByAtMostOneOverCount) {
  Rng rng(4);
  const auto corpus = synthetic_corpus(rng, 300, {parse_smiles("C(=O)O")}, 0.3, {});
  ForestParams p;
  p.num_trees = 10;
  const ForestModel m = train_forest(corpus.molecules, corpus.labels[0], p);
  auto trees = m.trees();
  trees.push_back(trees[3]);
  const ForestModel bigger(trees, p);
  for (const auto &g : corpus.molecules)
    EXPECT_LE(std::abs(bigger.predict(g) - m.predict(g)), 1.0 / p.num_trees + 1e-12);
}

TEST(Forest, RejectsSingleClass) {
  std::vector<BitFingerprint> x(3, BitFingerprint(64, 0));
  std::vector<int> y{1, 1, 1};
  ForestParams p;
  p.fingerprint_width = 64;
  EXPECT_THROW(train_forest(x, y, p), Error);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), Error);
}

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  const std::vector<int> y{1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(pairwise_auc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(auroc(s, y), 0.75);
  Rng rng(8);
  std::vector<double> rs;
  std::vector<int> ry;
  for (int i = 0; i < 4000; ++i) {
    rs.push_back(rng.uniform());
    ry.push_back(rng.bernoulli(0.3));
  }
  EXPECT_NEAR(auroc(rs, ry), 0.5, 0.05);
}

TEST(Auroc, MidranksMatchPairwiseCount) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 30; ++i) {
      s.push_back(rng.below(5) / 4.0);
      y.push_back(i < 2 ? i : rng.bernoulli(0.5));
    }
    EXPECT_NEAR(auroc(s, y), pairwise_auc(s, y), 1e-12);
  }
}

TEST(LabelCsv, RoundTrip) {
  std::istringstream in("smiles,a,b\nCCO,1,0\r\nc1ccccc1,0,1\n");
  const LabelTable t = read_label_csv(in);
  ASSERT_EQ(t.property_names, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.smiles.size(), 2u);
  EXPECT_EQ(t.labels[1][1], 1);
  std::ostringstream out;
  write_label_csv(out, t);
  EXPECT_EQ(out.str(), "smiles,a,b\nCCO,1,0\nc1ccccc1,0,1\n");
  std::istringstream bad("smiles,a\nCC,2\n");
  EXPECT_THROW(read_label_csv(bad), ArtifactError);
  std::istringstream bad_header("mol,a\nCC,1\n");
  EXPECT_THROW(read_label_csv(bad_header), ArtifactError);
}
