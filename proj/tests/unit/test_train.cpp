//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "decode_tree.hpp"
#include "simplex_oracle.hpp"
#include "molrat/canonical.hpp"
#include "molrat/metrics.hpp"
#include "molrat/smiles.hpp"
#include "molrat/substructure.hpp"
#include "molrat/synthetic.hpp"
#include "molrat/train.hpp"

using namespace molrat;

namespace {

Rationale rationale(const char *smiles, std::vector<int> peripheral) {
  Rationale r;
  r.graph = parse_smiles(smiles);
  r.peripheral = std::move(peripheral);
  return r;
}

PropertySpec constant_property(const std::string &name, double value) {
  auto forest = std::make_shared<ForestModel>(ForestModel({DecisionTree{{-1}, {-1}, {-1}, {value}}}, ForestParams{}));
  return {name, 0.5, forest};
}

PropertySpec bit_property(const std::string &name, int bit) {
  auto forest = std::make_shared<ForestModel>(
      ForestModel({DecisionTree{{bit, -1, -1}, {1, -1, -1}, {2, -1, -1}, {0.0, 0.0, 1.0}}}, ForestParams{}));
  return {name, 0.5, forest};
}

bool has_chlorine(const MolGraph &g) {
  for (const auto &a : g.atoms())
    if (a.element == Element::Cl) return true;
  return false;
}

// Halogen-only vocabulary: every completion tree is finite because added
// atoms cannot grow further.
struct HalogenToy {
  GenModel model{AtomVocab(std::vector<Atom>{{Element::F, 0, false}, {Element::Cl, 0, false}}), {8, 2, 3, 34, 1.0}};
  RationaleVocab vocab;
  HalogenToy() {
    vocab.add(rationale("CC(C)C", {1}));  // one free valence: expand, then type
    vocab.add(rationale("CC", {0}));
    vocab.add(rationale("C=C", {0}));
  }
};

std::vector<molrat::testing::Leaf> leaves_of(const GenModel &m, const Rationale &s, std::span<const double> z) {
  std::vector<molrat::testing::Leaf> leaves;
  molrat::testing::enumerate_completions(Decoder(m, s, z), 1.0, 10, leaves);
  return leaves;
}

std::vector<double> flat_gradient(const GenModel &m) {
  std::vector<double> g;
  for (const auto &[name, t] : m.params().items()) {
    const auto grad = t.grad();
    if (grad.empty())
      g.insert(g.end(), t.size(), 0.0);
    else
      g.insert(g.end(), grad.begin(), grad.end());
  }
  return g;
}

std::vector<MolGraph> toy_corpus(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MolGraph> out;
  for (int i = 0; i < n; ++i) out.push_back(random_molecule(rng, {6, 12, 0.3}));
  return out;
}

}  // namespace

TEST(PretrainPairs, SizeIsUniform) {
  const MolGraph g = parse_smiles("c1ccc(cc1)CC(=O)NCCOCC(C)(C)CCN");
  ASSERT_EQ(g.num_atoms(), 20);
  // The bound fails for about 1% of seeds with a correct sampler.
  Rng rng(2);
  const auto pairs = make_pretrain_pairs(std::vector<MolGraph>{g}, 10, 10000, rng);
  ASSERT_EQ(pairs.size(), 10000u);
  std::vector<int> counts(11, 0);
  for (const auto &p : pairs) {
    const int n = p.rationale.graph.num_atoms();
    ASSERT_GE(n, 1);
    ASSERT_LE(n, 10);
    ++counts[n];
  }
  double chi2 = 0.0;
  for (int s = 1; s <= 10; ++s) chi2 += std::pow(counts[s] - 1000.0, 2) / 1000.0;
  EXPECT_LT(chi2, 21.666);  // 0.99 quantile with 9 degrees of freedom
}

TEST(PretrainPairs, ConnectedContainedAndDecodable) {
  Rng rng(2);
  const auto corpus = toy_corpus(40, 3);
  for (const auto &p : make_pretrain_pairs(corpus, 8, 3, rng)) {
    EXPECT_TRUE(p.rationale.graph.is_connected());
    EXPECT_TRUE(contains_subgraph(p.molecule, p.rationale.graph).has_value());
    EXPECT_EQ(p.trace.rationale_atoms, p.rationale.graph.num_atoms());
    EXPECT_TRUE(isomorphic(p.trace.graph, p.molecule));
    // Every atom that lost a neighbour can grow.
    for (int a = 0; a < p.rationale.graph.num_atoms(); ++a) {
      const int src = p.rationale.source_atoms[a];
      if (p.rationale.graph.degree(a) < p.molecule.degree(src)) {
        EXPECT_TRUE(std::binary_search(p.rationale.peripheral.begin(), p.rationale.peripheral.end(), a));
      }
    }
  }
  for (const auto &p : make_pretrain_pairs(corpus, 1, 2, rng)) EXPECT_EQ(p.rationale.graph.num_atoms(), 1);
  EXPECT_THROW(make_pretrain_pairs(std::vector<MolGraph>{}, 5, 1, rng), Error);
}

TEST(Pretrain, LossDecreasesAndKlWeightZeroDropsKl) {
  const auto corpus = toy_corpus(200, 4);
  Rng rng(5);
  const auto pairs = make_pretrain_pairs(corpus, 10, 1, rng);
  TrainConfig cfg;
  cfg.pretrain_epochs = 10;
  cfg.learning_rate = 3e-3;
  GenModel model(AtomVocab::from_molecules(corpus), {24, 6, 3, 6, 1.0});
  const auto stats = pretrain(model, pairs, cfg);
  ASSERT_EQ(stats.loss.size(), 10u);
  EXPECT_LT(stats.loss.back(), stats.loss.front());

  cfg.kl_weight = 0.0;
  cfg.pretrain_epochs = 2;
  GenModel fresh(AtomVocab::from_molecules(corpus), {24, 6, 3, 6, 1.0});
  const auto zero = pretrain(fresh, std::span(pairs).first(64), cfg);
  for (std::size_t e = 0; e < zero.loss.size(); ++e) {
    EXPECT_GT(zero.kl[e], 0.0);
    EXPECT_NEAR(zero.loss[e], zero.reconstruction[e], 1e-9 * zero.loss[e]);
  }
}

TEST(Pretrain, MemorizesOnePair) {
  const MolGraph g = parse_smiles("CC(=O)NC1CC1");
  const std::vector<int> keep{0, 1, 2};
  Rationale r = make_rationale(g, g.subgraph(keep), keep);
  const std::vector<PretrainPair> pairs{{r, g, canonical_trace(g, r, r.source_atoms)}};
  TrainConfig cfg;
  cfg.pretrain_epochs = 500;
  cfg.learning_rate = 1e-2;
  GenModel model(AtomVocab::from_molecules(std::vector<MolGraph>{g}), {16, 4, 3, 7, 1.0});
  const auto stats = pretrain(model, pairs, cfg);
  EXPECT_LT(stats.reconstruction.back(), 0.1);
}

TEST(Pretrain, DeterministicUnderSeed) {
  const auto corpus = toy_corpus(30, 8);
  Rng r1(9), r2(9);
  const auto p1 = make_pretrain_pairs(corpus, 6, 1, r1), p2 = make_pretrain_pairs(corpus, 6, 1, r2);
  TrainConfig cfg;
  cfg.pretrain_epochs = 2;
  GenModel a(AtomVocab::from_molecules(corpus), {12, 4, 3, 1, 1.0});
  GenModel b(AtomVocab::from_molecules(corpus), {12, 4, 3, 1, 1.0});
  EXPECT_EQ(pretrain(a, p1, cfg).loss, pretrain(b, p2, cfg).loss);
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto x = a.params().items()[i].second.values(), y = b.params().items()[i].second.values();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST(Pretrain, ValidCompletionsAfterTraining) {
  const auto corpus = toy_corpus(300, 10);
  Rng rng(11);
  const auto pairs = make_pretrain_pairs(corpus, 10, 1, rng);
  TrainConfig cfg;
  cfg.pretrain_epochs = 8;
  cfg.learning_rate = 3e-3;
  GenModel model(AtomVocab::from_molecules(corpus), {24, 6, 3, 12, 1.0});
  pretrain(model, pairs, cfg);
  int valid = 0;
  for (int i = 0; i < 500; ++i) {
    const Rationale &s = pairs[i % pairs.size()].rationale;
    Rng sample(Rng::derive(13, i));
    try {
      const MolGraph g = complete(model, s, sample_prior(6, sample), sample);
      valid += valence_ok(g) && g.is_connected();
    } catch (const TruncationError &) {
    }
  }
  EXPECT_GE(valid, 350);
}

TEST(Finetune, SampleAccountingAndTrivialReward) {
  HalogenToy toy;
  TrainConfig cfg;
  cfg.samples_per_rationale = 1;
  cfg.iterations = 1;
  const std::vector<PropertySpec> always{constant_property("p", 1.0)};
  const auto one = finetune(toy.model, toy.vocab, always, cfg);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].sampled, toy.vocab.size());

  cfg.samples_per_rationale = 8;
  cfg.iterations = 3;
  for (const auto &st : finetune(toy.model, toy.vocab, always, cfg)) {
    EXPECT_EQ(st.success, 1.0);
    EXPECT_TRUE(st.updated);
  }
  const std::vector<PropertySpec> never{constant_property("p", 0.0)};
  EXPECT_THROW(finetune(toy.model, toy.vocab, never, cfg), Error);
}

TEST(Finetune, ThreadCountDoesNotChangeSamples) {
  HalogenToy toy;
  const auto a = sample_completions(toy.model, toy.vocab, 20, 5, 1, 10, 1);
  const auto b = sample_completions(toy.model, toy.vocab, 20, 5, 1, 10, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].z, b[i].z);
    EXPECT_EQ(write_smiles(a[i].graph), write_smiles(b[i].graph));
  }
}

TEST(Finetune, FilteredLikelihoodIsReinforceWithIndicatorReward) {
  HalogenToy toy;
  RationaleVocab one;
  one.add(toy.vocab[0]);
  const auto samples = sample_completions(toy.model, one, 64, 17, 0, 10);
  std::vector<Completion> kept;
  for (const auto &c : samples)
    if (has_chlorine(c.graph)) kept.push_back(c);
  ASSERT_FALSE(kept.empty());
  ASSERT_LT(kept.size(), samples.size());

  toy.model.params().zero_grad();
  nn::backward(completion_nll(toy.model, one, kept));
  const auto filtered = flat_gradient(toy.model);

  // Sum over all samples of reward * grad(-log p), reward in {0, 1}.
  std::vector<double> reinforce(filtered.size(), 0.0);
  for (const auto &c : samples) {
    const double reward = has_chlorine(c.graph) ? 1.0 : 0.0;
    toy.model.params().zero_grad();
    nn::backward(completion_nll(toy.model, one, std::span(&c, 1)));
    const auto g = flat_gradient(toy.model);
    for (std::size_t i = 0; i < g.size(); ++i) reinforce[i] += reward * g[i];
  }
  for (std::size_t i = 0; i < filtered.size(); ++i) EXPECT_NEAR(filtered[i], reinforce[i], 1e-9);

  // Score-function identity on the enumerated outcomes for one latent.
  const std::vector<double> z{0.3, -0.2};
  const auto leaves = leaves_of(toy.model, one[0], z);
  ASSERT_EQ(leaves.size(), 3u);  // stop, F, Cl
  std::vector<nn::Tensor> terms;
  std::vector<double> score(filtered.size(), 0.0);
  for (const auto &leaf : leaves) {
    const Completion c{0, leaf.graph, z, false};
    const nn::Tensor nll = completion_nll(toy.model, one, std::span(&c, 1));
    const double reward = has_chlorine(leaf.graph) ? 1.0 : 0.0;
    terms.push_back(nn::scale(nn::exp(nn::scale(nll, -1.0)), reward));
    toy.model.params().zero_grad();
    nn::backward(nll);
    const auto g = flat_gradient(toy.model);
    for (std::size_t i = 0; i < g.size(); ++i) score[i] -= leaf.probability * reward * g[i];
  }
  toy.model.params().zero_grad();
  nn::backward(nn::sum(nn::concat_rows(terms)));
  const auto expected_reward = flat_gradient(toy.model);
  for (std::size_t i = 0; i < score.size(); ++i) EXPECT_NEAR(score[i], expected_reward[i], 1e-9);
}

TEST(RationaleDistribution, ClosedFormExamples) {
  const auto p = closed_form_distribution(std::vector<double>{1.0, 0.9}, 0.02);
  const double e5 = std::exp(5.0);
  EXPECT_NEAR(p[0], e5 / (1.0 + e5), 1e-12);
  EXPECT_NEAR(p[0], 0.99331, 1e-5);
  EXPECT_NEAR(p[1], 0.00669, 1e-5);
  for (double v : closed_form_distribution(std::vector<double>{0.4, 0.4, 0.4}, 0.02)) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  for (double v : closed_form_distribution(std::vector<double>{1.0, 0.0, 0.5}, 1e6)) EXPECT_NEAR(v, 1.0 / 3.0, 1e-6);
  const auto tiny = closed_form_distribution(std::vector<double>{1.0, 0.0}, 1e-4);
  EXPECT_GT(tiny[1], 0.0);
  EXPECT_NEAR(tiny[0] + tiny[1], 1.0, 1e-12);
  EXPECT_THROW(closed_form_distribution(std::vector<double>{1.0}, 0.0), ConfigError);
}

TEST(RationaleDistribution, ClosedFormMaximizesTheRegularizedObjective) {
  HalogenToy toy;
  const std::vector<double> z{0.0, 0.0};
  std::vector<double> reward;
  for (const auto &s : toy.vocab.items()) {
    double r = 0.0, mass = 0.0;
    for (const auto &leaf : leaves_of(toy.model, s, z)) {
      mass += leaf.probability;
      r += has_chlorine(leaf.graph) ? leaf.probability : 0.0;
    }
    EXPECT_NEAR(mass, 1.0, 1e-12);
    reward.push_back(r);
  }
  for (double lambda : {0.02, 0.1, 0.5}) {
    const auto closed = closed_form_distribution(reward, lambda);
    const auto oracle = molrat::testing::simplex_oracle(reward, lambda);
    double tv = 0.0;
    for (std::size_t k = 0; k < closed.size(); ++k) tv += 0.5 * std::abs(closed[k] - oracle[k]);
    EXPECT_LT(tv, 1e-3) << "lambda " << lambda;
  }
}

TEST(RationaleDistribution, EstimatedFromTwentySamples) {
  HalogenToy toy;
  // The chlorine atom's round-0 bit separates the toy outcomes.
  const auto cl = morgan_fingerprint(parse_smiles("CCl"));
  const auto no = morgan_fingerprint(parse_smiles("CC(C)(C)F"));
  int bit = -1;
  for (int b : cl.on_bits())
    if (!no.test(b) && !morgan_fingerprint(parse_smiles("C=C")).test(b)) bit = b;
  ASSERT_GE(bit, 0);
  const std::vector<PropertySpec> props{bit_property("cl", bit)};
  TrainConfig cfg;
  const auto d = rationale_distribution(toy.model, toy.vocab, props, cfg);
  ASSERT_EQ(d.size(), 3u);
  double total = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    EXPECT_GT(d.probability[k], 0.0);
    const double scaled = d.reward[k] * 20.0;
    EXPECT_NEAR(scaled, std::round(scaled), 1e-9);
    total += d.probability[k];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(d.probability, closed_form_distribution(d.reward, 0.02));
  const auto back = RationaleDistribution::from_json(d.to_json());
  EXPECT_EQ(back.keys, d.keys);
  EXPECT_EQ(back.probability, d.probability);
}

TEST(SampleMolecules, FrequenciesFollowTheDistribution) {
  HalogenToy toy;
  RationaleDistribution d;
  for (const auto &r : toy.vocab.items()) d.keys.push_back(r.key());
  d.reward = {0, 0, 0};
  d.probability = {0.5, 0.3, 0.2};
  const auto batch = sample_molecules(toy.model, toy.vocab, d, 10000, 19, 10);
  ASSERT_EQ(batch.molecules.size(), 10000u);
  std::vector<int> counts(3, 0);
  for (const auto &m : batch.molecules) {
    ++counts[m.rationale];
    EXPECT_TRUE(contains_subgraph(m.graph, toy.vocab[m.rationale].graph).has_value());
  }
  for (int k = 0; k < 3; ++k) {
    const double p = d.probability[k];
    EXPECT_LE(std::abs(counts[k] - 10000 * p), 3.0 * std::sqrt(10000 * p * (1 - p)));
  }

  d.probability = {0.0, 1.0, 0.0};
  for (const auto &m : sample_molecules(toy.model, toy.vocab, d, 200, 20, 10).molecules) EXPECT_EQ(m.rationale, 1);
  const auto none = sample_molecules(toy.model, toy.vocab, d, 0, 21, 10);
  EXPECT_TRUE(none.molecules.empty());
  EXPECT_EQ(none.attempts, 0u);
}

TEST(SampleMolecules, TruncationBudget) {
  HalogenToy toy;
  RationaleDistribution d;
  for (const auto &r : toy.vocab.items()) d.keys.push_back(r.key());
  d.reward = {0, 0, 0};
  d.probability = {0.0, 1.0, 0.0};
  // "CC" can add up to three atoms; a one-step budget truncates often.
  const auto batch = sample_molecules(toy.model, toy.vocab, d, 50, 22, 1);
  EXPECT_LE(batch.attempts, 500u);
  EXPECT_EQ(batch.attempts, batch.molecules.size() + batch.truncated);
  for (const auto &m : batch.molecules) EXPECT_LE(m.graph.num_atoms(), 3);
}
