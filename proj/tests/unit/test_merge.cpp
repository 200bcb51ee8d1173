//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "molrat/canonical.hpp"
#include "molrat/extract.hpp"
#include "molrat/merge.hpp"
#include "molrat/rng.hpp"
#include "molrat/smiles.hpp"
#include "molrat/substructure.hpp"
#include "molrat/synthetic.hpp"

#include "mcs_oracle.hpp"

using namespace molrat;
using namespace molrat::testing;

namespace {

void expect_valid_mapping(const MolGraph &a, const MolGraph &b, const AtomMapping &m) {
  std::set<int> ua, ub;
  for (const auto &[x, y] : m) {
    EXPECT_EQ(a.atom(x), b.atom(y));
    EXPECT_TRUE(ua.insert(x).second);
    EXPECT_TRUE(ub.insert(y).second);
  }
  for (const auto &[x1, y1] : m)
    for (const auto &[x2, y2] : m) {
      const int e = a.bond_between(x1, x2), f = b.bond_between(y1, y2);
      if (e >= 0 && f >= 0) {
        EXPECT_EQ(a.bond(e).order, b.bond(f).order);
      }
    }
}

Rationale as_rationale(const char *smiles) {
  const MolGraph g = parse_smiles(smiles);
  std::vector<int> all(g.num_atoms());
  std::iota(all.begin(), all.end(), 0);
  return canonicalize(g, all);
}

}  // namespace

TEST(Mcs, Examples) {
  const MolGraph g = parse_smiles("c1ccccc1C(=O)N");
  const auto self = max_common_substructure(g, g);
  ASSERT_FALSE(self.empty());
  EXPECT_EQ(self[0].size(), static_cast<std::size_t>(g.num_atoms()));

  const auto one = max_common_substructure(parse_smiles("CC"), parse_smiles("C"));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].size(), 1u);

  const MolGraph ring = parse_smiles("C1CC1"), chain = parse_smiles("CCC");
  EXPECT_EQ(brute_force_mcs_size(ring, chain), 3);
  const auto path = max_common_substructure(ring, chain);
  ASSERT_FALSE(path.empty());
  for (const auto &m : path) {
    EXPECT_EQ(m.size(), 3u);
    int common = 0;
    for (const auto &[x1, y1] : m)
      for (const auto &[x2, y2] : m)
        if (x1 < x2 && ring.bond_between(x1, x2) >= 0 && chain.bond_between(y1, y2) >= 0) ++common;
    EXPECT_EQ(common, 2);
  }

  EXPECT_TRUE(max_common_substructure(parse_smiles("CC"), parse_smiles("OO")).empty());
  EXPECT_THROW(max_common_substructure(parse_smiles(std::string(21, 'C')), parse_smiles("C")), ResourceError);
}

TEST(Mcs, SizeMatchesBruteForceUpToEightAtoms) {
  Rng rng(44);
  for (int t = 0; t < 250; ++t) {
    const MolGraph a = random_small(rng, 8), b = random_small(rng, 8);
    const auto found = max_common_substructure(a, b);
    const int expected = brute_force_mcs_size(a, b);
    const int got = found.empty() ? 0 : static_cast<int>(found[0].size());
    ASSERT_EQ(got, expected) << write_smiles(a) << " vs " << write_smiles(b);
    for (const auto &m : found) {
      EXPECT_EQ(m.size(), static_cast<std::size_t>(expected));
      expect_valid_mapping(a, b, m);
    }
  }
}

TEST(Merge, SelfMergeContainsInput) {
  const Rationale x = as_rationale("c1ccccc1C(=O)N");
  bool found = false;
  for (const auto &r : merge_pair(x, x)) found = found || r.key() == x.key();
  EXPECT_TRUE(found);
}

TEST(Merge, DisjointLabelsGiveTwoFragments) {
  const auto out = merge_pair(as_rationale("CC"), as_rationale("OO"));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].num_fragments(), 2);
  EXPECT_EQ(out[0].graph.num_atoms(), 4);
  EXPECT_EQ(out[0].peripheral.size(), 4u);
}

TEST(Merge, ValenceViolatingSuperpositionsDropped) {
  EXPECT_TRUE(merge_pair(as_rationale("CC(C)(C)C"), as_rationale("CC(=O)C")).empty());
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const Rationale a = canonicalize(random_small(rng, 10), std::vector<int>{0});
    const Rationale b = canonicalize(random_small(rng, 10), std::vector<int>{0});
    const auto mappings = max_common_substructure(a.graph, b.graph);
    if (mappings.empty()) continue;
    std::set<std::string> expected;
    for (const auto &m : mappings) {
      const MolGraph u = superpose(a.graph, b.graph, m);
      if (valence_ok(u)) expected.insert(canonical_key(u));
    }
    std::set<std::string> got;
    for (const auto &r : merge_pair(a, b)) {
      EXPECT_TRUE(valence_ok(r.graph));
      EXPECT_TRUE(contains_subgraph(r.graph, a.graph).has_value());
      EXPECT_TRUE(contains_subgraph(r.graph, b.graph).has_value());
      EXPECT_LE(r.graph.num_atoms(), a.graph.num_atoms() + b.graph.num_atoms());
      got.insert(r.key());
    }
    EXPECT_EQ(got, expected);
  }
}

TEST(Merge, SymmetricUpToIsomorphism) {
  Rng rng(6);
  for (int t = 0; t < 150; ++t) {
    const Rationale a = canonicalize(random_small(rng, 10), std::vector<int>{});
    const Rationale b = canonicalize(random_small(rng, 10), std::vector<int>{});
    std::set<std::string> ab, ba;
    for (const auto &r : merge_pair(a, b)) ab.insert(r.key());
    for (const auto &r : merge_pair(b, a)) ba.insert(r.key());
    EXPECT_EQ(ab, ba) << a.key() << " + " << b.key();
  }
}

TEST(Merge, PeripheralUnionUnderIdentification) {
  const MolGraph a = parse_smiles("CCO"), b = parse_smiles("OCC");
  const Rationale ra = canonicalize(a, std::vector<int>{0});
  const Rationale rb = canonicalize(b, std::vector<int>{0});
  for (const auto &r : merge_pair(ra, rb)) {
    ASSERT_EQ(r.graph.num_atoms(), 3);
    // Both inputs mark an end atom, so the merge marks one or both ends.
    EXPECT_GE(r.peripheral.size(), 1u);
    for (int p : r.peripheral) EXPECT_EQ(r.graph.degree(p), 1);
  }
}

namespace {

PropertySpec motif_property(const std::string &name, const char *motif_smiles) {
  const MolGraph motif = parse_smiles(motif_smiles);
  Rng rng(static_cast<std::uint64_t>(name.size()) + 77);
  const auto corpus = synthetic_corpus(rng, 600, {motif}, 0.3, {});
  ForestParams fp;
  fp.num_trees = 40;
  fp.seed = 3;
  return {name, 0.5, std::make_shared<ForestModel>(train_forest(corpus.molecules, corpus.labels[0], fp))};
}

RationaleVocab vocab_for(const PropertySpec &prop, const std::vector<MolGraph> &positives) {
  return build_vocab(positives, prop, {});
}

}  // namespace

TEST(MultiVocab, SharedMotifMergesAndRescoresOnBoth) {
  const char *motif = "c1ccccc1C(=O)N";
  const PropertySpec p1 = motif_property("a", motif), p2 = motif_property("bb", motif);
  Rng rng(8);
  std::vector<MolGraph> positives;
  for (int i = 0; i < 15; ++i) positives.push_back(planted_molecule(rng, {}, parse_smiles(motif)));
  const std::vector<RationaleVocab> vocabs{vocab_for(p1, positives), vocab_for(p2, positives)};
  const std::vector<PropertySpec> props{p1, p2};
  MergeStats stats;
  const RationaleVocab merged = build_multi_vocab(vocabs, props, {5, 0}, {}, &stats);
  ASSERT_FALSE(merged.empty());
  for (const auto &r : merged.items()) {
    EXPECT_GE(p1.score(r.graph), 0.5);
    EXPECT_GE(p2.score(r.graph), 0.5);
    EXPECT_EQ(r.scores.size(), 2u);
  }
}

TEST(MultiVocab, ConflictingMotifsLeaveOnlyDisjointPairs) {
  // Every fragment of one vocabulary is nitrogen-free and every fragment of
  // the other carries only nitrogen, so no atom type is shared.
  Rationale x = as_rationale("C1CCCCC1"), y = as_rationale("NN");
  auto always = std::make_shared<ForestModel>(ForestModel({DecisionTree{{-1}, {-1}, {-1}, {1.0}}}, ForestParams{}));
  const std::vector<PropertySpec> props{{"p", 0.5, always}, {"q", 0.5, always}};
  RationaleVocab v1({"p"}), v2({"q"});
  x.scores["p"] = 1.0;
  y.scores["q"] = 1.0;
  v1.add(x);
  v2.add(y);
  const std::vector<RationaleVocab> vocabs{v1, v2};
  const RationaleVocab merged = build_multi_vocab(vocabs, props, {});
  ASSERT_EQ(merged.size(), 1u);
  EXPECT_EQ(merged[0].num_fragments(), 2);
}
