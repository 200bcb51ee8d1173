//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>

#include "molrat/canonical.hpp"
#include "molrat/deletion.hpp"
#include "molrat/rings.hpp"
#include "molrat/rng.hpp"
#include "molrat/smiles.hpp"
#include "molrat/substructure.hpp"
#include "molrat/synthetic.hpp"

#include "graph_oracles.hpp"

using namespace molrat;
using namespace molrat::testing;

namespace {


// Brute-force isomorphism over all permutations (n <= 8).
bool brute_isomorphic(const MolGraph &a, const MolGraph &b) {
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds()) return false;
  std::vector<int> p(a.num_atoms());
  std::iota(p.begin(), p.end(), 0);
  do {
    bool ok = true;
    for (int i = 0; i < a.num_atoms() && ok; ++i) ok = a.atom(i) == b.atom(p[i]);
    for (int e = 0; e < a.num_bonds() && ok; ++e) {
      const Bond &bd = a.bond(e);
      const int f = b.bond_between(p[bd.begin], p[bd.end]);
      ok = f >= 0 && b.bond(f).order == bd.order;
    }
    if (ok) return true;
  } while (std::next_permutation(p.begin(), p.end()));
  return false;
}

// Brute-force subgraph containment over all injective maps.
bool brute_contains(const MolGraph &t, const MolGraph &p) {
  std::vector<int> map(p.num_atoms(), -1);
  std::vector<char> used(t.num_atoms(), 0);
  std::function<bool(int)> go = [&](int i) {
    if (i == p.num_atoms()) {
      for (const auto &bd : p.bonds()) {
        const int f = t.bond_between(map[bd.begin], map[bd.end]);
        if (f < 0 || t.bond(f).order != bd.order) return false;
      }
      return true;
    }
    for (int v = 0; v < t.num_atoms(); ++v) {
      if (used[v] || !(t.atom(v) == p.atom(i))) continue;
      used[v] = 1;
      map[i] = v;
      if (go(i + 1)) return true;
      used[v] = 0;
    }
    map[i] = -1;
    return false;
  };
  return go(0);
}

}  // namespace

TEST(Smiles, ParsesChain) {
  const MolGraph g = parse_smiles("CCO");
  ASSERT_EQ(g.num_atoms(), 3);
  EXPECT_EQ(g.num_bonds(), 2);
  EXPECT_EQ(g.atom(2).element, Element::O);
  for (const auto &b : g.bonds()) EXPECT_EQ(b.order, BondOrder::Single);
}

TEST(Smiles, ParsesCyclopropane) {
  const MolGraph g = parse_smiles("C1CC1");
  EXPECT_EQ(g.num_atoms(), 3);
  EXPECT_EQ(g.num_bonds(), 3);
  EXPECT_EQ(find_sssr(g).size(), 1u);
}

TEST(Smiles, ParsesAromaticBracketAndBranches) {
  const MolGraph g = parse_smiles("c1ccccc1C(=O)[O-]");
  EXPECT_EQ(g.num_atoms(), 9);
  EXPECT_TRUE(g.atom(0).aromatic);
  EXPECT_EQ(g.bond(0).order, BondOrder::Aromatic);
  EXPECT_EQ(g.atom(8).charge, -1);
  const MolGraph h = parse_smiles("C%12CC%12Cl");
  EXPECT_EQ(h.num_bonds(), 4);
  EXPECT_EQ(h.atom(3).element, Element::Cl);
}

TEST(Smiles, ReportsErrors) {
  try {
    parse_smiles("C1CC");
    FAIL();
  } catch (const ParseError &e) {
    EXPECT_NE(std::string(e.what()).find("unclosed ring closure 1"), std::string::npos);
  }
  EXPECT_THROW(parse_smiles("C(C"), ParseError);
  EXPECT_THROW(parse_smiles("CC)"), ParseError);
  EXPECT_THROW(parse_smiles("CXC"), ParseError);
  EXPECT_THROW(parse_smiles("C(=O)(=O)=C"), ParseError);
  EXPECT_THROW(parse_smiles("F/C=C/F"), ParseError);
  EXPECT_THROW(parse_smiles("[13CH4]"), ParseError);
  EXPECT_THROW(parse_smiles("C[C@H](N)O"), ParseError);
  EXPECT_THROW(parse_smiles("[CH5]"), ParseError);
  try {
    parse_smiles("CCQ");
    FAIL();
  } catch (const ParseError &e) {
    EXPECT_EQ(e.position(), 2u);
  }
}

TEST(Smiles, WritesSimpleCases) {
  EXPECT_EQ(write_smiles(parse_smiles("C")), "C");
  const MolGraph ring = parse_smiles(write_smiles(parse_smiles("C1CC1")));
  EXPECT_EQ(ring.num_atoms(), 3);
  EXPECT_EQ(find_sssr(ring).size(), 1u);
  const MolGraph benzene = parse_smiles(write_smiles(parse_smiles("c1ccccc1")));
  EXPECT_EQ(benzene.num_atoms(), 6);
  for (const auto &a : benzene.atoms()) EXPECT_TRUE(a.aromatic);
}

TEST(Smiles, RoundTripAndRandomRenderingsOnCorpus) {
  Rng rng(11);
  SyntheticParams params;
  for (int i = 0; i < 300; ++i) {
    const MolGraph g = random_molecule(rng, params);
    const std::string key = canonical_key(g);
    const MolGraph back = parse_smiles(write_smiles(g));
    EXPECT_TRUE(isomorphic(g, back));
    EXPECT_EQ(canonical_key(back), key);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const std::string text = write_smiles_random(g, s * 7919 + i);
      EXPECT_EQ(canonical_key(parse_smiles(text)), key) << text;
    }
  }
}

TEST(Canonical, KeyExamples) {
  EXPECT_EQ(canonical_key(parse_smiles("CCO")), canonical_key(parse_smiles("OCC")));
  EXPECT_NE(canonical_key(parse_smiles("CCO")), canonical_key(parse_smiles("CCN")));
  EXPECT_NE(canonical_key(parse_smiles("C1CC1")), canonical_key(parse_smiles("CCC")));
  EXPECT_EQ(canonical_key(parse_smiles("c1ccncc1")), canonical_key(parse_smiles("n1ccccc1")));
}

TEST(Canonical, KeyEqualityMatchesBruteForceIsomorphism) {
  Rng rng(5);
  std::vector<MolGraph> graphs;
  for (int i = 0; i < 120; ++i) graphs.push_back(random_cyclic_graph(rng, 6));
  for (std::size_t i = 0; i < graphs.size(); ++i)
    for (std::size_t j = i; j < graphs.size(); ++j) {
      const bool same = canonical_key(graphs[i]) == canonical_key(graphs[j]);
      ASSERT_EQ(same, brute_isomorphic(graphs[i], graphs[j]));
    }
}

TEST(Canonical, PermutationInvariant) {
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const MolGraph g = random_molecule(rng, {});
    std::vector<int> order(g.num_atoms());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    EXPECT_EQ(canonical_key(g), canonical_key(g.permuted(order)));
  }
}

TEST(Rings, SssrOfFusedSystems) {
  EXPECT_EQ(find_sssr(parse_smiles("c1ccc2ccccc2c1")).size(), 2u);
  EXPECT_EQ(find_sssr(parse_smiles("C1CC2CCC1C2")).size(), 2u);
  EXPECT_EQ(find_sssr(parse_smiles("CCCC")).size(), 0u);
  for (const auto &r : find_sssr(parse_smiles("C1CCC2(C1)CCC2"))) EXPECT_GE(r.atoms.size(), 4u);
}

TEST(Deletion, Examples) {
  const MolGraph propane = parse_smiles("CCC");
  const auto dp = peripheral_deletions(propane);
  ASSERT_EQ(dp.size(), 2u);
  for (const auto &d : dp) EXPECT_EQ(apply_deletion(propane, d).num_atoms(), 2);

  EXPECT_TRUE(peripheral_deletions(parse_smiles("c1ccccc1")).empty());

  const MolGraph mcp = parse_smiles("CC1CC1");
  const auto dm = peripheral_deletions(mcp);
  ASSERT_EQ(dm.size(), 2u);
  EXPECT_EQ(dm[0].kind, Deletion::Kind::PeripheralBond);
  EXPECT_EQ(canonical_key(apply_deletion(mcp, dm[0])), canonical_key(parse_smiles("C1CC1")));
  EXPECT_EQ(dm[1].kind, Deletion::Kind::PeripheralRing);
  // Ring atoms with an outside neighbour stay, so the methyl carbon keeps its anchor.
  EXPECT_EQ(apply_deletion(mcp, dm[1]).num_atoms(), 2);

  EXPECT_THROW(peripheral_deletions(parse_smiles("C.C")), GraphError);
  Deletion stale{Deletion::Kind::PeripheralBond, {7}, {0}};
  EXPECT_THROW(apply_deletion(propane, stale), GraphError);
}

TEST(Deletion, MatchesExhaustiveOracle) {
  Rng rng(21);
  std::vector<MolGraph> graphs;
  for (const char *s : {"c1ccc2ccccc2c1", "C1Cc2ccccc2C1", "C1CCC2CCCCC2C1", "C1CCC2(C1)CCC2",
                        "C1CC2CCC1C2", "c1ccccc1-c1ccccc1", "CC1CC1", "OC1CCN(C)CC1", "C1CC1C1CC1"})
    graphs.push_back(parse_smiles(s));
  for (int i = 0; i < 600; ++i) graphs.push_back(random_cyclic_graph(rng, 12));
  SyntheticParams small{6, 12, 0.4};
  for (int i = 0; i < 200; ++i) graphs.push_back(random_molecule(rng, small));
  int compared = 0;
  for (const auto &g : graphs) {
    ASSERT_LE(g.num_atoms(), 12);
    const auto oracle = deletion_oracle(g);
    if (!oracle) continue;
    std::set<DeletionKey> got;
    for (const auto &d : peripheral_deletions(g)) got.insert(key_of(d));
    ASSERT_EQ(got, *oracle) << write_smiles(g);
    ++compared;
  }
  EXPECT_GT(compared, 700);
}

TEST(Deletion, SoundOverGeneratedCorpus) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const MolGraph g = random_molecule(rng, {});
    for (const auto &d : peripheral_deletions(g)) {
      const MolGraph r = apply_deletion(g, d);
      EXPECT_TRUE(r.is_connected());
      EXPECT_TRUE(valence_ok(r));
      EXPECT_GT(r.num_atoms(), 0);
      EXPECT_LT(r.num_atoms(), g.num_atoms());
      if (d.kind == Deletion::Kind::PeripheralBond) {
        ASSERT_EQ(d.removed_bonds.size(), 1u);
        EXPECT_NE(g.bond(d.removed_bonds[0]).order, BondOrder::Aromatic);
        EXPECT_EQ(d.removed_atoms.size(), 1u);
      }
    }
  }
}

TEST(Substructure, Examples) {
  EXPECT_TRUE(contains_subgraph(parse_smiles("CCO"), parse_smiles("C")).has_value());
  EXPECT_FALSE(contains_subgraph(parse_smiles("CCC"), parse_smiles("C1CC1")).has_value());
  Rng rng(8);
  const MolGraph motif = parse_smiles("c1ccccc1C(=O)O");
  for (int i = 0; i < 50; ++i) {
    const MolGraph g = planted_molecule(rng, {}, motif);
    const auto map = contains_subgraph(g, motif);
    ASSERT_TRUE(map.has_value());
    std::set<int> image(map->begin(), map->end());
    EXPECT_EQ(image.size(), static_cast<std::size_t>(motif.num_atoms()));
  }
}

TEST(Substructure, MatchesBruteForce) {
  Rng rng(12);
  for (int i = 0; i < 400; ++i) {
    const MolGraph t = random_cyclic_graph(rng, 8);
    const MolGraph p = random_cyclic_graph(rng, 4);
    ASSERT_EQ(contains_subgraph(t, p).has_value(), brute_contains(t, p));
  }
}

TEST(Substructure, RejectsOversizedInputs) {
  std::string big(61, 'C');
  EXPECT_THROW(contains_subgraph(parse_smiles(big), parse_smiles("C")), ResourceError);
}

TEST(Synthetic, CorpusLabelsFollowContainment) {
  Rng rng(4);
  const std::vector<MolGraph> motifs = {parse_smiles("C(=O)O"), parse_smiles("c1ccncc1")};
  const auto corpus = synthetic_corpus(rng, 200, motifs, 0.3, {});
  ASSERT_EQ(corpus.labels.size(), 2u);
  int pos = 0;
  for (std::size_t i = 0; i < corpus.molecules.size(); ++i) {
    const auto &g = corpus.molecules[i];
    EXPECT_GE(g.num_atoms(), 1);
    EXPECT_LE(g.num_atoms(), 25);
    EXPECT_TRUE(g.is_connected());
    for (std::size_t p = 0; p < motifs.size(); ++p)
      EXPECT_EQ(corpus.labels[p][i] == 1, brute_contains(g, motifs[p]));
    pos += corpus.labels[0][i];
  }
  EXPECT_GT(pos, 30);
}

TEST(Canonical, RelabelMatchesParsedKeyAtomForAtom) {
  Rng rng(14);
  std::vector<MolGraph> graphs;
  for (int i = 0; i < 200; ++i) graphs.push_back(random_molecule(rng, {}));
  graphs.push_back(parse_smiles("CC.c1ccccc1.O"));
  graphs.push_back(parse_smiles("C[N+](C)(C)C.[O-]c1ccccc1"));
  for (const auto &g : graphs) {
    const MolGraph relabeled = canonical_relabel(g);
    const MolGraph parsed = parse_smiles(canonical_key(g));
    ASSERT_EQ(parsed.num_atoms(), relabeled.num_atoms());
    ASSERT_EQ(parsed.num_bonds(), relabeled.num_bonds());
    for (int a = 0; a < parsed.num_atoms(); ++a) ASSERT_EQ(parsed.atom(a), relabeled.atom(a));
    for (const auto &bd : relabeled.bonds()) {
      const int f = parsed.bond_between(bd.begin, bd.end);
      ASSERT_GE(f, 0);
      EXPECT_EQ(parsed.bond(f).order, bd.order);
    }
  }
}
