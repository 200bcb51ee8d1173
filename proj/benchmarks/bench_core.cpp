//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include <benchmark/benchmark.h>

#include <memory>

#include "molrat/canonical.hpp"
#include "molrat/deletion.hpp"
#include "molrat/extract.hpp"
#include "molrat/fingerprint.hpp"
#include "molrat/forest.hpp"
#include "molrat/genmodel.hpp"
#include "molrat/merge.hpp"
#include "molrat/rationale.hpp"
#include "molrat/rng.hpp"
#include "molrat/smiles.hpp"
#include "molrat/synthetic.hpp"
#include "molrat/tensor.hpp"

using namespace molrat;

namespace {

std::vector<MolGraph> molecules(int n, int min_atoms, int max_atoms, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<MolGraph> out;
  for (int i = 0; i < n; ++i) out.push_back(random_molecule(rng, {min_atoms, max_atoms, 0.3}));
  return out;
}

const MolGraph &drug_like() {
  static const MolGraph g = parse_smiles("CC(C)Cc1ccc(cc1)C(C)C(=O)NCCN1CCOCC1");
  return g;
}

Rationale whole(const MolGraph &g, std::vector<int> atoms) {
  return make_rationale(g, g.subgraph(atoms), atoms);
}

}  // namespace

static void BM_ParseSmiles(benchmark::State &state) {
  const std::string smi = write_smiles(drug_like());
  for (auto _ : state) benchmark::DoNotOptimize(parse_smiles(smi));
}
BENCHMARK(BM_ParseSmiles);

static void BM_CanonicalKey(benchmark::State &state) {
  const auto mols = molecules(64, 20, 25);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(canonical_key(mols[i++ % mols.size()]));
}
BENCHMARK(BM_CanonicalKey);

static void BM_MorganFingerprint(benchmark::State &state) {
  const auto mols = molecules(64, 20, 25);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(morgan_fingerprint(mols[i++ % mols.size()]));
}
BENCHMARK(BM_MorganFingerprint);

static void BM_PeripheralDeletions(benchmark::State &state) {
  for (auto _ : state) benchmark::DoNotOptimize(peripheral_deletions(drug_like()));
}
BENCHMARK(BM_PeripheralDeletions);

static void BM_MaxCommonSubstructure(benchmark::State &state) {
  const auto mols = molecules(2, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(max_common_substructure(mols[0], mols[1]));
}
BENCHMARK(BM_MaxCommonSubstructure)->Arg(8)->Arg(12)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_ForestPredict(benchmark::State &state) {
  Rng rng(5);
  const auto corpus = synthetic_corpus(rng, 400, {parse_smiles("CC(=O)O")}, 0.5, {});
  const ForestModel model = train_forest(corpus.molecules, corpus.labels[0], ForestParams{50, 12, 1});
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(corpus.molecules[i++ % corpus.molecules.size()]));
}
BENCHMARK(BM_ForestPredict);

static void BM_ExtractRationales(benchmark::State &state) {
  auto forest = std::make_shared<ForestModel>(ForestModel({DecisionTree{{-1}, {-1}, {-1}, {0.9}}}, ForestParams{}));
  const PropertySpec prop{"p", 0.5, forest};
  for (auto _ : state) benchmark::DoNotOptimize(extract_rationales(drug_like(), prop, MctsParams{}));
}
BENCHMARK(BM_ExtractRationales)->Unit(benchmark::kMillisecond);

static void BM_Complete(benchmark::State &state) {
  const auto corpus = molecules(50, 8, 25);
  const GenModel model(AtomVocab::from_molecules(corpus), {static_cast<int>(state.range(0)), 16, 3, 1, 1.0});
  const Rationale start = whole(drug_like(), {4, 5, 6, 7, 8, 9});
  Rng rng(2);
  for (auto _ : state) {
    const auto z = sample_prior(model.config().latent, rng);
    try {
      benchmark::DoNotOptimize(complete(model, start, z, rng, {30, false}));
    } catch (const TruncationError &) {
    }
  }
}
BENCHMARK(BM_Complete)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_TraceNllBackward(benchmark::State &state) {
  const auto corpus = molecules(50, 8, 25);
  GenModel model(AtomVocab::from_molecules(corpus), {static_cast<int>(state.range(0)), 16, 3, 1, 1.0});
  const MolGraph &g = drug_like();
  const Rationale start = whole(g, {4, 5, 6, 7, 8, 9});
  const std::vector<DecodeTrace> traces{canonical_trace(g, start, start.source_atoms)};
  const nn::Tensor z = nn::Tensor::zeros(1, 16);
  for (auto _ : state) {
    model.params().zero_grad();
    const nn::Tensor loss = trace_nll(model, traces, z);
    nn::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_TraceNllBackward)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
