//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "gradcheck.hpp"
#include "molrat/rng.hpp"
#include "molrat/tensor.hpp"

using namespace molrat;
using namespace molrat::nn;

namespace {

std::vector<double> randn(Rng &rng, std::size_t n, double s = 1.0) {
  std::vector<double> v(n);
  for (double &x : v) x = s * rng.normal();
  return v;
}

Tensor random_tensor(Rng &rng, int r, int c) {
  return Tensor(r, c, randn(rng, static_cast<std::size_t>(r) * c));
}

std::vector<double> copy(const Tensor &t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Tensor, ForwardExamples) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  const Tensor sm = softmax(Tensor::row({0.0, 0.0}));
  EXPECT_DOUBLE_EQ(sm.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(sm.at(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(gaussian_kl(Tensor::row({0.0, 0.0}), Tensor::row({0.0, 0.0})).item(), 0.0);
  // 0.5 (1 + e^2 - 2 - 1) for mu = 1, log sigma = 1.
  EXPECT_NEAR(gaussian_kl(Tensor::scalar(1.0), Tensor::scalar(1.0)).item(), 0.5 * (std::exp(2.0) - 2.0), 1e-12);
  const Tensor m = matmul(Tensor(2, 2, {1, 2, 3, 4}), Tensor(2, 1, {5, 6}));
  EXPECT_EQ(copy(m), (std::vector<double>{17, 39}));
  EXPECT_EQ(copy(row_sum(Tensor(2, 2, {1, 2, 3, 4}))), (std::vector<double>{3, 7}));
  EXPECT_EQ(copy(column_sum(Tensor(2, 2, {1, 2, 3, 4}))), (std::vector<double>{4, 6}));
  EXPECT_EQ(copy(group_sum_rows(Tensor(3, 1, {1, 2, 4}), std::vector<int>{1, -1, 1}, 2)),
            (std::vector<double>{0, 5}));
  EXPECT_EQ(copy(gather_rows(Tensor(2, 1, {7, 8}), std::vector<int>{1, 1, 0})), (std::vector<double>{8, 8, 7}));
  const Tensor parts[] = {Tensor(2, 1, {1, 2}), Tensor(2, 1, {3, 4})};
  EXPECT_EQ(copy(concat_cols(parts)), (std::vector<double>{1, 3, 2, 4}));
  EXPECT_EQ(copy(concat_rows(parts)), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_NEAR(bce_with_logits(Tensor::scalar(0.0), std::vector<double>{1.0}).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Tensor::row({0.0, 0.0, 0.0}), std::vector<int>{2}).item(), std::log(3.0), 1e-15);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  Rng rng(1);
  const Tensor s = softmax(Tensor(4, 7, randn(rng, 28, 30.0)));
  for (int r = 0; r < 4; ++r) {
    double z = 0.0;
    for (int c = 0; c < 7; ++c) z += s.at(r, c);
    EXPECT_NEAR(z, 1.0, 1e-12);
  }
}

TEST(Tensor, MaskedLogSoftmax) {
  const std::vector<char> mask{1, 0, 1};
  const Tensor l = log_softmax(Tensor::row({1.0, 50.0, 1.0}), mask);
  EXPECT_NEAR(l.at(0, 0), std::log(0.5), 1e-15);
  EXPECT_EQ(l.at(0, 1), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(log_softmax(Tensor::row({1.0}), std::vector<char>{0}), NumericError);

  Tensor x(1, 3, {0.3, -0.2, 0.9}, true);
  backward(element(log_softmax(x, mask), 0, 2));
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_NEAR(x.grad()[0] + x.grad()[2], 0.0, 1e-15);
}

TEST(Tensor, ShapeErrorsNameBothShapes) {
  try {
    matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3));
    FAIL();
  } catch (const NumericError &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2x3)"), std::string::npos);
    EXPECT_NE(msg.find("vs (2x3)"), std::string::npos);
  }
  EXPECT_THROW(add(Tensor::zeros(1, 2), Tensor::zeros(2, 1)), NumericError);
  EXPECT_THROW(add_row(Tensor::zeros(2, 2), Tensor::zeros(1, 3)), NumericError);
  EXPECT_THROW(Tensor(2, 2, {1.0}), NumericError);
}

TEST(Backward, AnalyticExamples) {
  Tensor x(1, 1, {0.0}, true);
  backward(sigmoid(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);

  Tensor y(1, 1, {3.0}, true);
  const Tensor sq = mul(y, y);
  backward(sq);
  EXPECT_DOUBLE_EQ(y.grad()[0], 6.0);
  backward(sq);
  EXPECT_DOUBLE_EQ(y.grad()[0], 12.0);
  y.zero_grad();
  backward(sq);
  EXPECT_DOUBLE_EQ(y.grad()[0], 6.0);

  EXPECT_THROW(backward(Tensor::zeros(1, 2, true)), NumericError);
}

TEST(Backward, NoGradRecordsNothing) {
  Tensor w(2, 2, {1, 2, 3, 4}, true);
  NoGradGuard guard;
  EXPECT_FALSE(grad_enabled());
  EXPECT_FALSE(matmul(w, w).requires_grad());
}

TEST(Backward, TwoLayerReluNetworkMatchesFiniteDifferences) {
  Rng rng(7);
  ParamStore store;
  store.add("w1", 5, 8, randn(rng, 40, 0.5));
  store.add("b1", 1, 8, randn(rng, 8, 0.1));
  store.add("w2", 8, 3, randn(rng, 24, 0.5));
  store.add("b2", 1, 3, randn(rng, 3, 0.1));
  const Tensor input = random_tensor(rng, 6, 5);
  const std::vector<int> target{0, 2, 1, 1, 0, 2};
  auto loss = [&] {
    const Tensor h = relu(add_row(matmul(input, store.at("w1")), store.at("b1")));
    return cross_entropy(add_row(matmul(h, store.at("w2")), store.at("b2")), target);
  };
  const auto r = molrat::testing::gradient_check(store, loss);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
  EXPECT_EQ(r.checked, store.num_values());
}

TEST(Backward, EveryOperationMatchesFiniteDifferences) {
  Rng rng(8);
  ParamStore store;
  store.add("a", 3, 4, randn(rng, 12));
  store.add("b", 3, 4, randn(rng, 12));
  store.add("row", 1, 4, randn(rng, 4));
  store.add("mu", 1, 3, randn(rng, 3));
  store.add("ls", 1, 3, randn(rng, 3, 0.3));
  const std::vector<int> gather{2, 0, 2, 1};
  const std::vector<int> group{1, 0, 1, -1};
  const std::vector<char> mask{1, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 0};
  const std::vector<double> bce_target{1.0, 0.0, 1.0};
  const Tensor weights = random_tensor(rng, 2, 4);
  const Tensor column = Tensor(4, 1, {1, -1, 2, 0.5});
  auto loss = [&] {
    const Tensor a = store.at("a"), b = store.at("b");
    std::vector<Tensor> terms;
    terms.push_back(sum(mul(sigmoid(a), exp(scale(b, 0.3)))));
    terms.push_back(sum(sub(softmax(a), relu(b))));
    terms.push_back(element(log_softmax(add_row(a, store.at("row")), mask), 1, 3));
    const Tensor cat[] = {a, b};
    terms.push_back(sum(mul(concat_cols(cat), concat_cols(cat))));
    terms.push_back(sum(mul(concat_rows(cat), concat_rows(cat))));
    terms.push_back(sum(row_sum(mul(group_sum_rows(gather_rows(a, gather), group, 2), weights))));
    terms.push_back(sum(column_sum(matmul(matmul(a, column), store.at("row")))));
    terms.push_back(gaussian_kl(store.at("mu"), store.at("ls")));
    terms.push_back(cross_entropy(b, std::vector<int>{3, 0, 1}));
    terms.push_back(cross_entropy(a, std::vector<int>{0, 3, 1}, mask));
    terms.push_back(bce_with_logits(row_sum(a), bce_target));
    Tensor total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    return total;
  };
  const auto r = molrat::testing::gradient_check(store, loss);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
}

TEST(Tensor, SoftmaxCrossEntropyTranslationInvariant) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const std::vector<double> v = randn(rng, 6, 3.0);
    std::vector<double> shifted = v;
    const double c = 100.0 * rng.normal();
    for (double &x : shifted) x += c;
    const std::vector<int> target{static_cast<int>(rng.below(6))};
    EXPECT_NEAR(cross_entropy(Tensor::row(v), target).item(), cross_entropy(Tensor::row(shifted), target).item(),
                1e-9);
    const Tensor a = softmax(Tensor::row(v)), b = softmax(Tensor::row(shifted));
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(a.at(0, i), b.at(0, i), 1e-9);
  }
}

TEST(Tensor, OperationsDoNotMutateInputs) {
  Rng rng(10);
  Tensor a(3, 3, randn(rng, 9), true), b(3, 3, randn(rng, 9), true);
  const auto a0 = copy(a), b0 = copy(b);
  const Tensor parts[] = {a, b};
  const Tensor out =
      add(sum(matmul(softmax(a), relu(b))), add(sum(concat_cols(parts)), gaussian_kl(a, scale(b, 0.1))));
  backward(out);
  EXPECT_EQ(copy(a), a0);
  EXPECT_EQ(copy(b), b0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore store;
  Tensor p = store.add("p", 1, 3, {1.0, -2.0, 0.5});
  backward(sum(scale(p, 0.0)));
  Adam opt;
  opt.step(store);
  EXPECT_EQ(copy(p), (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore store;
  Tensor p = store.add("p", 1, 1, {2.0});
  backward(p);
  Adam opt({0.1});
  opt.step(store);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.item(), 2.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
  auto run = [] {
    Rng rng(3);
    ParamStore store;
    store.add("w", 4, 2, randn(rng, 8));
    const Tensor x = random_tensor(rng, 5, 4);
    Adam opt({0.05});
    for (int i = 0; i < 20; ++i) {
      store.zero_grad();
      backward(cross_entropy(matmul(x, store.at("w")), std::vector<int>{0, 1, 1, 0, 1}));
      opt.step(store);
    }
    std::ostringstream out;
    write_params(out, store);
    return out.str();
  };
  EXPECT_EQ(run(), run());

  ParamStore store;
  store.add("fine", 1, 1, {1.0});
  Tensor bad = store.add("broken", 1, 1, {1.0});
  backward(mul(bad, Tensor::scalar(std::numeric_limits<double>::quiet_NaN())));
  Adam opt;
  try {
    opt.step(store);
    FAIL();
  } catch (const NumericError &e) {
    EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos);
  }
  EXPECT_EQ(bad.item(), 1.0);
}

TEST(Params, BinaryRoundTrip) {
  Rng rng(4);
  ParamStore store;
  store.add("enc.w", 3, 5, randn(rng, 15));
  store.add("bias", 1, 5, randn(rng, 5));
  std::ostringstream out;
  write_params(out, store);
  const std::string bytes = out.str();
  EXPECT_EQ(bytes.substr(0, 4), "MRPT");
  std::istringstream in(bytes);
  const ParamStore back = read_params(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(copy(back.at("enc.w")), copy(store.at("enc.w")));
  EXPECT_EQ(back.at("bias").rows(), 1);
  EXPECT_EQ(params_manifest(back), params_manifest(store));

  std::istringstream bad("MRPX");
  EXPECT_THROW(read_params(bad), ArtifactError);
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_params(truncated), ArtifactError);

  const ParamStore cloned = store.clone();
  EXPECT_EQ(copy(cloned.at("bias")), copy(store.at("bias")));
  Tensor handle = cloned.at("bias");
  handle.mutable_values()[0] += 1.0;
  EXPECT_NE(copy(cloned.at("bias")), copy(store.at("bias")));
}
