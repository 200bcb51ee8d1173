//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molrat/error.hpp"

namespace molrat::nn {

namespace detail {
struct Node;
}

/// Dense row-major matrix of doubles with reverse-mode gradient tracking.
/// Copies share the underlying node; operations never modify their inputs.
class Tensor {
public:
  Tensor() = default;
  Tensor(int rows, int cols, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  int rows() const;
  int cols() const;
  std::size_t size() const;
  std::string shape_string() const;

  std::span<const double> values() const;
  double at(int r, int c) const;
  double item() const;

  /// Empty until a backward pass reaches this tensor.
  std::span<const double> grad() const;
  bool requires_grad() const;
  void zero_grad();

  /// Writable storage for leaves (parameters updated by an optimizer).
  std::span<double> mutable_values();

private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct Access;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

bool grad_enabled();

/// Reverse accumulation from a 1x1 loss. Leaf gradients accumulate across
/// calls; intermediate gradients are recomputed each call.
void backward(const Tensor &loss);

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, double s);
/// a (m x n) plus the row vector b (1 x n) on every row.
Tensor add_row(const Tensor &a, const Tensor &b);
Tensor relu(const Tensor &a);
Tensor sigmoid(const Tensor &a);
Tensor exp(const Tensor &a);

/// Row-wise softmax.
Tensor softmax(const Tensor &a);
/// Row-wise log-softmax. Entries with mask 0 get probability zero (value
/// -inf) and receive no gradient; each row needs one unmasked entry.
Tensor log_softmax(const Tensor &a, std::span<const char> mask = {});

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
/// Rows of a at the given indices (repeats allowed).
Tensor gather_rows(const Tensor &a, std::span<const int> index);
/// out[g] = sum of rows i with group[i] == g; rows with group -1 are dropped.
Tensor group_sum_rows(const Tensor &a, std::span<const int> group, int num_groups);
/// m x 1 sums of each row.
Tensor row_sum(const Tensor &a);
/// 1 x n sums over rows.
Tensor column_sum(const Tensor &a);
Tensor sum(const Tensor &a);
Tensor element(const Tensor &a, int r, int c);

/// KL(N(mu, sigma^2) || N(0, 1)) summed, with sigma = exp(log_sigma).
Tensor gaussian_kl(const Tensor &mu, const Tensor &log_sigma);
/// Sum over rows of -log softmax(logits)[row, target[row]]. With a mask,
/// entries marked 0 are excluded from each row's normalizer.
Tensor cross_entropy(const Tensor &logits, std::span<const int> target, std::span<const char> mask = {});
/// Sum of -[t log sigmoid(x) + (1 - t) log(1 - sigmoid(x))].
Tensor bce_with_logits(const Tensor &logits, std::span<const double> target);

/// Named trainable tensors in insertion order.
class ParamStore {
public:
  Tensor add(const std::string &name, int rows, int cols, std::vector<double> values);
  const Tensor &at(const std::string &name) const;
  bool contains(const std::string &name) const { return index_.contains(name); }
  std::size_t size() const { return params_.size(); }
  const std::vector<std::pair<std::string, Tensor>> &items() const { return params_; }
  std::size_t num_values() const;
  void zero_grad();
  /// Independent copy of every value; gradients are not copied.
  ParamStore clone() const;

private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamParams {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double max_grad_norm = 0.0;  // global norm clip, 0 disables
};

class Adam {
public:
  explicit Adam(AdamParams params = {}) : params_(params) {}

  /// One bias-corrected update from the accumulated gradients. Throws
  /// NumericError naming the first parameter with a non-finite gradient,
  /// before any value changes.
  void step(ParamStore &store);
  long steps() const { return t_; }

private:
  AdamParams params_;
  long t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

/// Binary layout: "MRPT", u32 version, u32 count, then per tensor u32 name
/// length, name bytes, u32 rows, u32 cols, little-endian IEEE-754 doubles.
void write_params(std::ostream &out, const ParamStore &store);
ParamStore read_params(std::istream &in);
/// Names and shapes in storage order.
nlohmann::json params_manifest(const ParamStore &store);

}  // namespace molrat::nn
