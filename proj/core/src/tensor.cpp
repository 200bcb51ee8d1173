//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_set>

#include <Eigen/Core>

namespace molrat::nn {

namespace detail {

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backward;

  std::vector<double> &grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct Access {
  static const NodePtr &node(const Tensor &t) { return t.node_; }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

namespace {

thread_local bool g_grad_enabled = true;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

const Node &N(const Tensor &t) {
  if (!t.defined()) throw NumericError("tensor: use of an undefined tensor");
  return *Access::node(t);
}

std::string shape_of(const Node &n) { return "(" + std::to_string(n.rows) + "x" + std::to_string(n.cols) + ")"; }

[[noreturn]] void shape_error(const char *op, const Node &a, const Node &b) {
  throw NumericError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
}

// Builds a result node; records parents and the backward rule only when
// some parent needs a gradient and recording is on.
Tensor make(int rows, int cols, std::vector<double> value, std::vector<NodePtr> parents,
            std::function<void(Node &)> back) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value = std::move(value);
  n->leaf = false;
  bool needs = false;
  if (g_grad_enabled)
    for (const auto &p : parents) needs = needs || p->requires_grad;
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(back);
  }
  return Access::wrap(std::move(n));
}

NodePtr P(const Tensor &t) {
  N(t);
  return Access::node(t);
}

// Adds `delta` into the parent's gradient when it tracks one.
template <class F>
void accumulate(Node &parent, F &&fill) {
  if (!parent.requires_grad) return;
  fill(parent.grad_buffer());
}

template <class F>
Tensor unary(const Tensor &a, F &&f, std::function<double(double x, double y)> dydx) {
  const Node &na = N(a);
  std::vector<double> out(na.value.size());
  std::transform(na.value.begin(), na.value.end(), out.begin(), f);
  return make(na.rows, na.cols, std::move(out), {P(a)}, [dydx](Node &self) {
    Node &pa = *self.parents[0];
    accumulate(pa, [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dydx(pa.value[i], self.value[i]);
    });
  });
}

void require_same(const char *op, const Node &a, const Node &b) {
  if (a.rows != b.rows || a.cols != b.cols) shape_error(op, a, b);
}

}  // namespace

Tensor::Tensor(int rows, int cols, std::vector<double> values, bool requires_grad) {
  if (rows < 0 || cols < 0 || values.size() != static_cast<std::size_t>(rows) * cols)
    throw NumericError("tensor: " + std::to_string(values.size()) + " values for shape (" + std::to_string(rows) +
                       "x" + std::to_string(cols) + ")");
  node_ = std::make_shared<Node>();
  node_->rows = rows;
  node_->cols = cols;
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  return Tensor(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v) { return Tensor(1, 1, {v}); }

Tensor Tensor::row(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Tensor(1, n, std::move(values));
}

int Tensor::rows() const { return N(*this).rows; }
int Tensor::cols() const { return N(*this).cols; }
std::size_t Tensor::size() const { return N(*this).value.size(); }
std::string Tensor::shape_string() const { return shape_of(N(*this)); }
std::span<const double> Tensor::values() const { return N(*this).value; }

double Tensor::at(int r, int c) const {
  const Node &n = N(*this);
  if (r < 0 || r >= n.rows || c < 0 || c >= n.cols)
    throw NumericError("tensor: index (" + std::to_string(r) + "," + std::to_string(c) + ") outside " + shape_of(n));
  return n.value[static_cast<std::size_t>(r) * n.cols + c];
}

double Tensor::item() const {
  const Node &n = N(*this);
  if (n.value.size() != 1) throw NumericError("tensor: item() on shape " + shape_of(n));
  return n.value[0];
}

std::span<const double> Tensor::grad() const { return N(*this).grad; }
bool Tensor::requires_grad() const { return N(*this).requires_grad; }
void Tensor::zero_grad() { node_->grad.clear(); }

std::span<double> Tensor::mutable_values() {
  if (!N(*this).leaf) throw NumericError("tensor: only leaf tensors are writable");
  return node_->value;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor &loss) {
  const Node &root = N(loss);
  if (root.value.size() != 1) throw NumericError("backward: loss must be 1x1, got " + shape_of(root));
  if (!root.requires_grad) return;
  if (root.leaf) {
    Access::node(loss)->grad_buffer()[0] += 1.0;
    return;
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node *> order;
  std::unordered_set<Node *> seen;
  std::vector<std::pair<Node *, std::size_t>> stack{{Access::node(loss).get(), 0}};
  seen.insert(stack.back().first);
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      Node *p = node->parents[next++].get();
      if (p->requires_grad && !p->leaf && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node *n : order) n->grad.assign(n->value.size(), 0.0);
  order.back()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->backward(**it);
}

Tensor matmul(const Tensor &a, const Tensor &b) {
  const Node &na = N(a), &nb = N(b);
  if (na.cols != nb.rows) shape_error("matmul", na, nb);
  std::vector<double> out(static_cast<std::size_t>(na.rows) * nb.cols);
  MutMap(out.data(), na.rows, nb.cols).noalias() =
      ConstMap(na.value.data(), na.rows, na.cols) * ConstMap(nb.value.data(), nb.rows, nb.cols);
  return make(na.rows, nb.cols, std::move(out), {P(a), P(b)}, [](Node &self) {
    Node &pa = *self.parents[0], &pb = *self.parents[1];
    ConstMap dc(self.grad.data(), self.rows, self.cols);
    accumulate(pa, [&](std::vector<double> &g) {
      MutMap(g.data(), pa.rows, pa.cols).noalias() += dc * ConstMap(pb.value.data(), pb.rows, pb.cols).transpose();
    });
    accumulate(pb, [&](std::vector<double> &g) {
      MutMap(g.data(), pb.rows, pb.cols).noalias() += ConstMap(pa.value.data(), pa.rows, pa.cols).transpose() * dc;
    });
  });
}

Tensor add(const Tensor &a, const Tensor &b) {
  const Node &na = N(a), &nb = N(b);
  require_same("add", na, nb);
  std::vector<double> out(na.value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] + nb.value[i];
  return make(na.rows, na.cols, std::move(out), {P(a), P(b)}, [](Node &self) {
    for (auto &p : self.parents)
      accumulate(*p, [&](std::vector<double> &g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
  });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  const Node &na = N(a), &nb = N(b);
  require_same("sub", na, nb);
  std::vector<double> out(na.value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] - nb.value[i];
  return make(na.rows, na.cols, std::move(out), {P(a), P(b)}, [](Node &self) {
    accumulate(*self.parents[0], [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(*self.parents[1], [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  const Node &na = N(a), &nb = N(b);
  require_same("mul", na, nb);
  std::vector<double> out(na.value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na.value[i] * nb.value[i];
  return make(na.rows, na.cols, std::move(out), {P(a), P(b)}, [](Node &self) {
    Node &pa = *self.parents[0], &pb = *self.parents[1];
    accumulate(pa, [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    });
    accumulate(pb, [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    });
  });
}

Tensor scale(const Tensor &a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_row(const Tensor &a, const Tensor &b) {
  const Node &na = N(a), &nb = N(b);
  if (nb.rows != 1 || nb.cols != na.cols) shape_error("add_row", na, nb);
  std::vector<double> out(na.value);
  for (int r = 0; r < na.rows; ++r)
    for (int c = 0; c < na.cols; ++c) out[static_cast<std::size_t>(r) * na.cols + c] += nb.value[c];
  return make(na.rows, na.cols, std::move(out), {P(a), P(b)}, [](Node &self) {
    accumulate(*self.parents[0], [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(*self.parents[1], [&](std::vector<double> &g) {
      for (int r = 0; r < self.rows; ++r)
        for (int c = 0; c < self.cols; ++c) g[c] += self.grad[static_cast<std::size_t>(r) * self.cols + c];
    });
  });
}

Tensor relu(const Tensor &a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor &a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor &a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor softmax(const Tensor &a) {
  const Node &na = N(a);
  std::vector<double> out(na.value.size());
  for (int r = 0; r < na.rows; ++r) {
    const double *x = na.value.data() + static_cast<std::size_t>(r) * na.cols;
    double *y = out.data() + static_cast<std::size_t>(r) * na.cols;
    const double m = *std::max_element(x, x + na.cols);
    double z = 0.0;
    for (int c = 0; c < na.cols; ++c) z += (y[c] = std::exp(x[c] - m));
    for (int c = 0; c < na.cols; ++c) y[c] /= z;
  }
  return make(na.rows, na.cols, std::move(out), {P(a)}, [](Node &self) {
    accumulate(*self.parents[0], [&](std::vector<double> &g) {
      for (int r = 0; r < self.rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * self.cols;
        double dot = 0.0;
        for (int c = 0; c < self.cols; ++c) dot += self.grad[off + c] * self.value[off + c];
        for (int c = 0; c < self.cols; ++c) g[off + c] += self.value[off + c] * (self.grad[off + c] - dot);
      }
    });
  });
}

Tensor log_softmax(const Tensor &a, std::span<const char> mask) {
  const Node &na = N(a);
  if (!mask.empty() && mask.size() != na.value.size())
    throw NumericError("log_softmax: mask of size " + std::to_string(mask.size()) + " for shape " + shape_of(na));
  auto on = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> out(na.value.size(), kNegInf);
  for (int r = 0; r < na.rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * na.cols;
    double m = kNegInf;
    for (int c = 0; c < na.cols; ++c)
      if (on(off + c)) m = std::max(m, na.value[off + c]);
    if (m == kNegInf) throw NumericError("log_softmax: row " + std::to_string(r) + " is fully masked");
    double z = 0.0;
    for (int c = 0; c < na.cols; ++c)
      if (on(off + c)) z += std::exp(na.value[off + c] - m);
    const double lz = m + std::log(z);
    for (int c = 0; c < na.cols; ++c)
      if (on(off + c)) out[off + c] = na.value[off + c] - lz;
  }
  return make(na.rows, na.cols, std::move(out), {P(a)}, [](Node &self) {
    accumulate(*self.parents[0], [&](std::vector<double> &g) {
      for (int r = 0; r < self.rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * self.cols;
        double total = 0.0;
        for (int c = 0; c < self.cols; ++c)
          if (std::isfinite(self.value[off + c])) total += self.grad[off + c];
        for (int c = 0; c < self.cols; ++c)
          if (std::isfinite(self.value[off + c]))
            g[off + c] += self.grad[off + c] - std::exp(self.value[off + c]) * total;
      }
    });
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw NumericError("concat_cols: no inputs");
  const int rows = N(parts[0]).rows;
  int cols = 0;
  std::vector<NodePtr> parents;
  for (const auto &t : parts) {
    if (N(t).rows != rows) shape_error("concat_cols", N(parts[0]), N(t));
    cols += N(t).cols;
    parents.push_back(P(t));
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  int c0 = 0;
  for (const auto &t : parts) {
    const Node &n = N(t);
    for (int r = 0; r < rows; ++r)
      std::copy_n(n.value.begin() + static_cast<std::ptrdiff_t>(r) * n.cols, n.cols,
                  out.begin() + static_cast<std::ptrdiff_t>(r) * cols + c0);
    c0 += n.cols;
  }
  return make(rows, cols, std::move(out), std::move(parents), [](Node &self) {
    int c0 = 0;
    for (auto &p : self.parents) {
      accumulate(*p, [&](std::vector<double> &g) {
        for (int r = 0; r < self.rows; ++r)
          for (int c = 0; c < p->cols; ++c)
            g[static_cast<std::size_t>(r) * p->cols + c] += self.grad[static_cast<std::size_t>(r) * self.cols + c0 + c];
      });
      c0 += p->cols;
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw NumericError("concat_rows: no inputs");
  const int cols = N(parts[0]).cols;
  int rows = 0;
  std::vector<NodePtr> parents;
  std::vector<double> out;
  for (const auto &t : parts) {
    if (N(t).cols != cols) shape_error("concat_rows", N(parts[0]), N(t));
    rows += N(t).rows;
    out.insert(out.end(), N(t).value.begin(), N(t).value.end());
    parents.push_back(P(t));
  }
  return make(rows, cols, std::move(out), std::move(parents), [](Node &self) {
    std::size_t off = 0;
    for (auto &p : self.parents) {
      accumulate(*p, [&](std::vector<double> &g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
      });
      off += p->value.size();
    }
  });
}

Tensor gather_rows(const Tensor &a, std::span<const int> index) {
  const Node &na = N(a);
  std::vector<double> out(index.size() * na.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= na.rows)
      throw NumericError("gather_rows: row " + std::to_string(index[i]) + " outside " + shape_of(na));
    std::copy_n(na.value.begin() + static_cast<std::ptrdiff_t>(index[i]) * na.cols, na.cols,
                out.begin() + static_cast<std::ptrdiff_t>(i) * na.cols);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make(static_cast<int>(index.size()), na.cols, std::move(out), {P(a)}, [idx](Node &self) {
    accumulate(*self.parents[0], [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (int c = 0; c < self.cols; ++c)
          g[static_cast<std::size_t>(idx[i]) * self.cols + c] += self.grad[i * self.cols + c];
    });
  });
}

Tensor group_sum_rows(const Tensor &a, std::span<const int> group, int num_groups) {
  const Node &na = N(a);
  if (group.size() != static_cast<std::size_t>(na.rows))
    throw NumericError("group_sum_rows: " + std::to_string(group.size()) + " group ids for shape " + shape_of(na));
  std::vector<double> out(static_cast<std::size_t>(num_groups) * na.cols, 0.0);
  for (int r = 0; r < na.rows; ++r) {
    if (group[r] < 0) continue;
    if (group[r] >= num_groups) throw NumericError("group_sum_rows: group id out of range");
    for (int c = 0; c < na.cols; ++c)
      out[static_cast<std::size_t>(group[r]) * na.cols + c] += na.value[static_cast<std::size_t>(r) * na.cols + c];
  }
  std::vector<int> grp(group.begin(), group.end());
  return make(num_groups, na.cols, std::move(out), {P(a)}, [grp](Node &self) {
    accumulate(*self.parents[0], [&](std::vector<double> &g) {
      for (std::size_t r = 0; r < grp.size(); ++r) {
        if (grp[r] < 0) continue;
        for (int c = 0; c < self.cols; ++c)
          g[r * self.cols + c] += self.grad[static_cast<std::size_t>(grp[r]) * self.cols + c];
      }
    });
  });
}

Tensor row_sum(const Tensor &a) {
  const Node &na = N(a);
  std::vector<double> out(na.rows, 0.0);
  for (int r = 0; r < na.rows; ++r)
    for (int c = 0; c < na.cols; ++c) out[r] += na.value[static_cast<std::size_t>(r) * na.cols + c];
  return make(na.rows, 1, std::move(out), {P(a)}, [](Node &self) {
    Node &pa = *self.parents[0];
    accumulate(pa, [&](std::vector<double> &g) {
      for (int r = 0; r < pa.rows; ++r)
        for (int c = 0; c < pa.cols; ++c) g[static_cast<std::size_t>(r) * pa.cols + c] += self.grad[r];
    });
  });
}

Tensor column_sum(const Tensor &a) {
  const Node &na = N(a);
  std::vector<double> out(na.cols, 0.0);
  for (int r = 0; r < na.rows; ++r)
    for (int c = 0; c < na.cols; ++c) out[c] += na.value[static_cast<std::size_t>(r) * na.cols + c];
  return make(1, na.cols, std::move(out), {P(a)}, [](Node &self) {
    Node &pa = *self.parents[0];
    accumulate(pa, [&](std::vector<double> &g) {
      for (int r = 0; r < pa.rows; ++r)
        for (int c = 0; c < pa.cols; ++c) g[static_cast<std::size_t>(r) * pa.cols + c] += self.grad[c];
    });
  });
}

Tensor sum(const Tensor &a) {
  const Node &na = N(a);
  double s = 0.0;
  for (double v : na.value) s += v;
  return make(1, 1, {s}, {P(a)}, [](Node &self) {
    accumulate(*self.parents[0], [&](std::vector<double> &g) {
      for (double &v : g) v += self.grad[0];
    });
  });
}

Tensor element(const Tensor &a, int r, int c) {
  const double v = a.at(r, c);
  const std::size_t i = static_cast<std::size_t>(r) * N(a).cols + c;
  return make(1, 1, {v}, {P(a)}, [i](Node &self) {
    accumulate(*self.parents[0], [&](std::vector<double> &g) { g[i] += self.grad[0]; });
  });
}

Tensor gaussian_kl(const Tensor &mu, const Tensor &log_sigma) {
  const Node &nm = N(mu), &ns = N(log_sigma);
  require_same("gaussian_kl", nm, ns);
  double kl = 0.0;
  for (std::size_t i = 0; i < nm.value.size(); ++i) {
    const double ls = ns.value[i];
    kl += 0.5 * (nm.value[i] * nm.value[i] + std::exp(2.0 * ls) - 2.0 * ls - 1.0);
  }
  return make(1, 1, {kl}, {P(mu), P(log_sigma)}, [](Node &self) {
    Node &pm = *self.parents[0], &ps = *self.parents[1];
    accumulate(pm, [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * pm.value[i];
    });
    accumulate(ps, [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * (std::exp(2.0 * ps.value[i]) - 1.0);
    });
  });
}

Tensor cross_entropy(const Tensor &logits, std::span<const int> target, std::span<const char> mask) {
  const Node &nl = N(logits);
  if (target.size() != static_cast<std::size_t>(nl.rows))
    throw NumericError("cross_entropy: " + std::to_string(target.size()) + " targets for shape " + shape_of(nl));
  if (!mask.empty() && mask.size() != nl.value.size())
    throw NumericError("cross_entropy: mask of size " + std::to_string(mask.size()) + " for shape " + shape_of(nl));
  auto on = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };
  std::vector<double> prob(nl.value.size(), 0.0);
  double loss = 0.0;
  for (int r = 0; r < nl.rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * nl.cols;
    if (target[r] < 0 || target[r] >= nl.cols || !on(off + target[r]))
      throw NumericError("cross_entropy: target out of range or masked in row " + std::to_string(r));
    double m = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < nl.cols; ++c)
      if (on(off + c)) m = std::max(m, nl.value[off + c]);
    double z = 0.0;
    for (int c = 0; c < nl.cols; ++c)
      if (on(off + c)) z += (prob[off + c] = std::exp(nl.value[off + c] - m));
    for (int c = 0; c < nl.cols; ++c) prob[off + c] /= z;
    loss += m + std::log(z) - nl.value[off + target[r]];
  }
  std::vector<int> tgt(target.begin(), target.end());
  return make(1, 1, {loss}, {P(logits)}, [prob = std::move(prob), tgt](Node &self) {
    Node &pl = *self.parents[0];
    accumulate(pl, [&](std::vector<double> &g) {
      for (int r = 0; r < pl.rows; ++r)
        for (int c = 0; c < pl.cols; ++c) {
          const std::size_t i = static_cast<std::size_t>(r) * pl.cols + c;
          g[i] += self.grad[0] * (prob[i] - (c == tgt[r] ? 1.0 : 0.0));
        }
    });
  });
}

Tensor bce_with_logits(const Tensor &logits, std::span<const double> target) {
  const Node &nl = N(logits);
  if (target.size() != nl.value.size())
    throw NumericError("bce_with_logits: " + std::to_string(target.size()) + " targets for shape " + shape_of(nl));
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double x = nl.value[i];
    // softplus(x) - t x, evaluated stably.
    loss += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - target[i] * x;
  }
  std::vector<double> tgt(target.begin(), target.end());
  return make(1, 1, {loss}, {P(logits)}, [tgt](Node &self) {
    Node &pl = *self.parents[0];
    accumulate(pl, [&](std::vector<double> &g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = pl.value[i];
        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        g[i] += self.grad[0] * (s - tgt[i]);
      }
    });
  });
}

Tensor ParamStore::add(const std::string &name, int rows, int cols, std::vector<double> values) {
  if (index_.contains(name)) throw NumericError("param store: duplicate parameter " + name);
  Tensor t(rows, cols, std::move(values), true);
  index_.emplace(name, params_.size());
  params_.emplace_back(name, t);
  return t;
}

const Tensor &ParamStore::at(const std::string &name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw NumericError("param store: no parameter named " + name);
  return params_[it->second].second;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto &[name, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto &[name, t] : params_) t.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto &[name, t] : params_) {
    const auto v = t.values();
    out.add(name, t.rows(), t.cols(), std::vector<double>(v.begin(), v.end()));
  }
  return out;
}

void Adam::step(ParamStore &store) {
  double norm2 = 0.0;
  for (const auto &[name, t] : store.items()) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter " + name);
      norm2 += g * g;
    }
  }
  double clip = 1.0;
  if (params_.max_grad_norm > 0.0 && norm2 > params_.max_grad_norm * params_.max_grad_norm)
    clip = params_.max_grad_norm / std::sqrt(norm2);
  ++t_;
  const double bc1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
  for (const auto &[name, t] : store.items()) {
    const auto grad = t.grad();
    if (grad.empty()) continue;
    auto &[m, v] = moments_[name];
    if (m.empty()) {
      m.assign(t.size(), 0.0);
      v.assign(t.size(), 0.0);
    }
    Tensor handle = t;
    auto value = handle.mutable_values();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * clip;
      m[i] = params_.beta1 * m[i] + (1.0 - params_.beta1) * g;
      v[i] = params_.beta2 * v[i] + (1.0 - params_.beta2) * g * g;
      value[i] -= params_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + params_.epsilon);
    }
  }
}

namespace {

constexpr char kMagic[4] = {'M', 'R', 'P', 'T'};
constexpr std::uint32_t kParamsVersion = 1;

void put_u32(std::ostream &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_bytes(std::istream &in, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ArtifactError("parameter file: truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace

void write_params(std::ostream &out, const ParamStore &store) {
  out.write(kMagic, 4);
  put_u32(out, kParamsVersion);
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto &[name, t] : store.items()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw ArtifactError("parameter file: write failed");
}

ParamStore read_params(std::istream &in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) throw ArtifactError("parameter file: bad magic");
  const auto version = static_cast<std::uint32_t>(get_bytes(in, 4));
  if (version != kParamsVersion)
    throw ArtifactError("parameter file: unsupported version " + std::to_string(version));
  const auto count = static_cast<std::uint32_t>(get_bytes(in, 4));
  ParamStore store;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = static_cast<std::uint32_t>(get_bytes(in, 4));
    if (len > 4096) throw ArtifactError("parameter file: implausible name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = static_cast<std::uint32_t>(get_bytes(in, 4));
    const auto cols = static_cast<std::uint32_t>(get_bytes(in, 4));
    if (static_cast<std::uint64_t>(rows) * cols > (1u << 26)) throw ArtifactError("parameter file: implausible shape");
    std::vector<double> values(static_cast<std::size_t>(rows) * cols);
    for (double &v : values) v = std::bit_cast<double>(get_bytes(in, 8));
    store.add(name, static_cast<int>(rows), static_cast<int>(cols), std::move(values));
  }
  return store;
}

nlohmann::json params_manifest(const ParamStore &store) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto &[name, t] : store.items()) list.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  return {{"format", "molrat.params"}, {"version", kParamsVersion}, {"tensors", list}};
}

}  // namespace molrat::nn
