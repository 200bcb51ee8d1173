//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace molrat::testing {

// Euclidean projection onto the probability simplex.
inline std::vector<double> project_simplex(std::vector<double> v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0) theta = t;
  }
  for (double &x : v) x = std::max(0.0, x - theta);
  return v;
}

// Maximizes sum_k p_k r_k + lambda * H(p) by projected gradient ascent.
inline std::vector<double> simplex_oracle(const std::vector<double> &reward, double lambda) {
  std::vector<double> p(reward.size(), 1.0 / reward.size());
  for (int it = 0; it < 200000; ++it) {
    std::vector<double> next = p;
    for (std::size_t k = 0; k < p.size(); ++k)
      next[k] += 1e-3 * (reward[k] - lambda * (std::log(std::max(p[k], 1e-300)) + 1.0));
    p = project_simplex(next);
  }
  return p;
}

}  // namespace molrat::testing
