#pragma once

#include <functional>
#include <vector>

#include "varnet/autodiff.hpp"
#include "varnet/rng.hpp"

// Central-difference gradient checking. `build` must construct a fresh graph
// from the given leaves and return a scalar loss; leaves persist across
// evaluations so perturbing their values re-evaluates the same function.

namespace testutil {

struct GradCheckResult {
  double max_rel_error = 0.0;
  long checked = 0;
};

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline GradCheckResult check_gradients(const std::function<varnet::ad::Var()>& build,
                                       const std::vector<varnet::ad::Var>& leaves,
                                       double h = 1e-5, long max_per_leaf = 8,
                                       varnet::Rng* pick_rng = nullptr) {
  using varnet::ad::Var;
  for (const auto& l : leaves) l->zero_grad();

  Var loss = build();
  varnet::ad::backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const auto& l : leaves) {
    std::vector<double> g(l->val.numel(), 0.0);
    if (l->grad_ready)
      for (long i = 0; i < l->val.numel(); ++i) g[i] = l->grad[i];
    analytic.push_back(std::move(g));
  }

  GradCheckResult res;
  varnet::Rng fallback(97);
  varnet::Rng& rng = pick_rng ? *pick_rng : fallback;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const auto& leaf = leaves[li];
    const long n = leaf->val.numel();
    std::vector<long> indices;
    if (n <= max_per_leaf) {
      for (long i = 0; i < n; ++i) indices.push_back(i);
    } else {
      for (long k = 0; k < max_per_leaf; ++k) indices.push_back(rng.uniform_int(0, n - 1));
    }
    for (long idx : indices) {
      const double keep = leaf->val[idx];
      leaf->val[idx] = keep + h;
      const double lp = build()->val[0];
      leaf->val[idx] = keep - h;
      const double lm = build()->val[0];
      leaf->val[idx] = keep;
      const double fd = (lp - lm) / (2.0 * h);
      res.max_rel_error = std::max(res.max_rel_error, rel_err(fd, analytic[li][idx]));
      ++res.checked;
    }
  }
  return res;
}

}  // namespace testutil
