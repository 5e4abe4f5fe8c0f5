#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fino/tensor.hpp"

namespace fino {

/// Map from one state to the next, both of identical shape.
using StepMap = std::function<Tensor<double>(const Tensor<double>&)>;

/// Root-mean-square norm (1/n sum x^2)^(1/2).
double rms_norm(const Tensor<double>& x);
double rms_distance(const Tensor<double>& a, const Tensor<double>& b);

/// Accumulated error bound after K steps with per-step error eps and
/// Lipschitz constant C: (C^K - 1)/(C - 1) eps, or K eps when |C - 1| <= 1e-9.
double geometric_bound(double C, double eps, std::size_t K);
bool uses_linear_branch(double C);

struct LipschitzEstimate {
  double c_hat = 0.0;  // max observed ratio; a lower bound on the true constant
  std::size_t pairs_used = 0;
  std::size_t pairs_skipped = 0;  // coincident pairs
};

/// max ||phi(v) - phi(w)|| / ||v - w|| over the pairs, skipping v == w.
LipschitzEstimate lipschitz_estimate(const StepMap& phi,
                                     const std::vector<std::pair<Tensor<double>, Tensor<double>>>& pairs);

struct BoundRow {
  std::size_t k;
  double e_k;    // measured rollout error after k steps
  double bound;  // geometric bound for k steps
  bool pass;
};

struct BoundReport {
  double c_hat = 0.0;
  double eps_hat = 0.0;   // max one-step gap
  double eps_mean = 0.0;  // mean one-step gap, for context
  std::size_t k_steps = 0;
  std::size_t lipschitz_pairs = 0;
  double tol = 1e-6;
  bool linear_branch = false;
  bool pass = true;
  std::vector<BoundRow> rows;
  std::string note;
};

/// Builds the report from measured quantities: rows[k-1] compares
/// errors[k-1] with geometric_bound(c_hat, eps_hat, k) * (1 + tol).
BoundReport assess_bound(double c_hat, double eps_hat, double eps_mean, std::size_t lipschitz_pairs,
                         const std::vector<double>& errors, double tol);

/// Rolls surrogate and reference K steps from u0 and assesses the errors
/// against the supplied constants.
BoundReport bound_check(const StepMap& surrogate, const StepMap& reference, const Tensor<double>& u0,
                        std::size_t K, double c_hat, double eps_hat, double tol = 1e-6);

}  // namespace fino
