#include "fino/bound.hpp"

#include <cmath>

namespace fino {

double rms_norm(const Tensor<double>& x) {
  double acc = 0;
  for (double v : x.data()) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double rms_distance(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) throw ShapeError("rms_distance: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

bool uses_linear_branch(double C) { return std::abs(C - 1.0) <= 1e-9; }

double geometric_bound(double C, double eps, std::size_t K) {
  if (!(C >= 0.0) || !(eps >= 0.0)) throw ConfigError("geometric_bound needs C >= 0 and eps >= 0");
  const double k = static_cast<double>(K);
  if (uses_linear_branch(C)) return k * eps;
  return (std::pow(C, k) - 1.0) / (C - 1.0) * eps;
}

LipschitzEstimate lipschitz_estimate(const StepMap& phi,
                                     const std::vector<std::pair<Tensor<double>, Tensor<double>>>& pairs) {
  LipschitzEstimate est;
  for (const auto& [v, w] : pairs) {
    const double den = rms_distance(v, w);
    if (den == 0.0) {
      ++est.pairs_skipped;
      continue;
    }
    const double ratio = rms_distance(phi(v), phi(w)) / den;
    if (!std::isfinite(ratio)) throw NumericalError("lipschitz_estimate: non-finite ratio");
    est.c_hat = std::max(est.c_hat, ratio);
    ++est.pairs_used;
  }
  return est;
}

BoundReport assess_bound(double c_hat, double eps_hat, double eps_mean, std::size_t lipschitz_pairs,
                         const std::vector<double>& errors, double tol) {
  BoundReport r;
  r.c_hat = c_hat;
  r.eps_hat = eps_hat;
  r.eps_mean = eps_mean;
  r.k_steps = errors.size();
  r.lipschitz_pairs = lipschitz_pairs;
  r.tol = tol;
  r.linear_branch = uses_linear_branch(c_hat);
  for (std::size_t k = 1; k <= errors.size(); ++k) {
    BoundRow row{k, errors[k - 1], geometric_bound(c_hat, eps_hat, k), false};
    row.pass = row.e_k <= row.bound * (1.0 + tol);
    r.pass = r.pass && row.pass;
    r.rows.push_back(row);
  }
  r.note =
      "C_hat and eps_hat are sample maxima, so they under-cover the uniform constants the bound assumes; a "
      "violation falsifies the measured setup, a pass does not certify it.";
  return r;
}

BoundReport bound_check(const StepMap& surrogate, const StepMap& reference, const Tensor<double>& u0,
                        std::size_t K, double c_hat, double eps_hat, double tol) {
  Tensor<double> a = u0, b = u0;
  std::vector<double> errors;
  for (std::size_t k = 0; k < K; ++k) {
    a = surrogate(a);
    b = reference(b);
    errors.push_back(rms_distance(a, b));
  }
  return assess_bound(c_hat, eps_hat, eps_hat, 0, errors, tol);
}

}  // namespace fino
