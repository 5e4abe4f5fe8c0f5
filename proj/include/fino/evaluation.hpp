#pragma once

#include <cstdint>

#include "fino/bound.hpp"
#include "fino/metrics.hpp"
#include "fino/training.hpp"

namespace fino {

/// Predictions and matching targets, both (n_traj, S, V, H, W).
struct Forecast {
  Tensor<double> pred;
  Tensor<double> target;
};

/// Teacher-forced one-step predictions of frames k_hist .. T-1: each
/// frame is predicted from the k_hist true frames before it.
template <typename T>
Forecast one_step_forecast(const FinoModel<T>& model, const Dataset& data, std::size_t k_hist);

/// Last-frame persistence over the same frames as one_step_forecast.
Forecast persistence_forecast(const Dataset& data, std::size_t k_hist);

/// Free rollout from frames [start, start + k_hist) for `steps` steps
/// (truncated to the frames available).
template <typename T>
Forecast rollout_forecast(const FinoModel<T>& model, const Dataset& data, std::size_t k_hist, std::size_t steps,
                          std::size_t start = 0);

struct BoundCheckOptions {
  std::size_t lipschitz_pairs = 128;  // half data pairs, half perturbed copies
  double perturbation = 1e-2;         // RMS size of the perturbations
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

/// Empirical local-to-global check of a trained model against the
/// dataset's reference solver on single-frame states in the RMS norm.
/// eps_hat is the largest one-step gap over every window of `data`; e_k is
/// the largest k-step rollout error over rollouts started at multiples of
/// k_hist; C_hat comes from lipschitz_estimate of the reference map.
template <typename T>
BoundReport model_bound_check(const FinoModel<T>& model, const Dataset& data, std::size_t k_hist, std::size_t K,
                              const BoundCheckOptions& opts = {});

}  // namespace fino
