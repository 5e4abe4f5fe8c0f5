#include "fino/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "fino/log.hpp"
#include "fino/rng.hpp"

namespace fino {

namespace {

constexpr std::size_t kChunk = 64;

template <typename T>
RollBuffer<T> buffer_of(const std::vector<Var<T>>& inputs) {
  const Shape& fs = inputs.front().shape();
  RollBuffer<T> buf(inputs.size(), coordinate_grid<T>(fs[2], fs[3]));
  for (const auto& f : inputs) buf.push(f);
  return buf;
}

void check_length(const Dataset& data, std::size_t k_hist) {
  if (k_hist < 1 || k_hist >= data.n_frames())
    throw ConfigError("k_hist must be at least 1 and below the trajectory length " + std::to_string(data.n_frames()));
}

template <typename T>
void check_model(const FinoModel<T>& model, const Dataset& data, std::size_t k_hist) {
  const auto& c = model.config();
  if (c.in_channels != k_hist * data.channels() + 2 || c.out_channels != data.channels())
    throw ConfigError("model channels do not match the dataset with k_hist = " + std::to_string(k_hist));
  if (c.spatial_dims != data.grid.dims) throw ConfigError("model and dataset disagree on the number of spatial dims");
}

}  // namespace

template <typename T>
Forecast one_step_forecast(const FinoModel<T>& model, const Dataset& data, std::size_t k_hist) {
  check_length(data, k_hist);
  check_model(model, data, k_hist);
  const std::size_t n = data.n_traj(), S = data.n_frames() - k_hist, fs = data.frame_size();
  Forecast f;
  f.pred = Tensor<double>({n, S, data.channels(), data.height(), data.width()});
  f.target = f.pred;
  std::vector<Window> all;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < S; ++s) all.push_back({i, s});
  for (std::size_t first = 0; first < all.size(); first += kChunk) {
    const std::vector<Window> chunk(all.begin() + first, all.begin() + std::min(all.size(), first + kChunk));
    const Batch<T> batch = make_batch<T>(data, chunk, k_hist, 1);
    const auto pred = rollout<T>(nullptr, model_predictor(model), buffer_of(batch.inputs), 1);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const std::size_t dst = (chunk[b].traj * S + chunk[b].start) * fs;
      const T* p = pred[0].value().ptr() + b * fs;
      const double* t = data.frame_ptr(chunk[b].traj, chunk[b].start + k_hist);
      for (std::size_t e = 0; e < fs; ++e) {
        f.pred[dst + e] = static_cast<double>(p[e]);
        f.target[dst + e] = t[e];
      }
    }
  }
  return f;
}

Forecast persistence_forecast(const Dataset& data, std::size_t k_hist) {
  check_length(data, k_hist);
  const std::size_t n = data.n_traj(), S = data.n_frames() - k_hist, fs = data.frame_size();
  Forecast f;
  f.pred = Tensor<double>({n, S, data.channels(), data.height(), data.width()});
  f.target = f.pred;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      const double* last = data.frame_ptr(i, s + k_hist - 1);
      const double* next = data.frame_ptr(i, s + k_hist);
      std::copy(last, last + fs, f.pred.ptr() + (i * S + s) * fs);
      std::copy(next, next + fs, f.target.ptr() + (i * S + s) * fs);
    }
  }
  return f;
}

template <typename T>
Forecast rollout_forecast(const FinoModel<T>& model, const Dataset& data, std::size_t k_hist, std::size_t steps,
                          std::size_t start) {
  check_length(data, k_hist);
  check_model(model, data, k_hist);
  if (start + k_hist >= data.n_frames()) throw ConfigError("rollout start leaves no frame to predict");
  const std::size_t avail = data.n_frames() - start - k_hist;
  if (steps > avail) {
    log_warn("rollout truncated from " + std::to_string(steps) + " to " + std::to_string(avail) + " steps");
    steps = avail;
  }
  if (steps == 0) throw ConfigError("rollout needs at least one step");
  const std::size_t n = data.n_traj(), fs = data.frame_size();
  Forecast f;
  f.pred = Tensor<double>({n, steps, data.channels(), data.height(), data.width()});
  f.target = f.pred;
  for (std::size_t first = 0; first < n; first += kChunk) {
    std::vector<Window> chunk;
    for (std::size_t i = first; i < std::min(n, first + kChunk); ++i) chunk.push_back({i, start});
    const Batch<T> batch = make_batch<T>(data, chunk, k_hist, steps);
    const auto pred = rollout<T>(nullptr, model_predictor(model), buffer_of(batch.inputs), steps);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t dst = (chunk[b].traj * steps + s) * fs;
        const T* p = pred[s].value().ptr() + b * fs;
        const double* t = data.frame_ptr(chunk[b].traj, start + k_hist + s);
        for (std::size_t e = 0; e < fs; ++e) {
          f.pred[dst + e] = static_cast<double>(p[e]);
          f.target[dst + e] = t[e];
        }
      }
    }
  }
  return f;
}

template <typename T>
BoundReport model_bound_check(const FinoModel<T>& model, const Dataset& data, std::size_t k_hist, std::size_t K,
                              const BoundCheckOptions& opts) {
  check_length(data, k_hist);
  check_model(model, data, k_hist);
  if (K < 1) throw ConfigError("k_steps must be at least 1");
  if (opts.lipschitz_pairs < 100) throw ConfigError("the Lipschitz estimate needs at least 100 pairs");
  const Shape state_shape{data.channels(), data.height(), data.width()};
  const StepMap reference = [&](const Tensor<double>& u) { return reference_step(data.spec, u, data.dt_data, data.grid); };

  // C_hat from data pairs and perturbed copies.
  Rng rng(opts.seed, 0x6c697073ULL);
  std::vector<std::pair<Tensor<double>, Tensor<double>>> pairs;
  for (std::size_t p = 0; p < opts.lipschitz_pairs; ++p) {
    const Tensor<double> a = data.frame(rng.below(data.n_traj()), rng.below(data.n_frames()));
    if (p % 2 == 0) {
      pairs.emplace_back(a, data.frame(rng.below(data.n_traj()), rng.below(data.n_frames())));
    } else {
      Tensor<double> b = a;
      for (double& e : b.data()) e += opts.perturbation * rng.normal();
      pairs.emplace_back(a, std::move(b));
    }
  }
  const LipschitzEstimate lip = lipschitz_estimate(reference, pairs);

  // eps_hat: one-step gap over every window.
  const Forecast one = one_step_forecast(model, data, k_hist);
  const std::size_t S = data.n_frames() - k_hist, fs = data.frame_size();
  double eps_max = 0.0, eps_sum = 0.0;
  for (std::size_t i = 0; i < data.n_traj(); ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      const Tensor<double> exact = reference(data.frame(i, s + k_hist - 1));
      const Tensor<double> pred(state_shape, std::vector<double>(one.pred.ptr() + (i * S + s) * fs,
                                                                 one.pred.ptr() + (i * S + s + 1) * fs));
      const double gap = rms_distance(pred, exact);
      eps_max = std::max(eps_max, gap);
      eps_sum += gap;
    }
  }
  const double eps_mean = eps_sum / static_cast<double>(data.n_traj() * S);

  // e_k: model rollout against the iterated reference map.
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + k_hist + K <= data.n_frames(); s += k_hist) starts.push_back(s);
  if (starts.empty()) starts.push_back(0);
  std::vector<double> errors(K, 0.0);
  for (std::size_t s0 : starts) {
    for (std::size_t first = 0; first < data.n_traj(); first += kChunk) {
      std::vector<Window> chunk;
      for (std::size_t i = first; i < std::min(data.n_traj(), first + kChunk); ++i) chunk.push_back({i, s0});
      const Batch<T> batch = make_batch<T>(data, chunk, k_hist, 0);
      const auto pred = rollout<T>(nullptr, model_predictor(model), buffer_of(batch.inputs), K);
      for (std::size_t b = 0; b < chunk.size(); ++b) {
        Tensor<double> exact = data.frame(chunk[b].traj, s0 + k_hist - 1);
        for (std::size_t k = 0; k < K; ++k) {
          exact = reference(exact);
          const T* p = pred[k].value().ptr() + b * fs;
          Tensor<double> mine(state_shape);
          for (std::size_t e = 0; e < fs; ++e) mine[e] = static_cast<double>(p[e]);
          errors[k] = std::max(errors[k], rms_distance(mine, exact));
        }
      }
    }
  }
  return assess_bound(lip.c_hat, eps_max, eps_mean, lip.pairs_used, errors, opts.tol);
}

#define FINO_INSTANTIATE_EVAL(T)                                                                             \
  template Forecast one_step_forecast<T>(const FinoModel<T>&, const Dataset&, std::size_t);                 \
  template Forecast rollout_forecast<T>(const FinoModel<T>&, const Dataset&, std::size_t, std::size_t,       \
                                        std::size_t);                                                        \
  template BoundReport model_bound_check<T>(const FinoModel<T>&, const Dataset&, std::size_t, std::size_t,   \
                                            const BoundCheckOptions&);

FINO_INSTANTIATE_EVAL(float)
FINO_INSTANTIATE_EVAL(double)

}  // namespace fino
