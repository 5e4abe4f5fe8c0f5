#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "fino/dataset.hpp"
#include "fino/model.hpp"

namespace fino {

/// Autoregressive training settings.
struct TrainConfig {
  std::size_t k_hist = 10;
  std::size_t horizon = 1;  // unrolled steps per training window
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient norm cap; 0 disables
  std::uint64_t seed = 0;
  bool teacher_forcing = false;
  std::size_t windows_per_traj = 1;  // random windows drawn per training trajectory and epoch
  double val_fraction = 0.1;          // trailing share of trajectories held out
  std::size_t val_horizon = 0;        // rollout length for L_full; 0 means `horizon`

  void validate() const;
  std::size_t effective_val_horizon() const { return val_horizon == 0 ? horizon : val_horizon; }
  bool operator==(const TrainConfig&) const = default;
};

/// (2, H, W) coordinate channels in [0, 1]: x along W, y along H (zero when H == 1).
template <typename T>
Tensor<T> coordinate_grid(std::size_t H, std::size_t W);

/// Rolling window of the last k_hist frames, oldest first. Each frame is
/// (B, V, H, W).
template <typename T>
struct RollBuffer {
  std::size_t k_hist = 0;
  std::deque<Var<T>> frames;
  Tensor<T> coords;  // (2, H, W)

  RollBuffer(std::size_t k, Tensor<T> coord_grid) : k_hist(k), coords(std::move(coord_grid)) {}

  bool full() const { return frames.size() == k_hist; }
  /// Appends the newest frame, dropping the oldest once full.
  void push(Var<T> frame);
};

/// Concatenates the buffered frames and the coordinate grid:
/// (B, k_hist * V + 2, H, W). Rejects a partially filled buffer.
template <typename T>
Var<T> assemble_features(Tape<T>* tape, const RollBuffer<T>& buf);

/// One-step predictor from features to the next frame.
template <typename T>
using Predictor = std::function<Var<T>(Tape<T>*, const Var<T>&)>;

template <typename T>
Predictor<T> model_predictor(const FinoModel<T>& model);

/// Iterates predict-then-shift for `steps` steps. When `teacher` is given
/// (one frame per step), the ground truth rather than the prediction is
/// shifted in. Returns the predictions, one (B, V, H, W) per step.
template <typename T>
std::vector<Var<T>> rollout(Tape<T>* tape, const Predictor<T>& predict, RollBuffer<T> buf, std::size_t steps,
                            const std::vector<Var<T>>* teacher = nullptr);

/// sum_t (1/B) sum_b ||pred_t - target_t||^2.
template <typename T>
Var<T> stepwise_loss(Tape<T>* tape, const std::vector<Var<T>>& preds, const std::vector<Var<T>>& targets);

/// (1/B) sum_b ||U_hat - U||^2 over stacked (B, T, V, H, W) windows. Works
/// on plain tensors, so it can never contribute a gradient.
template <typename T>
double full_traj_loss(const Tensor<T>& pred_traj, const Tensor<T>& true_traj);

/// Stacks per-step (B, V, H, W) frames into (B, steps, V, H, W).
template <typename T>
Tensor<T> stack_steps(const std::vector<Var<T>>& steps);

/// Adaptive-moment optimizer over a fixed parameter list.
template <typename T>
class Adam {
 public:
  Adam(NamedParams<T> params, double lr, double beta1, double beta2, double eps);

  /// Applies one update from the parameters' current gradients.
  void step();
  void zero_grad();
  /// Rescales gradients so their global norm is at most max_norm; returns
  /// the norm before clipping.
  double clip_grad_norm(double max_norm);
  std::size_t steps_taken() const { return t_; }

 private:
  NamedParams<T> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

/// Training window: k_hist input frames followed by `horizon` targets.
struct Window {
  std::size_t traj;
  std::size_t start;
};

/// Batch tensors for a list of windows: inputs[k] and targets[t] are (B, V, H, W).
template <typename T>
struct Batch {
  std::vector<Var<T>> inputs;
  std::vector<Var<T>> targets;
};

template <typename T>
Batch<T> make_batch(const Dataset& data, const std::vector<Window>& windows, std::size_t k_hist, std::size_t horizon);

/// Index split: the last ceil(val_fraction * n) trajectories (at least
/// one) form the validation set when n >= 2.
struct Split {
  std::size_t n_train;
  std::size_t n_val;
};
Split split_trajectories(std::size_t n_traj, double val_fraction);

/// Fixed validation windows: every trajectory, starts at multiples of
/// k_hist that leave room for the horizon.
std::vector<Window> validation_windows(const Dataset& val, std::size_t k_hist, std::size_t horizon);

/// L_step and gradients for one batch. Gradients accumulate into the
/// model parameters.
template <typename T>
double accumulate_step_gradients(const FinoModel<T>& model, const Batch<T>& batch, bool teacher_forcing);

/// Mean L_full over validation windows (forward only).
template <typename T>
double validation_loss(const FinoModel<T>& model, const Dataset& val, std::size_t k_hist, std::size_t horizon);

struct EpochRecord {
  std::size_t epoch;
  double l_step;
  double l_full;
  double wall_seconds;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 means the initial model was never beaten
  double best_l_full = 0.0;
};

/// Trains in place and leaves the best-validation parameters in `model`.
/// `on_epoch` (optional) observes each finished epoch.
template <typename T>
TrainResult train(FinoModel<T>& model, const Dataset& data, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace fino
