#include "fino/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fino/log.hpp"
#include "fino/rng.hpp"

namespace fino {

void TrainConfig::validate() const {
  if (k_hist < 1) throw ConfigError("train.k_hist must be at least 1");
  if (horizon < 1) throw ConfigError("train.horizon must be at least 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train.eps must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be non-negative");
  if (windows_per_traj < 1) throw ConfigError("train.windows_per_traj must be at least 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must lie in (0, 1)");
}

template <typename T>
Tensor<T> coordinate_grid(std::size_t H, std::size_t W) {
  Tensor<T> g({2, H, W});
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      g[i * W + j] = W > 1 ? static_cast<T>(static_cast<double>(j) / static_cast<double>(W - 1)) : T(0);
      g[H * W + i * W + j] = H > 1 ? static_cast<T>(static_cast<double>(i) / static_cast<double>(H - 1)) : T(0);
    }
  }
  return g;
}

template <typename T>
void RollBuffer<T>::push(Var<T> frame) {
  if (!frames.empty() && frame.shape() != frames.back().shape())
    throw ShapeError("buffer frame " + shape_str(frame.shape()) + " differs from " + shape_str(frames.back().shape()));
  frames.push_back(std::move(frame));
  if (frames.size() > k_hist) frames.pop_front();
}

template <typename T>
Var<T> assemble_features(Tape<T>* tape, const RollBuffer<T>& buf) {
  if (!buf.full())
    throw ShapeError("buffer holds " + std::to_string(buf.frames.size()) + " of " + std::to_string(buf.k_hist) +
                     " frames");
  const Shape& fs = buf.frames.front().shape();
  const std::size_t B = fs[0], H = fs[2], W = fs[3];
  if (buf.coords.shape() != Shape{2, H, W}) throw ShapeError("coordinate grid does not match the frame extents");
  Tensor<T> c({B, 2, H, W});
  for (std::size_t b = 0; b < B; ++b) std::copy(buf.coords.ptr(), buf.coords.ptr() + 2 * H * W, c.ptr() + b * 2 * H * W);
  std::vector<Var<T>> parts(buf.frames.begin(), buf.frames.end());
  parts.emplace_back(std::move(c));
  return concat_channels(tape, parts);
}

template <typename T>
Predictor<T> model_predictor(const FinoModel<T>& model) {
  return [&model](Tape<T>* tape, const Var<T>& x) { return model.forward(tape, x); };
}

template <typename T>
std::vector<Var<T>> rollout(Tape<T>* tape, const Predictor<T>& predict, RollBuffer<T> buf, std::size_t steps,
                            const std::vector<Var<T>>* teacher) {
  if (steps < 1) throw ConfigError("rollout needs at least one step");
  if (teacher && teacher->size() < steps) throw ShapeError("teacher sequence shorter than the rollout");
  std::vector<Var<T>> preds;
  preds.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    Var<T> next = predict(tape, assemble_features(tape, buf));
    if (!next.value().all_finite()) throw NumericalError("non-finite prediction at rollout step " + std::to_string(s));
    preds.push_back(next);
    if (s + 1 < steps) buf.push(teacher ? (*teacher)[s] : next);
  }
  return preds;
}

template <typename T>
Var<T> stepwise_loss(Tape<T>* tape, const std::vector<Var<T>>& preds, const std::vector<Var<T>>& targets) {
  if (preds.empty() || preds.size() != targets.size())
    throw ShapeError("stepwise_loss needs equally many predictions and targets");
  Var<T> total;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    if (preds[t].shape() != targets[t].shape())
      throw ShapeError("prediction " + shape_str(preds[t].shape()) + " vs target " + shape_str(targets[t].shape()) +
                       " at step " + std::to_string(t));
    const T inv_b = T(1) / static_cast<T>(preds[t].shape()[0]);
    Var<T> term = scale(tape, sum_squares(tape, sub(tape, preds[t], targets[t])), inv_b);
    total = total.defined() ? add(tape, total, term) : term;
  }
  return total;
}

template <typename T>
double full_traj_loss(const Tensor<T>& pred_traj, const Tensor<T>& true_traj) {
  if (pred_traj.shape() != true_traj.shape())
    throw ShapeError("full_traj_loss: " + shape_str(pred_traj.shape()) + " vs " + shape_str(true_traj.shape()));
  if (pred_traj.rank() != 5) throw ShapeError("full_traj_loss expects (B, T, V, H, W)");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred_traj.size(); ++i) {
    const double d = static_cast<double>(pred_traj[i]) - static_cast<double>(true_traj[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred_traj.dim(0));
}

template <typename T>
Tensor<T> stack_steps(const std::vector<Var<T>>& steps) {
  if (steps.empty()) throw ShapeError("stack_steps needs at least one frame");
  const Shape& fs = steps.front().shape();
  const std::size_t B = fs[0], per = fs[1] * fs[2] * fs[3], S = steps.size();
  Tensor<T> out({B, S, fs[1], fs[2], fs[3]});
  for (std::size_t s = 0; s < S; ++s) {
    if (steps[s].shape() != fs) throw ShapeError("stack_steps: frame shapes differ");
    for (std::size_t b = 0; b < B; ++b)
      std::copy(steps[s].value().ptr() + b * per, steps[s].value().ptr() + (b + 1) * per, out.ptr() + (b * S + s) * per);
  }
  return out;
}

template <typename T>
Adam<T>::Adam(NamedParams<T> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.value().size(), 0.0);
    v_.emplace_back(p.value().size(), 0.0);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template <typename T>
double Adam<T>::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    for (T g : p.grad().data()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& [name, p] : params_)
      if (p.has_grad())
        for (T& g : p.mutable_grad().data()) g *= f;
  }
  return norm;
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var<T>& p = params_[k].second;
    if (!p.has_grad()) continue;
    auto w = p.mutable_value().data();
    auto g = p.grad().data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      if (gi == 0.0 && m[i] == 0.0 && v[i] == 0.0) continue;
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      const double mh = m[i] / c1, vh = v[i] / c2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - lr_ * mh / (std::sqrt(vh) + eps_));
    }
  }
}

template <typename T>
Batch<T> make_batch(const Dataset& data, const std::vector<Window>& windows, std::size_t k_hist, std::size_t horizon) {
  if (windows.empty()) throw ShapeError("make_batch needs at least one window");
  const std::size_t B = windows.size(), V = data.channels(), H = data.height(), W = data.width();
  const std::size_t fs = data.frame_size();
  auto gather = [&](std::size_t offset) {
    Tensor<T> t({B, V, H, W});
    for (std::size_t b = 0; b < B; ++b) {
      const double* src = data.frame_ptr(windows[b].traj, windows[b].start + offset);
      for (std::size_t i = 0; i < fs; ++i) t[b * fs + i] = static_cast<T>(src[i]);
    }
    return Var<T>(std::move(t));
  };
  for (const auto& w : windows)
    if (w.start + k_hist + horizon > data.n_frames())
      throw ShapeError("window at frame " + std::to_string(w.start) + " runs past the trajectory end");
  Batch<T> batch;
  for (std::size_t k = 0; k < k_hist; ++k) batch.inputs.push_back(gather(k));
  for (std::size_t t = 0; t < horizon; ++t) batch.targets.push_back(gather(k_hist + t));
  return batch;
}

Split split_trajectories(std::size_t n_traj, double val_fraction) {
  if (n_traj < 2) throw ConfigError("training needs at least two trajectories for a validation split");
  std::size_t n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n_traj) - 1e-9));
  n_val = std::clamp<std::size_t>(n_val, 1, n_traj - 1);
  return {n_traj - n_val, n_val};
}

std::vector<Window> validation_windows(const Dataset& val, std::size_t k_hist, std::size_t horizon) {
  if (k_hist + horizon > val.n_frames())
    throw ConfigError("trajectories of " + std::to_string(val.n_frames()) + " frames are too short for k_hist + horizon");
  std::vector<Window> ws;
  for (std::size_t i = 0; i < val.n_traj(); ++i)
    for (std::size_t s = 0; s + k_hist + horizon <= val.n_frames(); s += k_hist) ws.push_back({i, s});
  return ws;
}

namespace {

template <typename T>
RollBuffer<T> buffer_from(const std::vector<Var<T>>& inputs) {
  const Shape& fs = inputs.front().shape();
  RollBuffer<T> buf(inputs.size(), coordinate_grid<T>(fs[2], fs[3]));
  for (const auto& f : inputs) buf.push(f);
  return buf;
}

}  // namespace

template <typename T>
double accumulate_step_gradients(const FinoModel<T>& model, const Batch<T>& batch, bool teacher_forcing) {
  Tape<T> tape;
  const auto preds = rollout(&tape, model_predictor(model), buffer_from(batch.inputs), batch.targets.size(),
                             teacher_forcing ? &batch.targets : nullptr);
  Var<T> loss = stepwise_loss(&tape, preds, batch.targets);
  const double value = static_cast<double>(loss.value()[0]);
  if (!std::isfinite(value)) return value;
  tape.backward(loss);
  return value;
}

template <typename T>
double validation_loss(const FinoModel<T>& model, const Dataset& val, std::size_t k_hist, std::size_t horizon) {
  const auto windows = validation_windows(val, k_hist, horizon);
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  for (std::size_t first = 0; first < windows.size(); first += kChunk) {
    const std::vector<Window> chunk(windows.begin() + first,
                                    windows.begin() + std::min(windows.size(), first + kChunk));
    const Batch<T> batch = make_batch<T>(val, chunk, k_hist, horizon);
    const auto preds = rollout<T>(nullptr, model_predictor(model), buffer_from(batch.inputs), horizon);
    // Stacked window 0:K+H; the K conditioning frames are exact and
    // contribute zero, so only the predicted part is compared.
    const Tensor<T> p = stack_steps(preds);
    const Tensor<T> u = stack_steps(batch.targets);
    total += full_traj_loss(p, u) * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(windows.size());
}

template <typename T>
TrainResult train(FinoModel<T>& model, const Dataset& data, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  const std::size_t expect = cfg.k_hist * data.channels() + 2;
  if (model.config().in_channels != expect)
    throw ConfigError("model.in_channels is " + std::to_string(model.config().in_channels) + " but k_hist * V + 2 = " +
                      std::to_string(expect));
  if (model.config().out_channels != data.channels())
    throw ConfigError("model.out_channels does not match the dataset's channel count");
  if (cfg.k_hist + cfg.horizon > data.n_frames())
    throw ConfigError("trajectories are too short for k_hist + horizon");

  const Split split = split_trajectories(data.n_traj(), cfg.val_fraction);
  const Dataset val = data.slice(split.n_train, data.n_traj());
  const std::size_t val_h = std::min(cfg.effective_val_horizon(), data.n_frames() - cfg.k_hist);

  TrainResult result;
  result.best_l_full = validation_loss(model, val, cfg.k_hist, val_h);
  FinoModel<T> best = model.clone();

  Adam<T> opt(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  Rng rng(cfg.seed, 0x7261696eULL);
  const std::size_t max_start = data.n_frames() - cfg.k_hist - cfg.horizon;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t last_finite = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<Window> windows;
    for (std::size_t i = 0; i < split.n_train; ++i)
      for (std::size_t r = 0; r < cfg.windows_per_traj; ++r) windows.push_back({i, rng.below(max_start + 1)});
    for (std::size_t i = windows.size(); i > 1; --i) std::swap(windows[i - 1], windows[rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t first = 0; first < windows.size(); first += cfg.batch_size) {
      const std::vector<Window> chunk(windows.begin() + first,
                                      windows.begin() + std::min(windows.size(), first + cfg.batch_size));
      const Batch<T> batch = make_batch<T>(data, chunk, cfg.k_hist, cfg.horizon);
      opt.zero_grad();
      const double l = accumulate_step_gradients(model, batch, cfg.teacher_forcing);
      if (!std::isfinite(l)) {
        std::ostringstream os;
        os << "training diverged (non-finite loss) in epoch " << epoch << "; last finite epoch was " << last_finite;
        throw NumericalError(os.str());
      }
      if (cfg.clip_norm > 0.0) opt.clip_grad_norm(cfg.clip_norm);
      opt.step();
      loss_sum += l;
      ++n_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.l_step = loss_sum / static_cast<double>(n_batches);
    rec.l_full = validation_loss(model, val, cfg.k_hist, val_h);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(rec.l_full)) {
      std::ostringstream os;
      os << "validation loss became non-finite in epoch " << epoch << "; last finite epoch was " << last_finite;
      throw NumericalError(os.str());
    }
    last_finite = epoch;
    if (rec.l_full < result.best_l_full) {
      result.best_l_full = rec.l_full;
      result.best_epoch = epoch;
      best.copy_parameters_from(model);
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  model.copy_parameters_from(best);
  return result;
}

#define FINO_INSTANTIATE_TRAINING(T)                                                                              \
  template Tensor<T> coordinate_grid<T>(std::size_t, std::size_t);                                               \
  template struct RollBuffer<T>;                                                                                 \
  template Var<T> assemble_features<T>(Tape<T>*, const RollBuffer<T>&);                                          \
  template Predictor<T> model_predictor<T>(const FinoModel<T>&);                                                 \
  template std::vector<Var<T>> rollout<T>(Tape<T>*, const Predictor<T>&, RollBuffer<T>, std::size_t,             \
                                          const std::vector<Var<T>>*);                                           \
  template Var<T> stepwise_loss<T>(Tape<T>*, const std::vector<Var<T>>&, const std::vector<Var<T>>&);            \
  template double full_traj_loss<T>(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> stack_steps<T>(const std::vector<Var<T>>&);                                                 \
  template class Adam<T>;                                                                                        \
  template Batch<T> make_batch<T>(const Dataset&, const std::vector<Window>&, std::size_t, std::size_t);         \
  template double accumulate_step_gradients<T>(const FinoModel<T>&, const Batch<T>&, bool);                      \
  template double validation_loss<T>(const FinoModel<T>&, const Dataset&, std::size_t, std::size_t);             \
  template TrainResult train<T>(FinoModel<T>&, const Dataset&, const TrainConfig&,                               \
                                const std::function<void(const EpochRecord&)>&);

FINO_INSTANTIATE_TRAINING(float)
FINO_INSTANTIATE_TRAINING(double)

}  // namespace fino
