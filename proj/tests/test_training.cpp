#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fino/training.hpp"
#include "gradcheck.hpp"

using namespace fino;
using fino::testing::random_tensor;

namespace {

using Td = Tensor<double>;
using V = Var<double>;

ModelConfig tiny_model(std::size_t k_hist, std::size_t V_ch = 1) {
  ModelConfig c;
  c.spatial_dims = 1;
  c.in_channels = k_hist * V_ch + 2;
  c.out_channels = V_ch;
  c.levels = 1;
  c.channels_per_level = {4, 8};
  c.blocks_per_stage = 1;
  c.stencil_channels = 4;
  return c;
}

// Every trajectory is a constant field c_i in space and time.
Dataset constant_dataset(std::size_t n_traj, std::size_t T, std::size_t W) {
  Dataset d;
  d.spec = Advection1D{};
  d.grid = Grid::line(W);
  d.dt_data = 0.01;
  d.frames = Td({n_traj, T, 1, 1, W});
  for (std::size_t i = 0; i < n_traj; ++i)
    for (std::size_t j = 0; j < T * W; ++j) d.frames[i * T * W + j] = 0.2 + 0.6 * static_cast<double>(i) / n_traj;
  return d;
}

RollBuffer<double> buffer_of(std::size_t k, const std::vector<Td>& frames) {
  RollBuffer<double> b(k, coordinate_grid<double>(frames.front().dim(2), frames.front().dim(3)));
  for (const auto& f : frames) b.push(V(f));
  return b;
}

}  // namespace

TEST_CASE("feature assembly channel counts") {
  for (auto [k, v] : {std::pair<std::size_t, std::size_t>{10, 1}, {1, 2}, {3, 2}}) {
    std::vector<Td> frames(k, Td({2, v, 4, 8}, 1.0));
    const V f = assemble_features<double>(nullptr, buffer_of(k, frames));
    CHECK(f.shape() == Shape{2, k * v + 2, 4, 8});
  }
  CHECK(assemble_features<double>(nullptr, buffer_of(10, std::vector<Td>(10, Td({1, 1, 1, 64})))).shape()[1] == 12);

  // Coordinate channels do not depend on the buffer.
  Rng rng(1);
  const V a = assemble_features<double>(nullptr, buffer_of(2, {random_tensor({1, 1, 4, 8}, rng), random_tensor({1, 1, 4, 8}, rng)}));
  const V b = assemble_features<double>(nullptr, buffer_of(2, {random_tensor({1, 1, 4, 8}, rng), random_tensor({1, 1, 4, 8}, rng)}));
  for (std::size_t c = 2; c < 4; ++c)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 8; ++w) CHECK(a.value().at(0, c, h, w) == b.value().at(0, c, h, w));

  const Td g = coordinate_grid<double>(4, 8);
  CHECK(g.at(0, 0, 0, 7) == 0.0 + 1.0 - 0.0);  // x at the last column
  CHECK(g[0 * 32 + 0] == 0.0);
  CHECK(g[1 * 32 + 3 * 8] == 1.0);  // y at the last row
  const Td line = coordinate_grid<double>(1, 5);
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(line[j] == doctest::Approx(j / 4.0).epsilon(1e-15));
    CHECK(line[5 + j] == 0.0);
  }

  RollBuffer<double> partial(3, coordinate_grid<double>(1, 8));
  partial.push(V(Td({1, 1, 1, 8})));
  CHECK_THROWS_AS(assemble_features<double>(nullptr, partial), ShapeError);
}

TEST_CASE("rollout with stub predictors") {
  const std::size_t k = 4, W = 8;
  Rng rng(2);
  std::vector<Td> init;
  for (std::size_t i = 0; i < k; ++i) init.push_back(random_tensor({1, 1, 1, W}, rng));

  // Identity on the newest frame: channel k-1 of the features.
  Predictor<double> last = [&](Tape<double>*, const V& x) {
    Td out({1, 1, 1, W});
    for (std::size_t j = 0; j < W; ++j) out[j] = x.value().at(0, k - 1, 0, j);
    return V(out);
  };
  const auto preds = rollout<double>(nullptr, last, buffer_of(k, init), 6);
  REQUIRE(preds.size() == 6);
  for (const auto& p : preds) CHECK(p.value() == init.back());

  int calls = 0;
  std::vector<Td> seen;
  Predictor<double> constant = [&](Tape<double>*, const V& x) {
    ++calls;
    seen.push_back(x.value());
    return V(Td({1, 1, 1, W}, 7.5));
  };
  CHECK(rollout<double>(nullptr, constant, buffer_of(k, init), 1).size() == 1);
  CHECK(calls == 1);

  // After 3 shift-appends the buffer seen by a 4th call holds c in its last 3 slots.
  for (std::size_t kk : {2u, 4u}) {
    seen.clear();
    std::vector<Td> ini(init.begin(), init.begin() + kk);
    rollout<double>(nullptr, constant, buffer_of(kk, ini), 4);
    REQUIRE(seen.size() == 4);
    const Td& x = seen[3];
    const std::size_t filled = std::min<std::size_t>(3, kk);
    for (std::size_t slot = 0; slot < kk; ++slot)
      for (std::size_t j = 0; j < W; ++j) {
        if (slot >= kk - filled) {
          CHECK(x.at(0, slot, 0, j) == 7.5);
        } else {
          CHECK(x.at(0, slot, 0, j) == ini[slot + filled].at(0, 0, 0, j));
        }
      }
  }

  Predictor<double> bad = [&](Tape<double>*, const V&) { return V(Td({1, 1, 1, W}, std::nan(""))); };
  try {
    rollout<double>(nullptr, bad, buffer_of(k, init), 3);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }

  // Teacher forcing shifts in the given frames instead of predictions.
  std::vector<V> teacher;
  for (int s = 0; s < 3; ++s) teacher.push_back(V(Td({1, 1, 1, W}, -1.0 - s)));
  seen.clear();
  rollout<double>(nullptr, constant, buffer_of(k, init), 3, &teacher);
  for (std::size_t j = 0; j < W; ++j) {
    CHECK(seen[2].at(0, k - 1, 0, j) == -2.0);
    CHECK(seen[2].at(0, k - 2, 0, j) == -1.0);
  }
}

TEST_CASE("loss examples") {
  Rng rng(3);
  const Td a = random_tensor({2, 1, 1, 16}, rng);
  CHECK(stepwise_loss<double>(nullptr, {V(a)}, {V(a)}).value()[0] == 0.0);

  Td t({1, 1, 1, 10}, 1.0), p({1, 1, 1, 10}, 1.0);
  for (std::size_t j = 0; j < 4; ++j) p[j] += 0.25;
  CHECK(stepwise_loss<double>(nullptr, {V(p)}, {V(t)}).value()[0] == doctest::Approx(4 * 0.0625).epsilon(1e-15));

  const Td b = random_tensor({2, 1, 1, 16}, rng), c = random_tensor({2, 1, 1, 16}, rng), d = random_tensor({2, 1, 1, 16}, rng);
  const double l1 = stepwise_loss<double>(nullptr, {V(a)}, {V(b)}).value()[0];
  const double l2 = stepwise_loss<double>(nullptr, {V(c)}, {V(d)}).value()[0];
  CHECK(stepwise_loss<double>(nullptr, {V(a), V(c)}, {V(b), V(d)}).value()[0] == doctest::Approx(l1 + l2).epsilon(1e-14));
  CHECK_THROWS_AS(stepwise_loss<double>(nullptr, {V(a)}, {V(Td({2, 1, 1, 8}))}), ShapeError);
  CHECK_THROWS_AS(stepwise_loss<double>(nullptr, {V(a), V(c)}, {V(b)}), ShapeError);

  // Full-trajectory loss equals the stepwise sum with matching normalisation.
  const Td P = stack_steps<double>({V(a), V(c)}), U = stack_steps<double>({V(b), V(d)});
  CHECK(P.shape() == Shape{2, 2, 1, 1, 16});
  CHECK(full_traj_loss(P, U) == doctest::Approx(l1 + l2).epsilon(1e-13));
  CHECK(full_traj_loss(P, P) == 0.0);
  Td P2 = P;
  for (std::size_t i = 0; i < P2.size(); ++i) P2[i] = U[i] + 2.0 * (P[i] - U[i]);
  CHECK(full_traj_loss(P2, U) == doctest::Approx(4.0 * full_traj_loss(P, U)).epsilon(1e-13));
  CHECK_THROWS_AS(full_traj_loss(P, Td({2, 2, 1, 1, 8})), ShapeError);
}

TEST_CASE("adam") {
  auto m = FinoModel<double>(tiny_model(2), 1);
  const NamedParams<double> ps = m.parameters();
  std::vector<Td> before;
  for (const auto& [n, p] : ps) before.push_back(p.value());
  Adam<double> opt(ps, 1e-3, 0.9, 0.999, 1e-8);
  opt.zero_grad();
  for (int i = 0; i < 3; ++i) opt.step();
  for (std::size_t i = 0; i < ps.size(); ++i) CHECK(ps[i].second.value() == before[i]);
  CHECK(opt.steps_taken() == 3);

  // First step moves every parameter with nonzero gradient by lr against its sign.
  Var<double> w(Td({3}, {1.0, 2.0, 3.0}), true);
  Adam<double> o2({{"w", w}}, 0.1, 0.9, 0.999, 1e-8);
  w.zero_grad();
  w.mutable_grad() = Td({3}, {0.5, -2.0, 0.0});
  o2.step();
  CHECK(w.value()[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(w.value()[1] == doctest::Approx(2.1).epsilon(1e-7));
  CHECK(w.value()[2] == 3.0);

  w.mutable_grad() = Td({3}, {3.0, 4.0, 0.0});
  CHECK(o2.clip_grad_norm(1.0) == doctest::Approx(5.0));
  CHECK(w.grad()[0] == doctest::Approx(0.6));
  CHECK(w.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("splits and windows") {
  CHECK(split_trajectories(500, 0.1).n_val == 50);
  CHECK(split_trajectories(10, 0.1).n_val == 1);
  CHECK(split_trajectories(3, 0.1).n_val == 1);
  CHECK(split_trajectories(8, 0.5).n_train == 4);
  CHECK_THROWS_AS(split_trajectories(1, 0.1), ConfigError);

  const Dataset d = constant_dataset(3, 25, 8);
  const auto ws = validation_windows(d, 10, 2);
  CHECK(ws.size() == 3 * 2);  // starts 0 and 10
  for (const auto& w : ws) CHECK(w.start + 12 <= 25);
  CHECK_THROWS_AS(validation_windows(d, 20, 6), ConfigError);

  const Batch<double> b = make_batch<double>(d, {{0, 0}, {2, 3}}, 4, 2);
  CHECK(b.inputs.size() == 4);
  CHECK(b.targets.size() == 2);
  CHECK(b.inputs[0].shape() == Shape{2, 1, 1, 8});
  CHECK(b.targets[1].value().at(1, 0, 0, 0) == d.frames[(2 * 25 + 3 + 5) * 8]);
  CHECK_THROWS_AS(make_batch<double>(d, {{0, 20}}, 4, 2), ShapeError);
}

TEST_CASE("zero-epoch training leaves the model unchanged") {
  const Dataset d = constant_dataset(6, 8, 16);
  FinoModel<double> m(tiny_model(2), 5);
  const FinoModel<double> orig = m.clone();
  TrainConfig cfg;
  cfg.k_hist = 2;
  cfg.epochs = 0;
  cfg.batch_size = 4;
  const TrainResult r = train(m, d, cfg);
  CHECK(r.history.empty());
  CHECK(r.best_epoch == 0);
  const auto a = m.parameters(), b = orig.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].second.value() == b[i].second.value());

  cfg.k_hist = 3;
  CHECK_THROWS_AS(train(m, d, cfg), ConfigError);
}

TEST_CASE("constant trajectories are fitted and the loss trends down") {
  // Constant-function fit: every frame of every trajectory equals 0.5.
  Dataset d = constant_dataset(40, 6, 16);
  d.frames.fill(0.5);
  FinoModel<double> m(tiny_model(2), 6);
  TrainConfig cfg;
  cfg.k_hist = 2;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.windows_per_traj = 16;
  cfg.seed = 3;
  const TrainResult r = train(m, d, cfg);
  REQUIRE(r.history.size() == 200);
  double best = r.history.front().l_step;
  for (const auto& e : r.history) best = std::min(best, e.l_step);
  CHECK(best < 1e-6);

  std::vector<double> medians;
  for (std::size_t s = 0; s + 20 <= r.history.size(); s += 20) {
    std::vector<double> w;
    for (std::size_t e = s; e < s + 20; ++e) w.push_back(r.history[e].l_step);
    std::nth_element(w.begin(), w.begin() + 10, w.end());
    medians.push_back(w[10]);
  }
  for (std::size_t i = 1; i < medians.size(); ++i) CHECK(medians[i] <= medians[i - 1]);
}

TEST_CASE("training history is deterministic") {
  const Dataset d = generate_dataset(Advection1D{}, 12, Grid::line(16), 8, 1.0 / 64.0, 4);
  TrainConfig cfg;
  cfg.k_hist = 2;
  cfg.horizon = 2;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 9;
  auto run = [&] {
    FinoModel<float> m(tiny_model(2), 2);
    return train(m, d, cfg).history;
  };
  const auto h1 = run(), h2 = run();
  REQUIRE(h1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(h1[i].l_step == h2[i].l_step);
    CHECK(h1[i].l_full == h2[i].l_full);
  }
}

TEST_CASE("gradients flow through the unrolled rollout") {
  const Dataset d = generate_dataset(Advection1D{}, 4, Grid::line(16), 8, 1.0 / 64.0, 5);
  FinoModel<double> m(tiny_model(2), 3);
  const Batch<double> b2 = make_batch<double>(d, {{0, 0}, {1, 2}}, 2, 2);

  // With horizon 2, the second step's loss depends on the first prediction:
  // its gradient differs from the stop-gradient (teacher forced) ablation.
  auto grads = [&](bool tf) {
    for (auto& [n, p] : m.parameters()) p.zero_grad();
    accumulate_step_gradients(m, b2, tf);
    std::vector<Td> g;
    for (const auto& [n, p] : m.parameters()) g.push_back(p.grad());
    return g;
  };
  const auto free_run = grads(false), forced = grads(true);
  double diff = 0, norm = 0;
  for (std::size_t i = 0; i < free_run.size(); ++i)
    for (std::size_t j = 0; j < free_run[i].size(); ++j) {
      diff = std::max(diff, std::abs(free_run[i][j] - forced[i][j]));
      norm = std::max(norm, std::abs(free_run[i][j]));
    }
  CHECK(norm > 0.0);
  CHECK(diff > 1e-9 * norm);

  // Reverse-mode gradient of the two-step loss against finite differences.
  Rng rng(4);
  std::vector<V> params;
  for (const auto& [n, p] : m.parameters()) params.push_back(p);
  auto loss = [&](Tape<double>* t) {
    RollBuffer<double> buf(2, coordinate_grid<double>(1, 16));
    for (const auto& f : b2.inputs) buf.push(f);
    return stepwise_loss(t, rollout(t, model_predictor(m), buf, 2), b2.targets);
  };
  CHECK(fino::testing::grad_check(loss, params).rel_error() <= 1e-4);
}

TEST_CASE("validation loss of a perfect predictor is zero") {
  const Dataset d = constant_dataset(4, 12, 8);
  auto m = FinoModel<double>::zeros(tiny_model(2));
  // Zero model predicts zero; validation loss equals the mean target energy.
  const double l = validation_loss(m, d, 2, 3);
  double expect = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double c = 0.2 + 0.6 * i / 4.0;
    expect += 3 * 8 * c * c;
  }
  expect /= 4.0;
  CHECK(l == doctest::Approx(expect).epsilon(1e-12));
}
