#include "fino/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "fino/log.hpp"
#include "fino/rng.hpp"

namespace fino {

namespace {

constexpr int kMaxMode = 6;

// Sum of a_k cos + b_k sin over modes 1..6 on a row.
void fourier_row(Rng& rng, const Grid& grid, double* out) {
  const std::size_t n = grid.width();
  const double L = grid.lengths[0];
  std::fill(out, out + n, 0.0);
  for (int k = 1; k <= kMaxMode; ++k) {
    const double a = rng.normal(), b = rng.normal();
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = 2.0 * std::numbers::pi * k * (grid.coord(0, j) - grid.origins[0]) / L;
      out[j] += a * std::cos(ang) + b * std::sin(ang);
    }
  }
}

// Modes (kx, ky) with max(|kx|, |ky|) in 1..6, one per +-k pair.
void fourier_plane(Rng& rng, const Grid& grid, double* out) {
  const std::size_t H = grid.height(), W = grid.width();
  std::fill(out, out + H * W, 0.0);
  for (int kx = 0; kx <= kMaxMode; ++kx) {
    for (int ky = -kMaxMode; ky <= kMaxMode; ++ky) {
      if (kx == 0 && ky <= 0) continue;
      const double a = rng.normal(), b = rng.normal();
      for (std::size_t i = 0; i < H; ++i) {
        const double x = (grid.coord(0, i) - grid.origins[0]) / grid.lengths[0];
        for (std::size_t j = 0; j < W; ++j) {
          const double y = (grid.coord(1, j) - grid.origins[1]) / grid.lengths[1];
          const double ang = 2.0 * std::numbers::pi * (kx * x + ky * y);
          out[i * W + j] += a * std::cos(ang) + b * std::sin(ang);
        }
      }
    }
  }
}

void normalize(double* p, std::size_t n, bool rectify) {
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rectify) p[i] = std::abs(p[i]);
    peak = std::max(peak, std::abs(p[i]));
  }
  if (peak > 0.0)
    for (std::size_t i = 0; i < n; ++i) p[i] /= peak;
}

}  // namespace

const double* Dataset::frame_ptr(std::size_t i, std::size_t t) const {
  if (i >= n_traj() || t >= n_frames()) throw ShapeError("dataset index out of range");
  return frames.ptr() + (i * n_frames() + t) * frame_size();
}

Tensor<double> Dataset::frame(std::size_t i, std::size_t t) const {
  const double* p = frame_ptr(i, t);
  return Tensor<double>({channels(), height(), width()}, std::vector<double>(p, p + frame_size()));
}

Trajectory Dataset::trajectory(std::size_t i) const {
  const double* p = frame_ptr(i, 0);
  Trajectory tr;
  tr.grid = grid;
  tr.spec = spec;
  tr.times.resize(n_frames());
  for (std::size_t t = 0; t < n_frames(); ++t) tr.times[t] = static_cast<double>(t) * dt_data;
  tr.frames = Tensor<double>({n_frames(), channels(), height(), width()},
                             std::vector<double>(p, p + n_frames() * frame_size()));
  return tr;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > n_traj()) throw ShapeError("dataset slice out of range");
  Dataset d = *this;
  Shape s = frames.shape();
  s[0] = end - begin;
  const std::size_t per = n_frames() * frame_size();
  d.frames = Tensor<double>(s, std::vector<double>(frames.ptr() + begin * per, frames.ptr() + end * per));
  return d;
}

Tensor<double> random_initial_state(const PdeSpec& spec, const Grid& grid, std::uint64_t seed, std::uint64_t traj) {
  const std::size_t V = pde_channels(spec), plane = grid.sites();
  Tensor<double> s({V, grid.height(), grid.width()});
  Rng rng(seed, traj);
  const bool rectify = spec.index() != 0;
  for (std::size_t v = 0; v < V; ++v) {
    double* p = s.ptr() + v * plane;
    if (grid.dims == 1)
      fourier_row(rng, grid, p);
    else
      fourier_plane(rng, grid, p);
    normalize(p, plane, rectify);
  }
  return s;
}

Dataset generate_dataset(const PdeSpec& spec, std::size_t n_traj, const Grid& grid, std::size_t T_frames,
                         double dt_data, std::uint64_t seed, std::size_t threads) {
  validate_pde(spec);
  grid.validate();
  if (grid.dims != pde_dims(spec)) throw ConfigError(pde_name(spec) + " needs a " + std::to_string(pde_dims(spec)) + "-D grid");
  if (n_traj == 0) throw ConfigError("n_traj must be at least 1");
  if (T_frames == 0) throw ConfigError("T_frames must be at least 1");
  if (!(dt_data > 0.0) || !std::isfinite(dt_data)) throw ConfigError("dt_data must be positive");

  if (spec.index() != 0) {
    const double max_dt = spec.index() == 1
                              ? dr1d_max_dt(std::get<DiffusionReaction1D>(spec).nu, grid)
                              : dr2d_max_dt(std::get<DiffusionReaction2D>(spec).du, std::get<DiffusionReaction2D>(spec).dv, grid);
    const std::size_t n = substeps_for(dt_data, max_dt);
    const double ratio = dt_data / (0.5 * max_dt);
    if (std::abs(ratio - std::round(ratio)) > 1e-9) {
      std::ostringstream os;
      os << "solver dt adjusted down from " << 0.5 * max_dt << " to " << dt_data / static_cast<double>(n) << " ("
         << n << " substeps per frame)";
      log_info(os.str());
    }
  }

  Dataset ds;
  ds.spec = spec;
  ds.grid = grid;
  ds.dt_data = dt_data;
  ds.seed = seed;
  const std::size_t V = pde_channels(spec), fs = V * grid.sites();
  ds.frames = Tensor<double>({n_traj, T_frames, V, grid.height(), grid.width()});

  auto run = [&](std::size_t i) {
    double* dst = ds.frames.ptr() + i * T_frames * fs;
    Tensor<double> state = random_initial_state(spec, grid, seed, i);
    std::copy(state.ptr(), state.ptr() + fs, dst);
    for (std::size_t t = 1; t < T_frames; ++t) {
      if (const auto* a = std::get_if<Advection1D>(&spec)) {
        // Each frame comes straight from the initial profile, so no error accumulates.
        const auto row = advection_exact(std::span<const double>(dst, fs), a->beta, static_cast<double>(t) * dt_data, grid);
        std::copy(row.begin(), row.end(), dst + t * fs);
      } else {
        state = reference_step(spec, state, dt_data, grid);
        if (!state.all_finite())
          throw NumericalError("trajectory " + std::to_string(i) + " became non-finite at frame " + std::to_string(t));
        std::copy(state.ptr(), state.ptr() + fs, dst + t * fs);
      }
    }
  };

  const std::size_t nt = std::max<std::size_t>(1, std::min(threads, n_traj));
  if (nt == 1) {
    for (std::size_t i = 0; i < n_traj; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nt);
    for (std::size_t w = 0; w < nt; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n_traj; i += nt) run(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return ds;
}

}  // namespace fino
