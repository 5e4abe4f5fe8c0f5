#pragma once

#include <cstdint>
#include <vector>

#include "fino/solvers.hpp"

namespace fino {

/// One trajectory viewed out of a dataset.
struct Trajectory {
  Grid grid;
  std::vector<double> times;
  Tensor<double> frames;  // (T, V, H, W)
  PdeSpec spec;
};

/// Stack of trajectories sharing one PDE, grid and frame spacing.
struct Dataset {
  PdeSpec spec;
  Grid grid;
  double dt_data = 0.0;
  std::uint64_t seed = 0;
  Tensor<double> frames;  // (n_traj, T, V, H, W)

  std::size_t n_traj() const { return frames.dim(0); }
  std::size_t n_frames() const { return frames.dim(1); }
  std::size_t channels() const { return frames.dim(2); }
  std::size_t height() const { return frames.dim(3); }
  std::size_t width() const { return frames.dim(4); }
  std::size_t frame_size() const { return channels() * height() * width(); }

  /// Pointer to frame t of trajectory i, (V, H, W) contiguous.
  const double* frame_ptr(std::size_t i, std::size_t t) const;
  Tensor<double> frame(std::size_t i, std::size_t t) const;
  Trajectory trajectory(std::size_t i) const;
  /// Copy restricted to trajectories [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
};

/// Random band-limited initial state (V, H, W) for one trajectory: a
/// truncated Fourier series over modes 1..6 with standard normal
/// coefficients. Advection states are scaled to max |u| = 1;
/// diffusion-reaction states are rectified and scaled into [0, 1].
Tensor<double> random_initial_state(const PdeSpec& spec, const Grid& grid, std::uint64_t seed, std::uint64_t traj);

/// Deterministic dataset of n_traj trajectories with T_frames frames
/// spaced dt_data apart. Trajectory i draws its initial state from the
/// stream (seed, i), so the result does not depend on `threads`.
Dataset generate_dataset(const PdeSpec& spec, std::size_t n_traj, const Grid& grid, std::size_t T_frames,
                         double dt_data, std::uint64_t seed, std::size_t threads = 1);

}  // namespace fino
