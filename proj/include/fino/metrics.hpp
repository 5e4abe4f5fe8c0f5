#pragma once

#include <vector>

#include "fino/tensor.hpp"

namespace fino {

// Error metrics over stacked trajectories (n_traj, T, V, H, W). Frames are
// compared plane by plane; spatial axes are the last two.

struct MetricsReport {
  double rmse = 0;
  double nrmse = 0;
  double max_error = 0;
  double crmse = 0;
  double frmse_low = 0;
  double frmse_mid = 0;
  double frmse_high = 0;
};

/// Radial wavenumber cut-offs: low is [0, k1], mid (k1, k2], high (k2, ..].
struct BandCuts {
  double k1 = 4;
  double k2 = 12;
};

/// Cuts 4 and 12 for a 64-point axis, scaled with the smallest spatial
/// extent of the grid (never below 1 and 2).
BandCuts default_band_cuts(std::size_t H, std::size_t W);

double rmse(const Tensor<double>& pred, const Tensor<double>& target);
/// Per-trajectory RMSE over the target's RMS, averaged over trajectories.
double nrmse(const Tensor<double>& pred, const Tensor<double>& target);
double max_error(const Tensor<double>& pred, const Tensor<double>& target);
/// RMS over (traj, frame, channel) of the difference of spatial means.
double crmse(const Tensor<double>& pred, const Tensor<double>& target);

struct Bands {
  double low = 0;
  double mid = 0;
  double high = 0;
};

/// DFT (scaled by 1/(H W)) of the residual of every plane; each band value
/// is the square root of the plane-averaged coefficient energy in the band,
/// so low^2 + mid^2 + high^2 = rmse^2.
Bands frmse_bands(const Tensor<double>& pred, const Tensor<double>& target, BandCuts cuts);

MetricsReport compute_metrics(const Tensor<double>& pred, const Tensor<double>& target, BandCuts cuts);
/// One report per trajectory, in trajectory order.
std::vector<MetricsReport> per_trajectory_metrics(const Tensor<double>& pred, const Tensor<double>& target,
                                                  BandCuts cuts);

}  // namespace fino
