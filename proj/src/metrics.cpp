#include "fino/metrics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace fino {

namespace {

void check_pair(const Tensor<double>& pred, const Tensor<double>& target, const char* what) {
  if (pred.shape() != target.shape())
    throw ShapeError(std::string(what) + ": prediction " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target.shape()));
  if (pred.rank() != 5) throw ShapeError(std::string(what) + " expects (n_traj, T, V, H, W)");
}

Tensor<double> traj_slice(const Tensor<double>& x, std::size_t i) {
  Shape s = x.shape();
  s[0] = 1;
  const std::size_t per = shape_numel(s);
  return Tensor<double>(s, std::vector<double>(x.ptr() + i * per, x.ptr() + (i + 1) * per));
}

// FFTW's planner is not thread-safe; execution on distinct arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

BandCuts default_band_cuts(std::size_t H, std::size_t W) {
  const std::size_t n = H > 1 ? std::min(H, W) : W;
  const double s = static_cast<double>(n) / 64.0;
  return {std::max(1.0, std::round(4.0 * s)), std::max(2.0, std::round(12.0 * s))};
}

double rmse(const Tensor<double>& pred, const Tensor<double>& target) {
  check_pair(pred, target, "rmse");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double nrmse(const Tensor<double>& pred, const Tensor<double>& target) {
  check_pair(pred, target, "nrmse");
  const std::size_t n = pred.dim(0), per = pred.size() / n;
  double total = 0;
  for (std::size_t t = 0; t < n; ++t) {
    double err = 0, ref = 0;
    for (std::size_t i = t * per; i < (t + 1) * per; ++i) {
      const double d = pred[i] - target[i];
      err += d * d;
      ref += target[i] * target[i];
    }
    if (ref == 0.0) throw NumericalError("nrmse: target of trajectory " + std::to_string(t) + " is identically zero");
    total += std::sqrt(err / ref);
  }
  return total / static_cast<double>(n);
}

double max_error(const Tensor<double>& pred, const Tensor<double>& target) {
  check_pair(pred, target, "max_error");
  double m = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) m = std::max(m, std::abs(pred[i] - target[i]));
  return m;
}

double crmse(const Tensor<double>& pred, const Tensor<double>& target) {
  check_pair(pred, target, "crmse");
  const std::size_t plane = pred.dim(3) * pred.dim(4), planes = pred.size() / plane;
  double acc = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    double mp = 0, mt = 0;
    for (std::size_t i = p * plane; i < (p + 1) * plane; ++i) {
      mp += pred[i];
      mt += target[i];
    }
    const double d = (mp - mt) / static_cast<double>(plane);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(planes));
}

Bands frmse_bands(const Tensor<double>& pred, const Tensor<double>& target, BandCuts cuts) {
  check_pair(pred, target, "frmse_bands");
  const std::size_t H = pred.dim(3), W = pred.dim(4), plane = H * W, planes = pred.size() / plane;
  if (!(cuts.k1 > 0) || !(cuts.k2 > cuts.k1)) throw ConfigError("band cuts need 0 < k1 < k2");
  const double need = 2.0 * cuts.k2;
  if (static_cast<double>(W) < need || (H > 1 && static_cast<double>(H) < need))
    throw ConfigError("band cut k2 = " + std::to_string(cuts.k2) + " exceeds half the spatial extent");

  // Band index of every (kx, ky) bin, with signed frequencies.
  std::vector<int> band(plane);
  for (std::size_t i = 0; i < H; ++i) {
    const double ky = static_cast<double>(i <= H / 2 ? static_cast<long>(i) : static_cast<long>(i) - static_cast<long>(H));
    for (std::size_t j = 0; j < W; ++j) {
      const double kx = static_cast<double>(j <= W / 2 ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(W));
      const double k = std::sqrt(kx * kx + ky * ky);
      band[i * W + j] = k <= cuts.k1 ? 0 : (k <= cuts.k2 ? 1 : 2);
    }
  }

  fftw_complex* buf = fftw_alloc_complex(plane);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(H), static_cast<int>(W), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  double energy[3] = {0, 0, 0};
  const double inv_n = 1.0 / static_cast<double>(plane);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < plane; ++i) {
      buf[i][0] = pred[p * plane + i] - target[p * plane + i];
      buf[i][1] = 0.0;
    }
    fftw_execute(plan);
    for (std::size_t i = 0; i < plane; ++i) {
      const double re = buf[i][0] * inv_n, im = buf[i][1] * inv_n;
      energy[band[i]] += re * re + im * im;
    }
  }
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  const double np = static_cast<double>(planes);
  return {std::sqrt(energy[0] / np), std::sqrt(energy[1] / np), std::sqrt(energy[2] / np)};
}

MetricsReport compute_metrics(const Tensor<double>& pred, const Tensor<double>& target, BandCuts cuts) {
  MetricsReport r;
  r.rmse = rmse(pred, target);
  r.nrmse = nrmse(pred, target);
  r.max_error = max_error(pred, target);
  r.crmse = crmse(pred, target);
  const Bands b = frmse_bands(pred, target, cuts);
  r.frmse_low = b.low;
  r.frmse_mid = b.mid;
  r.frmse_high = b.high;
  return r;
}

std::vector<MetricsReport> per_trajectory_metrics(const Tensor<double>& pred, const Tensor<double>& target,
                                                  BandCuts cuts) {
  check_pair(pred, target, "per_trajectory_metrics");
  std::vector<MetricsReport> out;
  for (std::size_t i = 0; i < pred.dim(0); ++i) out.push_back(compute_metrics(traj_slice(pred, i), traj_slice(target, i), cuts));
  return out;
}

}  // namespace fino
