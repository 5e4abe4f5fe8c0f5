#pragma once

#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fino/tensor.hpp"

namespace fino {

/// Uniform periodic grid with the cell convention h = length / extent.
struct Grid {
  std::size_t dims = 1;
  std::vector<std::size_t> extents{64};
  std::vector<double> lengths{1.0};
  std::vector<double> origins{0.0};

  static Grid line(std::size_t n, double length = 1.0, double origin = 0.0);
  static Grid square(std::size_t n, double length, double origin);

  double spacing(std::size_t axis) const { return lengths.at(axis) / static_cast<double>(extents.at(axis)); }
  /// Coordinate of cell `i` along `axis`.
  double coord(std::size_t axis, std::size_t i) const {
    return origins.at(axis) + static_cast<double>(i) * spacing(axis);
  }
  /// (H, W) as stored in 4-D tensors; 1-D grids use H = 1.
  std::size_t height() const { return dims == 2 ? extents[0] : 1; }
  std::size_t width() const { return dims == 2 ? extents[1] : extents[0]; }
  std::size_t sites() const { return height() * width(); }

  void validate() const;
  bool operator==(const Grid&) const = default;
};

struct Advection1D {
  double beta = 4.0;
};
struct DiffusionReaction1D {
  double nu = 0.5;
  double rho = 1.0;
};
struct DiffusionReaction2D {
  double du = 1e-3;
  double dv = 5e-3;
  double k = 5e-3;
};

using PdeSpec = std::variant<Advection1D, DiffusionReaction1D, DiffusionReaction2D>;

std::string pde_name(const PdeSpec& spec);
/// Number of field components V.
std::size_t pde_channels(const PdeSpec& spec);
std::size_t pde_dims(const PdeSpec& spec);
void validate_pde(const PdeSpec& spec);

/// Raised when an explicit step exceeds its stability limit.
class CflError : public ConfigError {
 public:
  CflError(const std::string& what, double max_dt) : ConfigError(what), max_dt_(max_dt) {}
  double max_dt() const { return max_dt_; }

 private:
  double max_dt_;
};

// Periodic finite-difference stencils on a row.

/// (u[i+1] - u[i-1]) / (2h)
std::vector<double> central_diff_1(std::span<const double> u, double h);
/// (u[i+1] - 2u[i] + u[i-1]) / h^2
std::vector<double> central_diff_2(std::span<const double> u, double h);
/// (-u[i+2] + 8u[i+1] - 8u[i-1] + u[i-2]) / (12h)
std::vector<double> fourth_order_diff_1(std::span<const double> u, double h);
/// Five-point Laplacian of an (H, W) field; axis 0 uses hx, axis 1 uses hy.
Tensor<double> laplacian_5pt(const Tensor<double>& u, double hx, double hy);

/// u0(x - beta t) on the periodic grid. Whole-cell shifts are exact rolls;
/// other shifts evaluate the truncated Fourier interpolant of u0.
std::vector<double> advection_exact(std::span<const double> u0, double beta, double t, const Grid& grid);

/// Largest stable explicit step for 1-D diffusion-reaction (nu dt / h^2 <= 1/4).
double dr1d_max_dt(double nu, const Grid& grid);
/// Largest stable explicit step for the 2-D system.
double dr2d_max_dt(double du, double dv, const Grid& grid);

/// u + dt (nu u_xx + rho u (1 - u)).
std::vector<double> dr1d_step(std::span<const double> u, double nu, double rho, double dt, const Grid& grid);

/// Explicit Euler step of u_t = D_u lap u + u - u^3 - k - v, v_t = D_v lap v + u - v.
std::pair<Tensor<double>, Tensor<double>> dr2d_step(const Tensor<double>& u, const Tensor<double>& v, double du,
                                                    double dv, double k, double dt, const Grid& grid);

/// Integer number of solver substeps per data interval with solver dt at
/// most `max_dt / 2`.
std::size_t substeps_for(double dt_data, double max_dt);

/// Advances one state (V, H, W) by `dt_data` with the reference solver
/// of `spec` (exact shift for advection, substepped Euler otherwise).
Tensor<double> reference_step(const PdeSpec& spec, const Tensor<double>& state, double dt_data, const Grid& grid);

}  // namespace fino
