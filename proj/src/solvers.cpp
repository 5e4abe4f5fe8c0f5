#include "fino/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <tuple>

namespace fino {

namespace {

std::size_t wrap(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

void require_positive(double h, const char* name) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError(std::string(name) + " must be positive and finite");
}

std::vector<double> roll(std::span<const double> u, long shift) {
  const std::size_t n = u.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = u[wrap(static_cast<long>(i) - shift, n)];
  return out;
}

}  // namespace

Grid Grid::line(std::size_t n, double length, double origin) {
  Grid g;
  g.dims = 1;
  g.extents = {n};
  g.lengths = {length};
  g.origins = {origin};
  g.validate();
  return g;
}

Grid Grid::square(std::size_t n, double length, double origin) {
  Grid g;
  g.dims = 2;
  g.extents = {n, n};
  g.lengths = {length, length};
  g.origins = {origin, origin};
  g.validate();
  return g;
}

void Grid::validate() const {
  if (dims != 1 && dims != 2) throw ConfigError("grid dims must be 1 or 2");
  if (extents.size() != dims || lengths.size() != dims || origins.size() != dims)
    throw ConfigError("grid extents, lengths and origins need one entry per axis");
  for (std::size_t a = 0; a < dims; ++a) {
    if (extents[a] < 8) throw ConfigError("grid extent along axis " + std::to_string(a) + " is below 8");
    require_positive(lengths[a], "grid length");
    if (!std::isfinite(origins[a])) throw ConfigError("grid origin must be finite");
  }
}

std::string pde_name(const PdeSpec& spec) {
  switch (spec.index()) {
    case 0: return "advection1d";
    case 1: return "diffusion_reaction1d";
    default: return "diffusion_reaction2d";
  }
}

std::size_t pde_channels(const PdeSpec& spec) { return spec.index() == 2 ? 2 : 1; }

std::size_t pde_dims(const PdeSpec& spec) { return spec.index() == 2 ? 2 : 1; }

void validate_pde(const PdeSpec& spec) {
  if (const auto* a = std::get_if<Advection1D>(&spec)) {
    if (!std::isfinite(a->beta)) throw ConfigError("advection speed beta must be finite");
  } else if (const auto* d = std::get_if<DiffusionReaction1D>(&spec)) {
    require_positive(d->nu, "nu");
    require_positive(d->rho, "rho");
  } else {
    const auto& d2 = std::get<DiffusionReaction2D>(spec);
    require_positive(d2.du, "D_u");
    require_positive(d2.dv, "D_v");
    if (!(d2.k >= 0.0) || !std::isfinite(d2.k)) throw ConfigError("k must be non-negative and finite");
  }
}

std::vector<double> central_diff_1(std::span<const double> u, double h) {
  require_positive(h, "h");
  const std::size_t n = u.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long j = static_cast<long>(i);
    out[i] = (u[wrap(j + 1, n)] - u[wrap(j - 1, n)]) / (2.0 * h);
  }
  return out;
}

std::vector<double> central_diff_2(std::span<const double> u, double h) {
  require_positive(h, "h");
  const std::size_t n = u.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long j = static_cast<long>(i);
    out[i] = (u[wrap(j + 1, n)] - 2.0 * u[i] + u[wrap(j - 1, n)]) / (h * h);
  }
  return out;
}

std::vector<double> fourth_order_diff_1(std::span<const double> u, double h) {
  require_positive(h, "h");
  const std::size_t n = u.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long j = static_cast<long>(i);
    out[i] = (-u[wrap(j + 2, n)] + 8.0 * u[wrap(j + 1, n)] - 8.0 * u[wrap(j - 1, n)] + u[wrap(j - 2, n)]) /
             (12.0 * h);
  }
  return out;
}

Tensor<double> laplacian_5pt(const Tensor<double>& u, double hx, double hy) {
  require_positive(hx, "hx");
  require_positive(hy, "hy");
  if (u.rank() != 2) throw ShapeError("laplacian_5pt expects an (H, W) field, got " + shape_str(u.shape()));
  const std::size_t H = u.dim(0), W = u.dim(1);
  Tensor<double> out({H, W});
  const double ix = 1.0 / (hx * hx), iy = 1.0 / (hy * hy);
  for (std::size_t i = 0; i < H; ++i) {
    const std::size_t ip = wrap(static_cast<long>(i) + 1, H), im = wrap(static_cast<long>(i) - 1, H);
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t jp = wrap(static_cast<long>(j) + 1, W), jm = wrap(static_cast<long>(j) - 1, W);
      const double c = u[i * W + j];
      out[i * W + j] = (u[ip * W + j] - 2.0 * c + u[im * W + j]) * ix + (u[i * W + jp] - 2.0 * c + u[i * W + jm]) * iy;
    }
  }
  return out;
}

std::vector<double> advection_exact(std::span<const double> u0, double beta, double t, const Grid& grid) {
  const std::size_t n = u0.size();
  if (n != grid.width() || grid.dims != 1) throw ShapeError("advection_exact: row length does not match the 1-D grid");
  const double h = grid.spacing(0);
  const double L = grid.lengths[0];
  // Displacement in cells, reduced modulo one period.
  double cells = std::fmod(beta * t / h, static_cast<double>(n));
  if (cells < 0) cells += static_cast<double>(n);
  const double nearest = std::round(cells);
  if (std::abs(cells - nearest) <= 1e-9) return roll(u0, static_cast<long>(nearest));

  // Fourier interpolant: c_k = (1/n) sum_j u_j e^{-2 pi i k j / n}, evaluated at x_j - beta t.
  const double two_pi = 2.0 * std::numbers::pi;
  const double d = cells * h;  // physical shift in [0, L)
  const std::size_t half = n / 2;
  std::vector<double> ck_re(half + 1), ck_im(half + 1);
  for (std::size_t k = 0; k <= half; ++k) {
    double re = 0, im = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = two_pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      re += u0[j] * std::cos(ang);
      im -= u0[j] * std::sin(ang);
    }
    ck_re[k] = re / static_cast<double>(n);
    ck_im[k] = im / static_cast<double>(n);
  }
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double x = static_cast<double>(j) * h - d;
    double acc = ck_re[0];
    for (std::size_t k = 1; k <= half; ++k) {
      const double ang = two_pi * static_cast<double>(k) * x / L;
      // Conjugate pairs double every mode except the Nyquist one, whose
      // real interpolant is the cosine alone.
      const double w = (n % 2 == 0 && k == half) ? 1.0 : 2.0;
      acc += w * (ck_re[k] * std::cos(ang) - ck_im[k] * std::sin(ang));
    }
    out[j] = acc;
  }
  return out;
}

double dr1d_max_dt(double nu, const Grid& grid) {
  require_positive(nu, "nu");
  const double h = grid.spacing(0);
  return 0.25 * h * h / nu;
}

double dr2d_max_dt(double du, double dv, const Grid& grid) {
  if (grid.dims != 2) throw ConfigError("2-D diffusion-reaction needs a 2-D grid");
  const double hx = grid.spacing(0), hy = grid.spacing(1);
  return 0.25 / (std::max(du, dv) * (1.0 / (hx * hx) + 1.0 / (hy * hy)));
}

namespace {

void check_cfl(double dt, double max_dt, const char* what) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError(std::string(what) + ": dt must be positive");
  if (dt > max_dt * (1.0 + 1e-12)) {
    std::ostringstream os;
    os.precision(6);
    os << what << ": dt = " << dt << " violates the stability limit; largest stable dt is " << max_dt;
    throw CflError(os.str(), max_dt);
  }
}

}  // namespace

std::vector<double> dr1d_step(std::span<const double> u, double nu, double rho, double dt, const Grid& grid) {
  if (grid.dims != 1 || u.size() != grid.width()) throw ShapeError("dr1d_step: row length does not match the 1-D grid");
  check_cfl(dt, dr1d_max_dt(nu, grid), "dr1d_step");
  const std::vector<double> uxx = central_diff_2(u, grid.spacing(0));
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] + dt * (nu * uxx[i] + rho * u[i] * (1.0 - u[i]));
  return out;
}

std::pair<Tensor<double>, Tensor<double>> dr2d_step(const Tensor<double>& u, const Tensor<double>& v, double du,
                                                    double dv, double k, double dt, const Grid& grid) {
  const Shape expect{grid.height(), grid.width()};
  if (grid.dims != 2 || u.shape() != expect || v.shape() != expect)
    throw ShapeError("dr2d_step: fields must both be " + shape_str(expect));
  check_cfl(dt, dr2d_max_dt(du, dv, grid), "dr2d_step");
  const double hx = grid.spacing(0), hy = grid.spacing(1);
  const Tensor<double> lu = laplacian_5pt(u, hx, hy);
  const Tensor<double> lv = laplacian_5pt(v, hx, hy);
  Tensor<double> un(expect), vn(expect);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    un[i] = a + dt * (du * lu[i] + a - a * a * a - k - b);
    vn[i] = b + dt * (dv * lv[i] + a - b);
  }
  return {std::move(un), std::move(vn)};
}

std::size_t substeps_for(double dt_data, double max_dt) {
  if (!(dt_data > 0.0)) throw ConfigError("dt_data must be positive");
  const double target = 0.5 * max_dt;
  return static_cast<std::size_t>(std::ceil(dt_data / target - 1e-12));
}

Tensor<double> reference_step(const PdeSpec& spec, const Tensor<double>& state, double dt_data, const Grid& grid) {
  const Shape expect{pde_channels(spec), grid.height(), grid.width()};
  if (state.shape() != expect)
    throw ShapeError("reference_step: state " + shape_str(state.shape()) + " does not match " + shape_str(expect));
  if (const auto* a = std::get_if<Advection1D>(&spec)) {
    auto row = advection_exact(state.data(), a->beta, dt_data, grid);
    return Tensor<double>(expect, std::move(row));
  }
  if (const auto* d = std::get_if<DiffusionReaction1D>(&spec)) {
    const double max_dt = dr1d_max_dt(d->nu, grid);
    const std::size_t n = substeps_for(dt_data, max_dt);
    const double dt = dt_data / static_cast<double>(n);
    std::vector<double> u(state.data().begin(), state.data().end());
    for (std::size_t s = 0; s < n; ++s) u = dr1d_step(u, d->nu, d->rho, dt, grid);
    return Tensor<double>(expect, std::move(u));
  }
  const auto& d2 = std::get<DiffusionReaction2D>(spec);
  const double max_dt = dr2d_max_dt(d2.du, d2.dv, grid);
  const std::size_t n = substeps_for(dt_data, max_dt);
  const double dt = dt_data / static_cast<double>(n);
  const std::size_t plane = grid.sites();
  const Shape fs{grid.height(), grid.width()};
  Tensor<double> u(fs, std::vector<double>(state.data().begin(), state.data().begin() + plane));
  Tensor<double> v(fs, std::vector<double>(state.data().begin() + plane, state.data().end()));
  for (std::size_t s = 0; s < n; ++s) std::tie(u, v) = dr2d_step(u, v, d2.du, d2.dv, d2.k, dt, grid);
  std::vector<double> out(u.data().begin(), u.data().end());
  out.insert(out.end(), v.data().begin(), v.data().end());
  return Tensor<double>(expect, std::move(out));
}

}  // namespace fino
