#pragma once

// Velocity-space kinetic operators on cell-centered grids:
//
//  * delta_average     — < delta(k.(v - v_*)) >_{M_beta(v_*)} in closed form
//  * diffusion_tensor  — D(v) = sum_k (k x k) pi Vhat(k)^2 <delta> / |eps(k, k.v)|^2
//  * fp_apply          — div( D (grad f + beta v f) ), staggered conservative flux
//  * fp_evolve         — relaxation under the same generator, ratio-form flux
//                        (exact discrete Maxwellian steady state, monotone H)
//  * llb_apply         — the full linearized collision operator with its
//                        nonlocal line-average exchange term (d = 2)
//  * lb_kernel_frozen  — the local diffusion kernel as assembled by the
//                        collision-operator route (cross-check of diffusion_tensor)
//  * weighted_norm     — Maxwellian-weighted Sobolev-type diagnostic norms
//
// Conventions: fields of kind density are distributions f(v); fields of kind
// ratio are g = f / M_beta.  All fluxes vanish on the outer box faces.

#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "lblab/common.hpp"
#include "lblab/dispersion.hpp"
#include "lblab/linalg.hpp"
#include "lblab/potential.hpp"
#include "lblab/vgrid.hpp"

namespace lblab {

// ---------------------------------------------------------------------------
// delta_average: Gaussian marginal of k.v_* evaluated at k.v.
inline double delta_average(double beta, const std::array<double, 3>& k,
                            const std::array<double, 3>& v) {
  double k2 = sq(k[0]) + sq(k[1]) + sq(k[2]);
  require(k2 > 0.0, "delta_average: zero wave vector");
  double k_abs = std::sqrt(k2);
  double u = (k[0] * v[0] + k[1] * v[1] + k[2] * v[2]) / k_abs;
  return std::sqrt(beta / two_pi) / k_abs * std::exp(-0.5 * beta * u * u);
}

// ---------------------------------------------------------------------------
// Symmetric diffusion tensor field on a grid (xx only in d = 1).
struct DiffusionField {
  VGrid grid;
  std::vector<double> xx, xy, yy;

  explicit DiffusionField(const VGrid& g) : grid(g), xx(g.size(), 0.0) {
    if (g.dim == 2) {
      xy.assign(g.size(), 0.0);
      yy.assign(g.size(), 0.0);
    }
  }

  // Smallest eigenvalue over all nodes (PSD diagnostic).
  double min_eigenvalue() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xx.size(); ++i) {
      if (grid.dim == 1) {
        m = std::min(m, xx[i]);
      } else {
        double tr = xx[i] + yy[i];
        double det = xx[i] * yy[i] - xy[i] * xy[i];
        double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
        m = std::min(m, 0.5 * tr - disc);
      }
    }
    return m;
  }
};

inline DiffusionField diffusion_tensor(double beta, const FourierPotential& pot,
                                       const VGrid& grid) {
  require(grid.dim == pot.dim() || pot.empty(),
          "diffusion_tensor: potential and grid dimensions differ");
  DiffusionField D(grid);
  for (const auto& mode : pot.full_modes()) {
    if (mode.coeff == 0.0) continue;
    double vhat2 = mode.coeff * mode.coeff;
    for (int i = 0; i < grid.n; ++i) {
      if (grid.dim == 1) {
        std::array<double, 3> v{grid.coord(i), 0.0, 0.0};
        double da = delta_average(beta, mode.k, v);
        double u_phase = mode.k[0] * v[0];
        double a2 = std::norm(epsilon_fp(beta, pot, mode.m, u_phase));
        D.xx[i] += mode.k[0] * mode.k[0] * pi * vhat2 * da / a2;
      } else {
        for (int j = 0; j < grid.n; ++j) {
          std::array<double, 3> v{grid.coord(i), grid.coord(j), 0.0};
          double da = delta_average(beta, mode.k, v);
          double u_phase = mode.k[0] * v[0] + mode.k[1] * v[1];
          double a2 = std::norm(epsilon_fp(beta, pot, mode.m, u_phase));
          double w = pi * vhat2 * da / a2;
          std::size_t id = grid.idx(i, j);
          D.xx[id] += mode.k[0] * mode.k[0] * w;
          D.xy[id] += mode.k[0] * mode.k[1] * w;
          D.yy[id] += mode.k[1] * mode.k[1] * w;
        }
      }
    }
  }
  require(D.min_eigenvalue() >= -1.0e-12, "diffusion_tensor: tensor not PSD");
  return D;
}

// ---------------------------------------------------------------------------
// fp_apply: conservative staggered divergence of D (grad f + beta v f).
namespace detail {

inline double face_avg(double a, double b) { return 0.5 * (a + b); }

}  // namespace detail

inline GridFn<double> fp_apply(double beta, const DiffusionField& D,
                               const GridFn<double>& f) {
  require(f.kind == FnKind::density, "fp_apply: expects a density field");
  require(f.grid == D.grid, "fp_apply: grid mismatch");
  const VGrid& g = f.grid;
  const double h = g.h();
  GridFn<double> out(g, FnKind::density);

  if (g.dim == 1) {
    std::vector<double> flux(g.n + 1, 0.0);  // flux[i] lives at face i
    for (int i = 1; i < g.n; ++i) {
      double Df = detail::face_avg(D.xx[i - 1], D.xx[i]);
      double vf = g.face(i);
      flux[i] = Df * ((f[i] - f[i - 1]) / h +
                      beta * vf * detail::face_avg(f[i - 1], f[i]));
    }
    for (int i = 0; i < g.n; ++i) out[i] = (flux[i + 1] - flux[i]) / h;
    return out;
  }

  // d = 2: per-axis fluxes; the cross term carries the face-averaged
  // transverse gradient.
  const int n = g.n;
  auto gradx = [&](int i, int j) {
    return (f.at(i + 1, j) - f.at(i, j)) / h;  // at x-face (i+1/2, j)
  };
  auto grady = [&](int i, int j) {
    return (f.at(i, j + 1) - f.at(i, j)) / h;  // at y-face (i, j+1/2)
  };
  auto central_y = [&](int i, int j) {  // d f / d v_y at node, one-sided at edges
    if (j == 0) return (f.at(i, 1) - f.at(i, 0)) / h;
    if (j == n - 1) return (f.at(i, n - 1) - f.at(i, n - 2)) / h;
    return (f.at(i, j + 1) - f.at(i, j - 1)) / (2.0 * h);
  };
  auto central_x = [&](int i, int j) {
    if (i == 0) return (f.at(1, j) - f.at(0, j)) / h;
    if (i == n - 1) return (f.at(n - 1, j) - f.at(n - 2, j)) / h;
    return (f.at(i + 1, j) - f.at(i - 1, j)) / (2.0 * h);
  };

  std::vector<double> fx(std::size_t(n + 1) * n, 0.0);  // x-face (i, j): i=0..n
  std::vector<double> fy(std::size_t(n) * (n + 1), 0.0);
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double vx = g.face(i), vy = g.coord(j);
      std::size_t a = g.idx(i - 1, j), b = g.idx(i, j);
      double dxx = detail::face_avg(D.xx[a], D.xx[b]);
      double dxy = detail::face_avg(D.xy[a], D.xy[b]);
      double jx = gradx(i - 1, j) + beta * vx * detail::face_avg(f[a], f[b]);
      double jy = detail::face_avg(central_y(i - 1, j), central_y(i, j)) +
                  beta * vy * detail::face_avg(f[a], f[b]);
      fx[std::size_t(i) * n + j] = dxx * jx + dxy * jy;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 1; j < n; ++j) {
      double vx = g.coord(i), vy = g.face(j);
      std::size_t a = g.idx(i, j - 1), b = g.idx(i, j);
      double dyy = detail::face_avg(D.yy[a], D.yy[b]);
      double dxy = detail::face_avg(D.xy[a], D.xy[b]);
      double jy = grady(i, j - 1) + beta * vy * detail::face_avg(f[a], f[b]);
      double jx = detail::face_avg(central_x(i, j - 1), central_x(i, j)) +
                  beta * vx * detail::face_avg(f[a], f[b]);
      fy[std::size_t(i) * (n + 1) + j] = dyy * jy + dxy * jx;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out.at(i, j) = (fx[std::size_t(i + 1) * n + j] - fx[std::size_t(i) * n + j] +
                      fy[std::size_t(i) * (n + 1) + j + 1] -
                      fy[std::size_t(i) * (n + 1) + j]) /
                     h;
  return out;
}

// Pure diffusion divergence div(C grad f), same staggered faces (d = 1).
inline GridFn<double> fp_apply_diffusion_only(const DiffusionField& C,
                                              const GridFn<double>& f) {
  require(f.grid == C.grid && f.grid.dim == 1,
          "fp_apply_diffusion_only: one-dimensional grids only");
  const VGrid& g = f.grid;
  const double h = g.h();
  GridFn<double> out(g, f.kind);
  std::vector<double> flux(g.n + 1, 0.0);
  for (int i = 1; i < g.n; ++i)
    flux[i] = detail::face_avg(C.xx[i - 1], C.xx[i]) * (f[i] - f[i - 1]) / h;
  for (int i = 0; i < g.n; ++i) out[i] = (flux[i + 1] - flux[i]) / h;
  return out;
}

// ---------------------------------------------------------------------------
// fp_evolve: relaxation d_t f = div(D (grad f + beta v f)) in ratio form
// g = f / M; the flux D_face M_face (g_{i+1} - g_i)/h makes every constant-g
// state (i.e. every multiple of the discrete Maxwellian) exactly steady and
// the quadratic H-functional H = h sum M g^2 non-increasing.
struct FpTrajectory {
  std::vector<double> times;
  std::vector<double> mass_history;
  std::vector<double> h_history;
  GridFn<double> final;
};

enum class FpScheme { implicit_euler, explicit_euler };

inline FpTrajectory fp_evolve(double beta, const DiffusionField& D,
                              const GridFn<double>& f0, double T, double dt,
                              FpScheme scheme = FpScheme::implicit_euler) {
  require(f0.kind == FnKind::density, "fp_evolve: expects a density field");
  require(f0.grid == D.grid && f0.grid.dim == 1, "fp_evolve: d = 1 grids only");
  require(T > 0.0 && dt > 0.0 && dt <= T, "fp_evolve: need 0 < dt <= T");
  const VGrid& g = f0.grid;
  const int n = g.n;
  const double h = g.h();

  std::vector<double> M(n), Mface(n + 1, 0.0), Dface(n + 1, 0.0);
  for (int i = 0; i < n; ++i) M[i] = maxwellian_value(beta, sq(g.coord(i)), 1);
  for (int i = 1; i < n; ++i) {
    Mface[i] = maxwellian_value(beta, sq(g.face(i)), 1);
    Dface[i] = detail::face_avg(D.xx[i - 1], D.xx[i]);
  }

  std::vector<double> gval(n);
  for (int i = 0; i < n; ++i) gval[i] = f0[i] / M[i];

  auto h_functional = [&] {
    NeumaierSum s;
    for (int i = 0; i < n; ++i) s.add(M[i] * gval[i] * gval[i]);
    return h * s.value();
  };
  auto mass_now = [&] {
    NeumaierSum s;
    for (int i = 0; i < n; ++i) s.add(M[i] * gval[i]);
    return h * s.value();
  };

  FpTrajectory traj;
  traj.times.push_back(0.0);
  traj.mass_history.push_back(mass_now());
  traj.h_history.push_back(h_functional());

  // Precompute the tridiagonal implicit system (time-independent).
  std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double cm = (i > 0) ? dt * Dface[i] * Mface[i] / (h * h) : 0.0;
    double cp = (i < n - 1) ? dt * Dface[i + 1] * Mface[i + 1] / (h * h) : 0.0;
    diag[i] = M[i] + cm + cp;
    if (i > 0) lower[i] = -cm;
    if (i < n - 1) upper[i] = -cp;
  }

  const long steps = std::lround(T / dt);
  require(std::abs(steps * dt - T) < 1e-9 * std::max(1.0, T),
          "fp_evolve: T must be an integer number of steps");
  std::vector<double> rhs(n), fluxbuf(n + 1, 0.0);
  for (long s = 1; s <= steps; ++s) {
    if (scheme == FpScheme::implicit_euler) {
      for (int i = 0; i < n; ++i) rhs[i] = M[i] * gval[i];
      gval = solve_tridiag(lower, diag, upper, rhs);
    } else {
      for (int i = 1; i < n; ++i)
        fluxbuf[i] = Dface[i] * Mface[i] * (gval[i] - gval[i - 1]) / h;
      for (int i = 0; i < n; ++i)
        gval[i] += dt * (fluxbuf[i + 1] - fluxbuf[i]) / (h * M[i]);
    }
    double Hnew = h_functional();
    if (Hnew > traj.h_history.back() * (1.0 + 1e-13) + 1e-300)
      throw numerical_error("fp_evolve: H-functional increased (unstable step)");
    traj.times.push_back(s * dt);
    traj.mass_history.push_back(mass_now());
    traj.h_history.push_back(Hnew);
  }

  traj.final = GridFn<double>(g, FnKind::density);
  for (int i = 0; i < n; ++i) traj.final[i] = M[i] * gval[i];
  return traj;
}

// ---------------------------------------------------------------------------
// llb_apply: full linearized collision operator
//
//   h  |->  div_v  sum_k  pi Vhat(k)^2 |k| khat  m1(khat.v) M(v)
//                  [ dg(v) - <dg>_line(khat.v) ] / |eps(k, k.v + i0)|^2
//
// where g = h / M, dg = khat . grad g, m1 is the one-dimensional Maxwellian,
// and <dg>_line(u) is the m1-weighted average of dg over the line khat.v = u.
// On the lattice this line passes through grid nodes for every integer mode
// direction, so the exchange average is computed with the same normalized
// weights that define the quadrature — this makes the Maxwellian kernel,
// the mass, the momentum, and the energy moments vanish to rounding.
inline GridFn<double> llb_apply(double beta, const FourierPotential& pot,
                                const GridFn<double>& h_field) {
  const VGrid& g = h_field.grid;
  require(pot.empty() || pot.dim() == g.dim, "llb_apply: dimension mismatch");
  const int n = g.n;
  const double h = g.h();

  // Ratio field g~ = h / M (accept either representation).
  GridFn<double> M = maxwellian(g, beta);
  std::vector<double> gt(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    gt[i] = (h_field.kind == FnKind::ratio) ? h_field.values[i]
                                            : h_field.values[i] / M.values[i];

  GridFn<double> out(g, FnKind::density);
  if (pot.empty()) return out;

  if (g.dim == 1) {
    // The transverse line through a node is the node itself, so the exchange
    // average equals the local gradient and the flux vanishes identically.
    return out;
  }

  // Central differences of the ratio field (one-sided at the box edges).
  std::vector<double> gx(g.size()), gy(g.size());
  auto dcx = [&](int i, int j) {
    if (i == 0) return (gt[g.idx(1, j)] - gt[g.idx(0, j)]) / h;
    if (i == n - 1) return (gt[g.idx(n - 1, j)] - gt[g.idx(n - 2, j)]) / h;
    return (gt[g.idx(i + 1, j)] - gt[g.idx(i - 1, j)]) / (2.0 * h);
  };
  auto dcy = [&](int i, int j) {
    if (j == 0) return (gt[g.idx(i, 1)] - gt[g.idx(i, 0)]) / h;
    if (j == n - 1) return (gt[g.idx(i, n - 1)] - gt[g.idx(i, n - 2)]) / h;
    return (gt[g.idx(i, j + 1)] - gt[g.idx(i, j - 1)]) / (2.0 * h);
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      gx[g.idx(i, j)] = dcx(i, j);
      gy[g.idx(i, j)] = dcy(i, j);
    }

  std::vector<double> Yx(g.size(), 0.0), Yy(g.size(), 0.0);
  std::vector<double> dg(g.size()), m1s(g.size());
  std::vector<double> line_num, line_den;

  for (const auto& mode : pot.half_modes()) {
    if (mode.coeff == 0.0) continue;
    const int p = mode.m[0], q = mode.m[1];
    const double norm = std::sqrt(double(p) * p + double(q) * q);
    const double k_abs = two_pi * norm;
    // Directional derivative along khat and transverse Maxwellian weight.
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        std::size_t id = g.idx(i, j);
        dg[id] = (p * gx[id] + q * gy[id]) / norm;
        double s_coord = (-q * g.coord(i) + p * g.coord(j)) / norm;
        m1s[id] = std::exp(-0.5 * beta * s_coord * s_coord);
      }
    // Lines khat.v = const are indexed by t = p i + q j.
    const int tmin = std::min({0, p * (n - 1), q * (n - 1), p * (n - 1) + q * (n - 1)});
    const int tmax = std::max({0, p * (n - 1), q * (n - 1), p * (n - 1) + q * (n - 1)});
    line_num.assign(tmax - tmin + 1, 0.0);
    line_den.assign(tmax - tmin + 1, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        std::size_t id = g.idx(i, j);
        int t = p * i + q * j - tmin;
        line_num[t] += m1s[id] * dg[id];
        line_den[t] += m1s[id];
      }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        std::size_t id = g.idx(i, j);
        int t = p * i + q * j - tmin;
        double A = line_num[t] / line_den[t];
        double u = (p * g.coord(i) + q * g.coord(j)) / norm;
        double m1u = std::sqrt(beta / two_pi) * std::exp(-0.5 * beta * u * u);
        double e2 = std::norm(epsilon_fp(beta, pot, mode.m, k_abs * u));
        // factor 2: the -k partner of each stored mode contributes equally
        double c = 2.0 * pi * mode.coeff * mode.coeff * k_abs * m1u *
                   M.values[id] * (dg[id] - A) / e2;
        Yx[id] += c * p / norm;
        Yy[id] += c * q / norm;
      }
  }

  auto divx = [&](int i, int j) {
    if (i == 0) return (Yx[g.idx(1, j)] - Yx[g.idx(0, j)]) / h;
    if (i == n - 1) return (Yx[g.idx(n - 1, j)] - Yx[g.idx(n - 2, j)]) / h;
    return (Yx[g.idx(i + 1, j)] - Yx[g.idx(i - 1, j)]) / (2.0 * h);
  };
  auto divy = [&](int i, int j) {
    if (j == 0) return (Yy[g.idx(i, 1)] - Yy[g.idx(i, 0)]) / h;
    if (j == n - 1) return (Yy[g.idx(i, n - 1)] - Yy[g.idx(i, n - 2)]) / h;
    return (Yy[g.idx(i, j + 1)] - Yy[g.idx(i, j - 1)]) / (2.0 * h);
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = divx(i, j) + divy(i, j);
  return out;
}

// Local diffusion kernel of llb_apply (drift-diffusion part at frozen
// Maxwellian background), assembled through the collision-operator route.
inline DiffusionField lb_kernel_frozen(double beta, const FourierPotential& pot,
                                       const VGrid& grid) {
  DiffusionField D(grid);
  for (const auto& mode : pot.half_modes()) {
    if (mode.coeff == 0.0) continue;
    const double px = mode.m[0], py = mode.m[1];
    const double norm = std::sqrt(px * px + py * py);
    const double k_abs = two_pi * norm;
    for (int i = 0; i < grid.n; ++i) {
      if (grid.dim == 1) {
        double u = px * grid.coord(i) / norm;
        double m1u = std::sqrt(beta / two_pi) * std::exp(-0.5 * beta * u * u);
        double e2 = std::norm(epsilon_fp(beta, pot, mode.m, k_abs * u));
        D.xx[i] += 2.0 * pi * mode.coeff * mode.coeff * k_abs * m1u / e2 *
                   (px / norm) * (px / norm);
      } else {
        for (int j = 0; j < grid.n; ++j) {
          double u = (px * grid.coord(i) + py * grid.coord(j)) / norm;
          double m1u = std::sqrt(beta / two_pi) * std::exp(-0.5 * beta * u * u);
          double e2 = std::norm(epsilon_fp(beta, pot, mode.m, k_abs * u));
          double c = 2.0 * pi * mode.coeff * mode.coeff * k_abs * m1u / e2;
          std::size_t id = grid.idx(i, j);
          D.xx[id] += c * (px / norm) * (px / norm);
          D.xy[id] += c * (px / norm) * (py / norm);
          D.yy[id] += c * (py / norm) * (py / norm);
        }
      }
    }
  }
  return D;
}

// ---------------------------------------------------------------------------
// weighted_norm: || f ||_{H^s} with B = I + grad^* grad realized self-adjointly
// in the Maxwellian-weighted inner product; B^s by repeated application
// (s >= 0) or by repeated solves (s < 0).  B >= I in the spectral sense, so
// negative-order norms are dominated by the plain weighted L2 norm.  This is
// a documented discretization used as a diagnostic.
namespace detail {

// (B g)_i = g_i - (1/M_i) div( M grad g ), staggered, zero-flux boundaries.
inline std::vector<double> weighted_B_apply(const VGrid& g, double beta,
                                            const std::vector<double>& x) {
  const int n = g.n;
  const double h = g.h();
  std::vector<double> out(x.size());
  if (g.dim == 1) {
    for (int i = 0; i < n; ++i) {
      double Mi = maxwellian_value(beta, sq(g.coord(i)), 1);
      double lap = 0.0;
      if (i > 0)
        lap += maxwellian_value(beta, sq(g.face(i)), 1) * (x[i - 1] - x[i]) / (h * h);
      if (i < n - 1)
        lap += maxwellian_value(beta, sq(g.face(i + 1)), 1) * (x[i + 1] - x[i]) / (h * h);
      out[i] = x[i] - lap / Mi;
    }
    return out;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double vx = g.coord(i), vy = g.coord(j);
      double Mi = maxwellian_value(beta, sq(vx) + sq(vy), 2);
      double lap = 0.0;
      if (i > 0)
        lap += maxwellian_value(beta, sq(g.face(i)) + sq(vy), 2) *
               (x[g.idx(i - 1, j)] - x[g.idx(i, j)]) / (h * h);
      if (i < n - 1)
        lap += maxwellian_value(beta, sq(g.face(i + 1)) + sq(vy), 2) *
               (x[g.idx(i + 1, j)] - x[g.idx(i, j)]) / (h * h);
      if (j > 0)
        lap += maxwellian_value(beta, sq(vx) + sq(g.face(j)), 2) *
               (x[g.idx(i, j - 1)] - x[g.idx(i, j)]) / (h * h);
      if (j < n - 1)
        lap += maxwellian_value(beta, sq(vx) + sq(g.face(j + 1)), 2) *
               (x[g.idx(i, j + 1)] - x[g.idx(i, j)]) / (h * h);
      out[g.idx(i, j)] = x[g.idx(i, j)] - lap / Mi;
    }
  return out;
}

inline std::vector<double> weighted_B_solve(const VGrid& g, double beta,
                                            const std::vector<double>& rhs) {
  const int n = g.n;
  const double h = g.h();
  if (g.dim == 1) {
    std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), b(n);
    for (int i = 0; i < n; ++i) {
      double Mi = maxwellian_value(beta, sq(g.coord(i)), 1);
      double cm = (i > 0) ? maxwellian_value(beta, sq(g.face(i)), 1) / (h * h) : 0.0;
      double cp = (i < n - 1) ? maxwellian_value(beta, sq(g.face(i + 1)), 1) / (h * h) : 0.0;
      diag[i] = Mi + cm + cp;
      if (i > 0) lower[i] = -cm;
      if (i < n - 1) upper[i] = -cp;
      b[i] = Mi * rhs[i];
    }
    return solve_tridiag(lower, diag, upper, b);
  }
  // d = 2: conjugate gradients in the Maxwellian-weighted inner product.
  std::vector<double> Mw(g.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      Mw[g.idx(i, j)] = maxwellian_value(beta, sq(g.coord(i)) + sq(g.coord(j)), 2);
  auto dotM = [&](const std::vector<double>& a, const std::vector<double>& b2) {
    NeumaierSum s;
    for (std::size_t t = 0; t < a.size(); ++t) s.add(a[t] * b2[t] * Mw[t]);
    return s.value();
  };
  std::vector<double> x(g.size(), 0.0), r = rhs, p = rhs, Ap;
  double rr = dotM(r, r);
  double rhs_norm = std::sqrt(std::max(rr, 1e-300));
  for (int it = 0; it < 20000; ++it) {
    if (std::sqrt(rr) <= 1e-13 * rhs_norm) return x;
    Ap = weighted_B_apply(g, beta, p);
    double alpha = rr / dotM(p, Ap);
    for (std::size_t t = 0; t < x.size(); ++t) {
      x[t] += alpha * p[t];
      r[t] -= alpha * Ap[t];
    }
    double rr_new = dotM(r, r);
    double beta_cg = rr_new / rr;
    for (std::size_t t = 0; t < x.size(); ++t) p[t] = r[t] + beta_cg * p[t];
    rr = rr_new;
  }
  throw numerical_error("weighted_norm: elliptic solve did not converge");
}

}  // namespace detail

inline double weighted_norm(double beta, const GridFn<double>& f, int s) {
  require(f.kind == FnKind::ratio, "weighted_norm: expects a ratio field");
  require(s >= -4 && s <= 4, "weighted_norm: order must lie in [-4, 4]");
  const VGrid& g = f.grid;
  std::vector<double> x = f.values;
  for (int r = 0; r < std::abs(s); ++r)
    x = (s > 0) ? detail::weighted_B_apply(g, beta, x)
                : detail::weighted_B_solve(g, beta, x);
  // <f, B^s f>_M
  NeumaierSum sum;
  if (g.dim == 1) {
    for (int i = 0; i < g.n; ++i)
      sum.add(maxwellian_value(beta, sq(g.coord(i)), 1) * f.values[i] * x[i]);
  } else {
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j)
        sum.add(maxwellian_value(beta, sq(g.coord(i)) + sq(g.coord(j)), 2) *
                f.values[g.idx(i, j)] * x[g.idx(i, j)]);
  }
  double q = sum.value() * g.cell_volume();
  require(q > -1e-12, "weighted_norm: negative quadratic form");
  return std::sqrt(std::max(0.0, q));
}

}  // namespace lblab
