#pragma once

// Fourier-mode cumulant hierarchy in one velocity dimension.
//
// Correlation stages live on velocity grids, one Fourier mode pair at a time:
//   pair stage     F(v, v*)      on modes (-k, k),
//   triple stage   G(v, v*, w*)  on modes (0, k, -k).
// The tagged slot v carries mode -k (pair) or 0 (triple) and never receives a
// mean-field rank-one correction; bath slots do, with coupling c * beta *
// Vhat(k).  All bath averages use Maxwellian quadrature weights normalized to
// unit mass so the rank-one algebra of the continuum survives discretization
// exactly.

#include <cmath>
#include <complex>
#include <functional>
#include <utility>
#include <vector>

#include "lblab/common.hpp"
#include "lblab/dispersion.hpp"
#include "lblab/kinetic_ops.hpp"
#include "lblab/linalg.hpp"
#include "lblab/potential.hpp"
#include "lblab/quadrature.hpp"
#include "lblab/vgrid.hpp"

namespace lblab {

// ---------------------------------------------------------------------------
// Velocity law of the tagged particle: ratio g0 = f0 / M_beta together with
// its derivative (kept analytic so source terms are exact at the nodes).

struct GZero {
  GridFn<double> g;
  GridFn<double> dg;

  GZero() : g(VGrid{1, 16, 6.0}, FnKind::ratio), dg(VGrid{1, 16, 6.0}, FnKind::ratio) {}

  static GZero from_callable(const VGrid& grid,
                             const std::function<double(double)>& f,
                             const std::function<double(double)>& df) {
    require(grid.dim == 1, "GZero: one-dimensional grids only");
    GZero out;
    out.g = GridFn<double>(grid, FnKind::ratio);
    out.dg = GridFn<double>(grid, FnKind::ratio);
    for (int i = 0; i < grid.n; ++i) {
      out.g[i] = f(grid.coord(i));
      out.dg[i] = df(grid.coord(i));
    }
    return out;
  }

  static GZero uniform(const VGrid& grid) {
    return from_callable(grid, [](double) { return 1.0; }, [](double) { return 0.0; });
  }
};

// Pair-stage field on modes (-k, k); index (i, j) = (tagged v, bath v*).
struct PairField {
  VGrid grid{1, 16, 6.0};
  int mode_m = 1;  // signed harmonic index; k = 2 pi mode_m
  std::vector<cplx> a;

  PairField() = default;
  PairField(const VGrid& g, int m) : grid(g), mode_m(m), a(std::size_t(g.n) * g.n, cplx(0, 0)) {
    require(g.dim == 1, "PairField: one-dimensional grids only");
    require(m != 0, "PairField: mode must be nonzero");
  }
  cplx& at(int i, int j) { return a[std::size_t(i) * grid.n + j]; }
  const cplx& at(int i, int j) const { return a[std::size_t(i) * grid.n + j]; }
};

// Reduced triple-stage field on modes (0, k, -k) with the tagged dependence
// factored out; index (j, l) = (bath v*, bath w*).
struct ReducedTripleField {
  VGrid grid{1, 16, 6.0};
  int mode_m = 1;
  std::vector<cplx> a;

  ReducedTripleField() = default;
  ReducedTripleField(const VGrid& g, int m)
      : grid(g), mode_m(m), a(std::size_t(g.n) * g.n, cplx(0, 0)) {
    require(g.dim == 1, "ReducedTripleField: one-dimensional grids only");
    require(m != 0, "ReducedTripleField: mode must be nonzero");
  }
  cplx& at(int j, int l) { return a[std::size_t(j) * grid.n + l]; }
  const cplx& at(int j, int l) const { return a[std::size_t(j) * grid.n + l]; }
};

// Full triple-stage field; index (i, j, l) = (tagged v, bath v*, bath w*).
struct TripleField {
  VGrid grid{1, 16, 6.0};
  int mode_m = 1;
  std::vector<cplx> a;

  TripleField() = default;
  TripleField(const VGrid& g, int m)
      : grid(g), mode_m(m), a(std::size_t(g.n) * g.n * g.n, cplx(0, 0)) {
    require(g.dim == 1, "TripleField: one-dimensional grids only");
    require(m != 0, "TripleField: mode must be nonzero");
  }
  cplx& at(int i, int j, int l) {
    return a[(std::size_t(i) * grid.n + j) * grid.n + l];
  }
  const cplx& at(int i, int j, int l) const {
    return a[(std::size_t(i) * grid.n + j) * grid.n + l];
  }
};

namespace detail {

inline double mode_coeff(const FourierPotential& pot, int m) {
  return pot.coeff_of({m, 0, 0});
}

inline std::vector<double> node_velocities(const VGrid& g) {
  std::vector<double> v(g.n);
  for (int i = 0; i < g.n; ++i) v[i] = g.coord(i);
  return v;
}

inline std::vector<double> node_maxwellian(const VGrid& g, double beta) {
  std::vector<double> m(g.n);
  for (int i = 0; i < g.n; ++i) m[i] = maxwellian_value(beta, sq(g.coord(i)), 1);
  return m;
}

// Node-centered (d/dv - beta v) acting through the flux form M^{-1} d/dv (M .),
// second order inside, one-sided first order at the edges.
template <class T>
std::vector<T> drift_derivative(double beta, const VGrid& g, const std::vector<T>& q) {
  const int n = g.n;
  const double h = g.h();
  std::vector<double> M = node_maxwellian(g, beta);
  std::vector<T> out(n);
  for (int i = 0; i < n; ++i) {
    if (i == 0)
      out[i] = (M[1] * q[1] - M[0] * q[0]) / (h * M[0]);
    else if (i == n - 1)
      out[i] = (M[n - 1] * q[n - 1] - M[n - 2] * q[n - 2]) / (h * M[n - 1]);
    else
      out[i] = (M[i + 1] * q[i + 1] - M[i - 1] * q[i - 1]) / (2.0 * h * M[i]);
  }
  return out;
}

// Plain d/dv, central inside, one-sided at edges.
template <class T>
std::vector<T> plain_derivative(const VGrid& g, const std::vector<T>& q) {
  const int n = g.n;
  const double h = g.h();
  std::vector<T> out(n);
  for (int i = 0; i < n; ++i) {
    if (i == 0)
      out[i] = (q[1] - q[0]) / h;
    else if (i == n - 1)
      out[i] = (q[n - 1] - q[n - 2]) / h;
    else
      out[i] = (q[i + 1] - q[i - 1]) / (2.0 * h);
  }
  return out;
}

// Discrete dielectric function of the bath quadrature,
//   eps_d(zeta) = 1 + c beta Vhat sum_j w_j k v_j / (k v_j - zeta),
// which makes the rank-one resolvent algebra exact on the grid.
inline cplx discrete_epsilon(double cbv, const std::vector<double>& kv,
                             const std::vector<double>& w, cplx zeta) {
  NeumaierSumC acc;
  for (std::size_t j = 0; j < kv.size(); ++j)
    acc.add(w[j] * kv[j] / (kv[j] - zeta));
  cplx eps = 1.0 + cbv * acc.value();
  if (std::abs(eps) < 1e-6)
    throw numerical_error("discrete dielectric function vanished on the contour");
  return eps;
}

// Bath-slot resolvent (kv* + c beta Vhat kv* <.> - zeta)^{-1} applied to one
// row, via the rank-one update of the diagonal resolvent.
inline void bath_resolvent_row(double cbv, const std::vector<double>& kv,
                               const std::vector<double>& w, cplx zeta, cplx eps,
                               const cplx* rhs, cplx* out) {
  const std::size_t n = kv.size();
  NeumaierSumC avg;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = rhs[j] / (kv[j] - zeta);
    avg.add(w[j] * out[j]);
  }
  cplx corr = cbv / eps * avg.value();
  for (std::size_t j = 0; j < n; ++j) out[j] -= corr * kv[j] / (kv[j] - zeta);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sources and transport operators.

// Pair-stage source acting on the tagged law:
//   S(i, j) = -i k Vhat(k) [ g0'(v_i) - beta v_i g0(v_i) + beta v_j g0(v_i) ].
inline PairField source_S12(double beta, const FourierPotential& pot, const VGrid& grid,
                            int mode_m, const GZero& gz) {
  PairField S(grid, mode_m);
  const double k = two_pi * mode_m;
  const double vhat = detail::mode_coeff(pot, mode_m);
  auto v = detail::node_velocities(grid);
  for (int i = 0; i < grid.n; ++i) {
    double base = gz.dg[i] - beta * v[i] * gz.g[i];
    for (int j = 0; j < grid.n; ++j)
      S.at(i, j) = cplx(0, -k * vhat) * (base + beta * v[j] * gz.g[i]);
  }
  return S;
}

// Triple-stage source with the tagged factor g0(v_i) included:
//   S(i, j, l) = -i k beta Vhat(k) (v_j - v_l) g0(v_i).
inline TripleField source_S13(double beta, const FourierPotential& pot, const VGrid& grid,
                              int mode_m, const GZero& gz) {
  TripleField S(grid, mode_m);
  const double k = two_pi * mode_m;
  const double vhat = detail::mode_coeff(pot, mode_m);
  auto v = detail::node_velocities(grid);
  for (int i = 0; i < grid.n; ++i)
    for (int j = 0; j < grid.n; ++j)
      for (int l = 0; l < grid.n; ++l)
        S.at(i, j, l) = cplx(0, -k * beta * vhat) * (v[j] - v[l]) * gz.g[i];
  return S;
}

// Pair-stage transport: (L2 F)(i, j) = k (v_j - v_i) F(i, j)
//                                      + c beta Vhat k v_j <F(i, .)>.
inline PairField apply_L2(double beta, const FourierPotential& pot, double c,
                          const PairField& F) {
  PairField out(F.grid, F.mode_m);
  const int n = F.grid.n;
  const double k = two_pi * F.mode_m;
  const double cbv = c * beta * detail::mode_coeff(pot, F.mode_m);
  auto v = detail::node_velocities(F.grid);
  auto w = maxwell_weights_1d(F.grid, beta);
  for (int i = 0; i < n; ++i) {
    NeumaierSumC avg;
    for (int j = 0; j < n; ++j) avg.add(w[j] * F.at(i, j));
    cplx rank1 = cbv * avg.value();
    for (int j = 0; j < n; ++j)
      out.at(i, j) = k * (v[j] - v[i]) * F.at(i, j) + k * v[j] * rank1;
  }
  return out;
}

// Triple-stage transport on modes (0, k, -k):
//   (L3 G)(i, j, l) = k (v_j - v_l) G + c2 beta Vhat k [ v_j <G>_{v*}(i, l)
//                                                      - v_l <G>_{w*}(i, j) ].
inline TripleField apply_L3(double beta, const FourierPotential& pot, double c2,
                            const TripleField& G) {
  TripleField out(G.grid, G.mode_m);
  const int n = G.grid.n;
  const double k = two_pi * G.mode_m;
  const double cbv = c2 * beta * detail::mode_coeff(pot, G.mode_m);
  auto v = detail::node_velocities(G.grid);
  auto w = maxwell_weights_1d(G.grid, beta);
  std::vector<cplx> avgJ(std::size_t(n) * n, cplx(0, 0));  // (i, l)
  std::vector<cplx> avgL(std::size_t(n) * n, cplx(0, 0));  // (i, j)
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        cplx g = G.at(i, j, l);
        avgJ[std::size_t(i) * n + l] += w[j] * g;
        avgL[std::size_t(i) * n + j] += w[l] * g;
      }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l)
        out.at(i, j, l) = k * (v[j] - v[l]) * G.at(i, j, l) +
                          cbv * k * (v[j] * avgJ[std::size_t(i) * n + l] -
                                     v[l] * avgL[std::size_t(i) * n + j]);
  return out;
}

// L^2(M x M) norm of a pair field.
inline double pair_norm(double beta, const PairField& F) {
  auto w = maxwell_weights_1d(F.grid, beta);
  NeumaierSum acc;
  for (int i = 0; i < F.grid.n; ++i)
    for (int j = 0; j < F.grid.n; ++j) acc.add(w[i] * w[j] * std::norm(F.at(i, j)));
  return std::sqrt(acc.value());
}

// ---------------------------------------------------------------------------
// Projection onto the tagged law: sum over modes of
//   i k Vhat(k) (d/dv - beta v) <F(v, .)>.
// The mode list must be reflection-complete so the result is real; the
// residual imaginary part is returned for inspection and must be tiny.

struct Projection {
  GridFn<double> field;
  double imag_residual = 0.0;
};

inline Projection project_M21(double beta, const FourierPotential& pot,
                              const std::vector<PairField>& fields) {
  require(!fields.empty(), "project_M21: no fields");
  const VGrid& grid = fields.front().grid;
  auto w = maxwell_weights_1d(grid, beta);
  std::vector<cplx> s(grid.n, cplx(0, 0));
  for (const auto& F : fields) {
    require(F.grid == grid, "project_M21: mismatched grids");
    const double k = two_pi * F.mode_m;
    const double vhat = detail::mode_coeff(pot, F.mode_m);
    if (vhat == 0.0) continue;
    for (int i = 0; i < grid.n; ++i) {
      NeumaierSumC avg;
      for (int j = 0; j < grid.n; ++j) avg.add(w[j] * F.at(i, j));
      s[i] += cplx(0, k * vhat) * avg.value();
    }
  }
  std::vector<cplx> d = detail::drift_derivative(beta, grid, s);
  Projection out{GridFn<double>(grid, FnKind::ratio), 0.0};
  double scale = 0.0;
  for (int i = 0; i < grid.n; ++i) scale = std::max(scale, std::abs(d[i]));
  for (int i = 0; i < grid.n; ++i) {
    out.field[i] = d[i].real();
    out.imag_residual = std::max(out.imag_residual, std::abs(d[i].imag()));
  }
  if (scale > 0.0) out.imag_residual /= scale;
  return out;
}

// ---------------------------------------------------------------------------
// Free propagation of a pair field, dF/dt = -i L2 F, with norm monitoring.
// The transport is self-adjoint under the rank-one-corrected inner product,
// so the L^2(M x M) norm may sway by at most sqrt(1 + c beta Vhat).

struct PropagateRecord {
  std::vector<double> times;
  std::vector<double> norms;
  PairField final;
  double bound = 0.0;  // sqrt(1 + c beta Vhat) * initial norm
};

inline PropagateRecord propagate(double beta, const FourierPotential& pot, double c,
                                 PairField F, double T, double dt, int records = 16) {
  require(T > 0.0 && dt > 0.0, "propagate: T and dt must be > 0");
  const long steps = std::lround(T / dt);
  require(std::abs(steps * dt - T) < 1e-9 * std::max(1.0, T),
          "propagate: T must be an integer number of steps");
  const int n = F.grid.n;
  const double k = two_pi * F.mode_m;
  const double cbv = c * beta * detail::mode_coeff(pot, F.mode_m);
  auto v = detail::node_velocities(F.grid);
  auto w = maxwell_weights_1d(F.grid, beta);

  auto rhs = [&](const std::vector<cplx>& y, std::vector<cplx>& dy) {
    for (int i = 0; i < n; ++i) {
      NeumaierSumC avg;
      for (int j = 0; j < n; ++j) avg.add(w[j] * y[std::size_t(i) * n + j]);
      cplx rank1 = cbv * avg.value();
      for (int j = 0; j < n; ++j) {
        cplx ly = k * (v[j] - v[i]) * y[std::size_t(i) * n + j] + k * v[j] * rank1;
        dy[std::size_t(i) * n + j] = cplx(0, -1) * ly;
      }
    }
  };

  PropagateRecord rec;
  rec.bound = std::sqrt(1.0 + std::max(0.0, cbv)) * pair_norm(beta, F);
  const long stride = std::max<long>(1, steps / std::max(1, records));
  std::vector<cplx> y = F.a, k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size()),
                    tmp(y.size());
  auto record = [&](double t) {
    PairField cur(F.grid, F.mode_m);
    cur.a = y;
    rec.times.push_back(t);
    rec.norms.push_back(pair_norm(beta, cur));
  };
  record(0.0);
  for (long st = 1; st <= steps; ++st) {
    rhs(y, k1);
    for (std::size_t q = 0; q < y.size(); ++q) tmp[q] = y[q] + 0.5 * dt * k1[q];
    rhs(tmp, k2);
    for (std::size_t q = 0; q < y.size(); ++q) tmp[q] = y[q] + 0.5 * dt * k2[q];
    rhs(tmp, k3);
    for (std::size_t q = 0; q < y.size(); ++q) tmp[q] = y[q] + dt * k3[q];
    rhs(tmp, k4);
    for (std::size_t q = 0; q < y.size(); ++q)
      y[q] += dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
    if (st % stride == 0 || st == steps) record(st * dt);
  }
  rec.final = PairField(F.grid, F.mode_m);
  rec.final.a = std::move(y);
  return rec;
}

// ---------------------------------------------------------------------------
// Pair-stage resolvent (i L2 - i omega)^{-1} applied to a field, three ways.

enum class ResolventMethod { closed_form, dense_solve, laplace_quadrature };

struct ResolventOpts {
  double contour_halfwidth = 0.0;  // 0: choose automatically
  int panel_order = 12;
  double laplace_tol = 1e-7;
};

namespace detail {

// Contour route: (H0 + H1 - omega)^{-1} =
//   (1/2 pi i) int (H0 - (omega - eta - alpha))^{-1} (H1 - (alpha + eta))^{-1} d alpha
// with 0 < Im eta < Im omega, plus an explicit large-|alpha| tail through the
// 1/alpha^2 and 1/alpha^4 moments (the odd orders cancel by symmetry).
inline PairField resolvent_closed_form(double beta, const FourierPotential& pot,
                                       double c, cplx omega, const PairField& rhs,
                                       const ResolventOpts& opts) {
  const int n = rhs.grid.n;
  const double k = two_pi * rhs.mode_m;
  const double cbv = c * beta * detail::mode_coeff(pot, rhs.mode_m);
  auto v = detail::node_velocities(rhs.grid);
  auto w = maxwell_weights_1d(rhs.grid, beta);
  std::vector<double> kv(n);
  for (int j = 0; j < n; ++j) kv[j] = k * v[j];

  const cplx eta(0.0, 0.5 * omega.imag());
  const double spread = std::abs(k) * rhs.grid.vmax + std::abs(omega);
  double A = opts.contour_halfwidth > 0.0 ? opts.contour_halfwidth
                                          : std::max(150.0, 8.0 * spread);
  const double panel_w = std::max(0.5 * omega.imag(), 2.0 * A * 1e-5);
  const int panels = int(std::ceil(2.0 * A / panel_w));
  QuadRule rule = panel_rule(-A, A, panels, opts.panel_order);

  std::vector<cplx> acc(rhs.a.size(), cplx(0, 0));
  std::vector<cplx> row(n);
  for (std::size_t q = 0; q < rule.x.size(); ++q) {
    const double alpha = rule.x[q];
    const cplx zeta1 = alpha + eta;
    const cplx eps = discrete_epsilon(cbv, kv, w, zeta1);
    for (int i = 0; i < n; ++i) {
      bath_resolvent_row(cbv, kv, w, zeta1, eps, &rhs.a[std::size_t(i) * n], row.data());
      const cplx slot0 = 1.0 / (-kv[i] - omega + eta + alpha);
      const cplx f = rule.w[q] * slot0;
      for (int j = 0; j < n; ++j) acc[std::size_t(i) * n + j] += f * row[j];
    }
  }

  // Tail corrections; B1 = H0 - omega + eta acts per row, B2 = H1 - eta on
  // the bath slot.  Both commute, so the alpha^{-4} moment needs only
  // B1^2 + B2^2 - B1 B2 applied to the data.
  auto apply_B2 = [&](const std::vector<cplx>& in, std::vector<cplx>& out) {
    for (int i = 0; i < n; ++i) {
      NeumaierSumC avg;
      for (int j = 0; j < n; ++j) avg.add(w[j] * in[std::size_t(i) * n + j]);
      cplx rank1 = cbv * avg.value();
      for (int j = 0; j < n; ++j)
        out[std::size_t(i) * n + j] =
            (kv[j] - eta) * in[std::size_t(i) * n + j] + kv[j] * rank1;
    }
  };
  std::vector<cplx> b2(rhs.a.size()), b22(rhs.a.size());
  apply_B2(rhs.a, b2);
  apply_B2(b2, b22);
  const cplx inv2pii = 1.0 / cplx(0.0, two_pi);
  for (int i = 0; i < n; ++i) {
    const cplx b1 = -kv[i] - omega + eta;
    for (int j = 0; j < n; ++j) {
      std::size_t id = std::size_t(i) * n + j;
      cplx moment4 = b1 * b1 * rhs.a[id] + b22[id] - b1 * b2[id];
      acc[id] += -(2.0 / A) * rhs.a[id] - 2.0 / (3.0 * A * A * A) * moment4;
    }
  }

  PairField out(rhs.grid, rhs.mode_m);
  for (std::size_t q = 0; q < acc.size(); ++q)
    out.a[q] = cplx(0, -1) * (inv2pii * acc[q]);
  return out;
}

inline PairField resolvent_dense(double beta, const FourierPotential& pot, double c,
                                 cplx omega, const PairField& rhs) {
  const int n = rhs.grid.n;
  const double k = two_pi * rhs.mode_m;
  const double cbv = c * beta * detail::mode_coeff(pot, rhs.mode_m);
  auto v = detail::node_velocities(rhs.grid);
  auto w = maxwell_weights_1d(rhs.grid, beta);
  PairField out(rhs.grid, rhs.mode_m);
  CMatrix A(n);
  std::vector<cplx> b(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int jp = 0; jp < n; ++jp)
        A(j, jp) = cplx(0, 1) * (cbv * k * v[j] * w[jp]);
      A(j, j) += cplx(0, 1) * (k * (v[j] - v[i])) - cplx(0, 1) * omega;
      b[j] = rhs.at(i, j);
    }
    CLu lu(A);
    std::vector<cplx> x = lu.solve(b);
    for (int j = 0; j < n; ++j) out.at(i, j) = x[j];
  }
  return out;
}

inline PairField resolvent_laplace(double beta, const FourierPotential& pot, double c,
                                   cplx omega, const PairField& rhs,
                                   const ResolventOpts& opts) {
  // (i L2 - i omega)^{-1} G = int_0^inf e^{i omega t} e^{-i L2 t} G dt,
  // co-integrated with the transported field by one RK4 pass.
  const int n = rhs.grid.n;
  const double k = two_pi * rhs.mode_m;
  const double cbv = c * beta * detail::mode_coeff(pot, rhs.mode_m);
  auto v = detail::node_velocities(rhs.grid);
  auto w = maxwell_weights_1d(rhs.grid, beta);
  std::vector<double> kv(n);
  for (int j = 0; j < n; ++j) kv[j] = k * v[j];

  const double tol = opts.laplace_tol;
  const double T = std::log(10.0 / tol) / omega.imag();
  const double lam = std::abs(k) * rhs.grid.vmax * (2.0 + std::abs(cbv)) + std::abs(omega);
  double dt = std::min(0.5 / lam, std::pow(120.0 * tol / (T * std::pow(lam, 5)), 0.25));
  const long steps = std::lround(std::ceil(T / dt));
  dt = T / double(steps);

  const std::size_t sz = rhs.a.size();
  std::vector<cplx> U = rhs.a, I(sz, cplx(0, 0));
  std::vector<cplx> kU1(sz), kU2(sz), kU3(sz), kU4(sz), tmp(sz);
  std::vector<cplx> kI1(sz), kI2(sz), kI3(sz), kI4(sz);
  auto apply = [&](const std::vector<cplx>& y, std::vector<cplx>& dy) {
    for (int i = 0; i < n; ++i) {
      NeumaierSumC avg;
      for (int j = 0; j < n; ++j) avg.add(w[j] * y[std::size_t(i) * n + j]);
      cplx rank1 = cbv * avg.value();
      for (int j = 0; j < n; ++j)
        dy[std::size_t(i) * n + j] =
            cplx(0, -1) *
            ((kv[j] - kv[i]) * y[std::size_t(i) * n + j] + kv[j] * rank1);
    }
  };
  for (long st = 0; st < steps; ++st) {
    const double t = st * dt;
    const cplx e1 = std::exp(cplx(0, 1) * omega * t);
    const cplx e2 = std::exp(cplx(0, 1) * omega * (t + 0.5 * dt));
    const cplx e3 = std::exp(cplx(0, 1) * omega * (t + dt));
    apply(U, kU1);
    for (std::size_t q = 0; q < sz; ++q) kI1[q] = e1 * U[q];
    for (std::size_t q = 0; q < sz; ++q) tmp[q] = U[q] + 0.5 * dt * kU1[q];
    apply(tmp, kU2);
    for (std::size_t q = 0; q < sz; ++q) kI2[q] = e2 * tmp[q];
    for (std::size_t q = 0; q < sz; ++q) tmp[q] = U[q] + 0.5 * dt * kU2[q];
    apply(tmp, kU3);
    for (std::size_t q = 0; q < sz; ++q) kI3[q] = e2 * tmp[q];
    for (std::size_t q = 0; q < sz; ++q) tmp[q] = U[q] + dt * kU3[q];
    apply(tmp, kU4);
    for (std::size_t q = 0; q < sz; ++q) kI4[q] = e3 * tmp[q];
    for (std::size_t q = 0; q < sz; ++q) {
      U[q] += dt / 6.0 * (kU1[q] + 2.0 * kU2[q] + 2.0 * kU3[q] + kU4[q]);
      I[q] += dt / 6.0 * (kI1[q] + 2.0 * kI2[q] + 2.0 * kI3[q] + kI4[q]);
    }
  }
  PairField out(rhs.grid, rhs.mode_m);
  out.a = std::move(I);
  return out;
}

}  // namespace detail

inline PairField resolvent_L2(double beta, const FourierPotential& pot, double c,
                              cplx omega, const PairField& rhs, ResolventMethod method,
                              const ResolventOpts& opts = {}) {
  require(omega.imag() > 0.0, "resolvent_L2: omega must lie in the upper half-plane");
  switch (method) {
    case ResolventMethod::closed_form:
      return detail::resolvent_closed_form(beta, pot, c, omega, rhs, opts);
    case ResolventMethod::dense_solve:
      return detail::resolvent_dense(beta, pot, c, omega, rhs);
    case ResolventMethod::laplace_quadrature:
      return detail::resolvent_laplace(beta, pot, c, omega, rhs, opts);
  }
  throw std::invalid_argument("resolvent_L2: unknown method");
}

// ---------------------------------------------------------------------------
// Markov (long-time) limits of the correlation feedback on the tagged law.

struct Markov2Result {
  GridFn<double> term1;        // flux form, mean-field screened diffusion
  GridFn<double> term2;        // flux form, exchange correction (pair stage)
  GridFn<double> total;        // term1 + term2
  GridFn<cplx> total_center;   // node-centered derivative form of the same limit
  DiffusionField D;
  DiffusionField C2;
};

// Boundary-value pair slice at resonance u = k v:
//   slice(v) = -Vhat / eps(k, kv + i0) * [ CA(kv + i0) k g0'(v) + beta g0(v) ].
namespace detail {
inline std::vector<cplx> pair_slice_i0(double beta, const FourierPotential& pot,
                                       const VGrid& grid, const GZero& gz, int m) {
  const double k = two_pi * m;
  const double vhat = mode_coeff(pot, m);
  std::vector<cplx> slice(grid.n, cplx(0, 0));
  for (int i = 0; i < grid.n; ++i) {
    double u = k * grid.coord(i);
    cplx ca = cauchy_average(beta, std::abs(k), UpperFrequency::plus_i0(u));
    cplx eps = epsilon_fp(beta, pot, {m, 0, 0}, u);
    slice[i] = -vhat / eps * (ca * k * gz.dg[i] + beta * gz.g[i]);
  }
  return slice;
}
}  // namespace detail

inline Markov2Result markov_limit_2corr(double beta, const FourierPotential& pot,
                                        const VGrid& grid, const GZero& gz) {
  require(grid.dim == 1, "markov_limit_2corr: one-dimensional grids only");
  Markov2Result out{GridFn<double>(grid, FnKind::ratio), GridFn<double>(grid, FnKind::ratio),
                    GridFn<double>(grid, FnKind::ratio), GridFn<cplx>(grid, FnKind::ratio),
                    DiffusionField(grid), DiffusionField(grid)};

  out.D = diffusion_tensor(beta, pot, grid);
  for (const auto& mode : pot.full_modes()) {
    if (mode.coeff == 0.0) continue;
    double bv = beta * mode.coeff;
    for (int i = 0; i < grid.n; ++i) {
      std::array<double, 3> vv{grid.coord(i), 0.0, 0.0};
      double da = delta_average(beta, mode.k, vv);
      double e2 = std::norm(epsilon_fp(beta, pot, mode.m, mode.k[0] * vv[0]));
      out.C2.xx[i] += bv * sq(mode.k[0]) * pi * sq(mode.coeff) * da / e2;
    }
  }

  GridFn<double> f(grid, FnKind::density);
  for (int i = 0; i < grid.n; ++i)
    f[i] = maxwellian_value(beta, sq(grid.coord(i)), 1) * gz.g[i];
  GridFn<double> t1 = fp_apply(beta, out.D, f);
  GridFn<double> t2 = fp_apply_diffusion_only(out.C2, f);
  for (int i = 0; i < grid.n; ++i) {
    double M = maxwellian_value(beta, sq(grid.coord(i)), 1);
    out.term1[i] = t1[i] / M;
    out.term2[i] = t2[i] / M;
    out.total[i] = out.term1[i] + out.term2[i];
  }

  // Node-centered form through the resonance slice.
  std::vector<cplx> q(grid.n, cplx(0, 0));
  for (const auto& mode : pot.full_modes()) {
    if (mode.coeff == 0.0) continue;
    std::vector<cplx> slice = detail::pair_slice_i0(beta, pot, grid, gz, mode.m[0]);
    const double k = mode.k[0];
    for (int i = 0; i < grid.n; ++i) q[i] += cplx(0, k * mode.coeff) * slice[i];
  }
  std::vector<cplx> d = detail::drift_derivative(beta, grid, q);
  for (int i = 0; i < grid.n; ++i) out.total_center[i] = d[i];
  return out;
}

// Pre-limit pair feedback at a strictly interior frequency:
//   sum_k i k Vhat (d/dv - beta v) < (i L2 - i omega)^{-1} S12 g0 >_{v*}
// evaluated through the screened closed form of the inner average.
inline GridFn<cplx> markov_limit_2corr_omega(double beta, const FourierPotential& pot,
                                             const VGrid& grid, const GZero& gz,
                                             cplx omega) {
  require(omega.imag() > 0.0, "markov_limit_2corr_omega: Im omega must be > 0");
  std::vector<cplx> q(grid.n, cplx(0, 0));
  for (const auto& mode : pot.full_modes()) {
    if (mode.coeff == 0.0) continue;
    const double k = mode.k[0];
    const double vhat = mode.coeff;
    for (int i = 0; i < grid.n; ++i) {
      cplx zeta = k * grid.coord(i) + omega;
      cplx ca = cauchy_average(beta, std::abs(k), UpperFrequency::interior(zeta));
      cplx eps = epsilon(DispersionParams(beta, pot, 1.0), mode.m,
                         UpperFrequency::interior(zeta));
      cplx slice = -vhat / eps *
                   (ca * k * gz.dg[i] + (1.0 + omega * ca) * beta * gz.g[i]);
      q[i] += cplx(0, k * vhat) * slice;
    }
  }
  std::vector<cplx> d = detail::drift_derivative(beta, grid, q);
  GridFn<cplx> out(grid, FnKind::ratio);
  for (int i = 0; i < grid.n; ++i) out[i] = d[i];
  return out;
}

struct Markov3Result {
  GridFn<double> total;       // flux form
  GridFn<cplx> total_center;  // node-centered derivative form
  DiffusionField C3;
};

// Triple-stage feedback limit; N <= 0 means the infinite-bath value, where it
// cancels the pair exchange term exactly.
inline Markov3Result markov_limit_3corr(double beta, const FourierPotential& pot,
                                        const VGrid& grid, const GZero& gz, long N) {
  require(grid.dim == 1, "markov_limit_3corr: one-dimensional grids only");
  require(N <= 0 || N >= 2, "markov_limit_3corr: N must be >= 2 (or <= 0 for infinite)");
  const double c2 = (N <= 0) ? 1.0 : double(N - 1) / double(N);
  Markov3Result out{GridFn<double>(grid, FnKind::ratio), GridFn<cplx>(grid, FnKind::ratio),
                    DiffusionField(grid)};

  for (const auto& mode : pot.full_modes()) {
    if (mode.coeff == 0.0) continue;
    double bv = beta * mode.coeff;
    double cf3 = c2 * (1.0 + bv) / (1.0 + c2 * bv);
    for (int i = 0; i < grid.n; ++i) {
      std::array<double, 3> vv{grid.coord(i), 0.0, 0.0};
      double da = delta_average(beta, mode.k, vv);
      double e2 = std::norm(epsilon_fp(beta, pot, mode.m, mode.k[0] * vv[0]));
      out.C3.xx[i] += bv * cf3 * sq(mode.k[0]) * pi * sq(mode.coeff) * da / e2;
    }
  }

  GridFn<double> f(grid, FnKind::density);
  for (int i = 0; i < grid.n; ++i)
    f[i] = maxwellian_value(beta, sq(grid.coord(i)), 1) * gz.g[i];
  GridFn<double> t3 = fp_apply_diffusion_only(out.C3, f);
  for (int i = 0; i < grid.n; ++i) {
    double M = maxwellian_value(beta, sq(grid.coord(i)), 1);
    out.total[i] = -t3[i] / M;
  }

  // Node-centered form: the triple stage resolves to the screened constant
  //   b = beta Vhat / (1 + c2 beta Vhat)
  // times the drift derivative of g0, so the slice is
  //   slice3(v) = c2 k Vhat b (g0' - beta v g0) CA(kv + i0) / eps(kv + i0).
  std::vector<cplx> q(grid.n, cplx(0, 0));
  for (const auto& mode : pot.full_modes()) {
    if (mode.coeff == 0.0) continue;
    const double k = mode.k[0];
    const double vhat = mode.coeff;
    const double b = beta * vhat / (1.0 + c2 * beta * vhat);
    for (int i = 0; i < grid.n; ++i) {
      double u = k * grid.coord(i);
      cplx ca = cauchy_average(beta, std::abs(k), UpperFrequency::plus_i0(u));
      cplx eps = epsilon_fp(beta, pot, mode.m, u);
      double g1 = gz.dg[i] - beta * grid.coord(i) * gz.g[i];
      cplx slice3 = c2 * k * vhat * b * g1 * ca / eps;
      q[i] += cplx(0, k * vhat) * slice3;
    }
  }
  std::vector<cplx> d = detail::drift_derivative(beta, grid, q);
  for (int i = 0; i < grid.n; ++i) out.total_center[i] = d[i];
  return out;
}

// ---------------------------------------------------------------------------
// Finite-horizon Duhamel evaluations of the same feedback, with uniform
// damping mu (default 1/T) standing in for the resolvent regularization.

struct DuhamelResult {
  GridFn<double> projected;
  double mu = 0.0;
  double imag_residual = 0.0;
};

inline DuhamelResult duhamel_2corr(double beta, const FourierPotential& pot,
                                   const VGrid& grid, const GZero& gz, double T,
                                   double dt, double mu = -1.0) {
  require(T > 0.0 && dt > 0.0, "duhamel_2corr: T and dt must be > 0");
  if (mu < 0.0) mu = 1.0 / T;
  const long steps = std::lround(T / dt);
  require(std::abs(steps * dt - T) < 1e-9 * std::max(1.0, T),
          "duhamel_2corr: T must be an integer number of steps");
  const int n = grid.n;
  auto v = detail::node_velocities(grid);
  auto w = maxwell_weights_1d(grid, beta);

  std::vector<PairField> finals;
  for (const auto& mode : pot.half_modes()) {
    if (mode.coeff == 0.0) continue;
    const int m = mode.m[0];
    const double k = two_pi * m;
    const double cbv = beta * mode.coeff;  // pair-stage coupling, c = 1
    PairField S = source_S12(beta, pot, grid, m, gz);
    std::vector<cplx> y(S.a.size(), cplx(0, 0)), k1(y.size()), k2(y.size()),
        k3(y.size()), k4(y.size()), tmp(y.size());
    auto rhs = [&](const std::vector<cplx>& yy, std::vector<cplx>& dy) {
      for (int i = 0; i < n; ++i) {
        NeumaierSumC avg;
        for (int j = 0; j < n; ++j) avg.add(w[j] * yy[std::size_t(i) * n + j]);
        cplx rank1 = cbv * avg.value();
        for (int j = 0; j < n; ++j) {
          std::size_t id = std::size_t(i) * n + j;
          cplx ly = k * (v[j] - v[i]) * yy[id] + k * v[j] * rank1;
          dy[id] = cplx(0, -1) * ly - mu * yy[id] + S.a[id];
        }
      }
    };
    for (long st = 0; st < steps; ++st) {
      rhs(y, k1);
      for (std::size_t q = 0; q < y.size(); ++q) tmp[q] = y[q] + 0.5 * dt * k1[q];
      rhs(tmp, k2);
      for (std::size_t q = 0; q < y.size(); ++q) tmp[q] = y[q] + 0.5 * dt * k2[q];
      rhs(tmp, k3);
      for (std::size_t q = 0; q < y.size(); ++q) tmp[q] = y[q] + dt * k3[q];
      rhs(tmp, k4);
      for (std::size_t q = 0; q < y.size(); ++q)
        y[q] += dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
    }
    PairField Fp(grid, m);
    Fp.a = y;
    PairField Fm(grid, -m);
    for (std::size_t q = 0; q < y.size(); ++q) Fm.a[q] = std::conj(y[q]);
    finals.push_back(std::move(Fp));
    finals.push_back(std::move(Fm));
  }
  DuhamelResult out{GridFn<double>(grid, FnKind::ratio), mu, 0.0};
  if (finals.empty()) return out;
  Projection proj = project_M21(beta, pot, finals);
  out.projected = proj.field;
  out.imag_residual = proj.imag_residual;
  return out;
}

inline DuhamelResult duhamel_3corr(double beta, const FourierPotential& pot,
                                   const VGrid& grid, const GZero& gz, long N,
                                   double T, double dt, double mu = -1.0) {
  require(T > 0.0 && dt > 0.0, "duhamel_3corr: T and dt must be > 0");
  require(N <= 0 || N >= 2, "duhamel_3corr: N must be >= 2 (or <= 0 for infinite)");
  if (mu < 0.0) mu = 1.0 / T;
  const double c2 = (N <= 0) ? 1.0 : double(N - 1) / double(N);
  const long steps = std::lround(T / dt);
  require(std::abs(steps * dt - T) < 1e-9 * std::max(1.0, T),
          "duhamel_3corr: T must be an integer number of steps");
  const int n = grid.n;
  auto v = detail::node_velocities(grid);
  auto w = maxwell_weights_1d(grid, beta);

  std::vector<PairField> finals;
  for (const auto& mode : pot.half_modes()) {
    if (mode.coeff == 0.0) continue;
    const int m = mode.m[0];
    const double k = two_pi * m;
    const double vhat = mode.coeff;
    const double cbv = beta * vhat;

    // Triple stage carries the bracket of the source; the tagged factor g0(v)
    // stays symbolic and enters through the drift derivative below.
    std::vector<cplx> Z(std::size_t(n) * n, cplx(0, 0));
    std::vector<cplx> Y(std::size_t(n) * n, cplx(0, 0));
    std::vector<double> g1(n);
    for (int i = 0; i < n; ++i) g1[i] = gz.dg[i] - beta * v[i] * gz.g[i];

    std::vector<cplx> zk1(Z.size()), zk2(Z.size()), zk3(Z.size()), zk4(Z.size()),
        ztmp(Z.size());
    std::vector<cplx> yk1(Y.size()), yk2(Y.size()), yk3(Y.size()), yk4(Y.size()),
        ytmp(Y.size());

    auto z_rhs = [&](const std::vector<cplx>& zz, std::vector<cplx>& dz) {
      std::vector<cplx> avgJ(n, cplx(0, 0)), avgL(n, cplx(0, 0));
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) {
          avgJ[l] += w[j] * zz[std::size_t(j) * n + l];
          avgL[j] += w[l] * zz[std::size_t(j) * n + l];
        }
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) {
          std::size_t id = std::size_t(j) * n + l;
          cplx lz = k * (v[j] - v[l]) * zz[id] +
                    c2 * cbv * k * (v[j] * avgJ[l] - v[l] * avgL[j]);
          cplx src = cplx(0, -k * cbv) * (v[j] - v[l]);
          dz[id] = cplx(0, -1) * lz - mu * zz[id] + src;
        }
    };
    auto y_rhs = [&](const std::vector<cplx>& yy, const std::vector<cplx>& zz,
                     std::vector<cplx>& dy) {
      std::vector<cplx> q(n, cplx(0, 0));
      for (int j = 0; j < n; ++j) {
        NeumaierSumC acc;
        for (int l = 0; l < n; ++l) acc.add(w[l] * zz[std::size_t(j) * n + l]);
        q[j] = acc.value();
      }
      for (int i = 0; i < n; ++i) {
        NeumaierSumC avg;
        for (int j = 0; j < n; ++j) avg.add(w[j] * yy[std::size_t(i) * n + j]);
        cplx rank1 = cbv * avg.value();
        for (int j = 0; j < n; ++j) {
          std::size_t id = std::size_t(i) * n + j;
          cplx ly = k * (v[j] - v[i]) * yy[id] + k * v[j] * rank1;
          cplx src = cplx(0, -c2 * k * vhat) * g1[i] * q[j];
          dy[id] = cplx(0, -1) * ly - mu * yy[id] + src;
        }
      }
    };

    for (long st = 0; st < steps; ++st) {
      z_rhs(Z, zk1);
      y_rhs(Y, Z, yk1);
      for (std::size_t q = 0; q < Z.size(); ++q) ztmp[q] = Z[q] + 0.5 * dt * zk1[q];
      for (std::size_t q = 0; q < Y.size(); ++q) ytmp[q] = Y[q] + 0.5 * dt * yk1[q];
      z_rhs(ztmp, zk2);
      y_rhs(ytmp, ztmp, yk2);
      for (std::size_t q = 0; q < Z.size(); ++q) ztmp[q] = Z[q] + 0.5 * dt * zk2[q];
      for (std::size_t q = 0; q < Y.size(); ++q) ytmp[q] = Y[q] + 0.5 * dt * yk2[q];
      z_rhs(ztmp, zk3);
      y_rhs(ytmp, ztmp, yk3);
      for (std::size_t q = 0; q < Z.size(); ++q) ztmp[q] = Z[q] + dt * zk3[q];
      for (std::size_t q = 0; q < Y.size(); ++q) ytmp[q] = Y[q] + dt * yk3[q];
      z_rhs(ztmp, zk4);
      y_rhs(ytmp, ztmp, yk4);
      for (std::size_t q = 0; q < Z.size(); ++q)
        Z[q] += dt / 6.0 * (zk1[q] + 2.0 * zk2[q] + 2.0 * zk3[q] + zk4[q]);
      for (std::size_t q = 0; q < Y.size(); ++q)
        Y[q] += dt / 6.0 * (yk1[q] + 2.0 * yk2[q] + 2.0 * yk3[q] + yk4[q]);
    }
    PairField Fp(grid, m);
    Fp.a = Y;
    PairField Fm(grid, -m);
    for (std::size_t q = 0; q < Y.size(); ++q) Fm.a[q] = std::conj(Y[q]);
    finals.push_back(std::move(Fp));
    finals.push_back(std::move(Fm));
  }
  DuhamelResult out{GridFn<double>(grid, FnKind::ratio), mu, 0.0};
  if (finals.empty()) return out;
  Projection proj = project_M21(beta, pot, finals);
  out.projected = proj.field;
  out.imag_residual = proj.imag_residual;
  return out;
}

// ---------------------------------------------------------------------------
// Contribution of initial pair correlations in the bath, transported through
// the triple and pair stages and projected:
//   i omega M21 (i L2 - i omega)^{-1} M32 (i L3 - i omega)^{-1} [ g0(v) H0(k) ].

struct InitCorrResult {
  GridFn<cplx> field;
  double norm = 0.0;  // weighted norm (order -1) of the field
};

namespace detail {

// Bath quadrature nodes shifted by a fraction of a cell, with matching
// normalized Gaussian weights.  Offsetting the bath slots keeps every
// resolvent denominator k(v - v') - omega a fixed distance from zero as
// Im omega -> 0, so boundary-value trends stay representable on one grid.
inline std::vector<double> offset_velocities(const VGrid& g, double frac) {
  std::vector<double> v(g.n);
  for (int i = 0; i < g.n; ++i) v[i] = g.coord(i) + frac * g.h();
  return v;
}

inline std::vector<double> gauss_weights_at(const std::vector<double>& v, double h,
                                            double beta) {
  std::vector<double> w(v.size());
  NeumaierSum total;
  for (std::size_t i = 0; i < v.size(); ++i) {
    w[i] = h * maxwellian_value(beta, sq(v[i]), 1);
    total.add(w[i]);
  }
  for (double& x : w) x /= total.value();
  return w;
}

// Solve (L3_red - omega) X = R on the reduced bath slots by a rank-two
// correction: the averages over each slot close into a 2n x 2n dense system.
// The two slots carry their own node/weight sets.
inline std::vector<cplx> l3_reduced_solve(double beta, const FourierPotential& pot,
                                          double c2, int mode_m, cplx omega,
                                          const std::vector<cplx>& R,
                                          const std::vector<double>& vj,
                                          const std::vector<double>& wj,
                                          const std::vector<double>& vl,
                                          const std::vector<double>& wl) {
  const int n = int(vj.size());
  require(int(wj.size()) == n && int(vl.size()) == n && int(wl.size()) == n,
          "l3_reduced_solve: slot node/weight sizes must agree");
  const double k = two_pi * mode_m;
  const double cbv = c2 * beta * mode_coeff(pot, mode_m);

  std::vector<cplx> dinv(std::size_t(n) * n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l)
      dinv[std::size_t(j) * n + l] = 1.0 / (k * vj[j] - k * vl[l] - omega);

  // Unknowns: s_l = <X(., l)> over the j slot, r_j = <X(j, .)> over the l slot.
  CMatrix A(2 * n);
  std::vector<cplx> b(2 * n, cplx(0, 0));
  for (int i = 0; i < 2 * n; ++i)
    for (int j = 0; j < 2 * n; ++j) A(i, j) = (i == j) ? cplx(1, 0) : cplx(0, 0);
  for (int l = 0; l < n; ++l) {
    NeumaierSumC P, RS;
    for (int j = 0; j < n; ++j) {
      P.add(wj[j] * k * vj[j] * dinv[std::size_t(j) * n + l]);
      RS.add(wj[j] * R[std::size_t(j) * n + l] * dinv[std::size_t(j) * n + l]);
    }
    A(l, l) += cbv * P.value();
    for (int j = 0; j < n; ++j)
      A(l, n + j) = -cbv * k * vl[l] * wj[j] * dinv[std::size_t(j) * n + l];
    b[l] = RS.value();
  }
  for (int j = 0; j < n; ++j) {
    NeumaierSumC Q, RR;
    for (int l = 0; l < n; ++l) {
      Q.add(wl[l] * k * vl[l] * dinv[std::size_t(j) * n + l]);
      RR.add(wl[l] * R[std::size_t(j) * n + l] * dinv[std::size_t(j) * n + l]);
    }
    A(n + j, n + j) -= cbv * Q.value();
    for (int l = 0; l < n; ++l)
      A(n + j, l) = cbv * k * vj[j] * wl[l] * dinv[std::size_t(j) * n + l];
    b[n + j] = RR.value();
  }
  CLu lu(A);
  std::vector<cplx> sr = lu.solve(b);

  std::vector<cplx> X(std::size_t(n) * n);
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l)
      X[std::size_t(j) * n + l] = (R[std::size_t(j) * n + l] -
                                   cbv * k * vj[j] * sr[l] + cbv * k * vl[l] * sr[n + j]) *
                                  dinv[std::size_t(j) * n + l];
  return X;
}

}  // namespace detail

inline InitCorrResult init_corr_contribution(double beta, const FourierPotential& pot,
                                             const VGrid& grid, const GZero& gz, long N,
                                             const std::vector<std::pair<int, double>>& h0,
                                             cplx omega) {
  require(omega.imag() > 0.0, "init_corr_contribution: Im omega must be > 0");
  require(N <= 0 || N >= 2, "init_corr_contribution: N must be >= 2 (or <= 0)");
  const double c2 = (N <= 0) ? 1.0 : double(N - 1) / double(N);
  const int n = grid.n;
  auto v = detail::node_velocities(grid);

  // Bath slots use staggered quadrature nodes (tagged output stays on grid
  // nodes).  With aligned nodes every discrete resolvent hits an exact
  // resonance 1/(-omega) on its diagonal, which fabricates a 1/Im(omega)
  // blow-up that the continuum operator does not have; offsetting the two
  // slots by +-h/3 keeps all denominators at least k h/3 away from zero so
  // the boundary-value limit is uniform in Im(omega) on a fixed grid.
  auto vjo = detail::offset_velocities(grid, 1.0 / 3.0);
  auto wjo = detail::gauss_weights_at(vjo, grid.h(), beta);
  auto vlo = detail::offset_velocities(grid, -1.0 / 3.0);
  auto wlo = detail::gauss_weights_at(vlo, grid.h(), beta);

  std::vector<PairField> pieces;
  for (const auto& [m, hval] : h0) {
    require(m > 0, "init_corr_contribution: list half modes (m > 0) only");
    const double vhat = detail::mode_coeff(pot, m);
    if (vhat == 0.0 || hval == 0.0) continue;
    const double k = two_pi * m;
    const double cbv = beta * vhat;

    // Triple stage: (i L3 - i omega)^{-1} on the constant field = -i (L3 - omega)^{-1} 1.
    std::vector<cplx> ones(std::size_t(n) * n, cplx(1, 0));
    std::vector<cplx> X =
        detail::l3_reduced_solve(beta, pot, c2, m, omega, ones, vjo, wjo, vlo, wlo);
    for (auto& x : X) x *= cplx(0, -1);

    std::vector<cplx> q(n, cplx(0, 0));
    for (int j = 0; j < n; ++j) {
      NeumaierSumC acc;
      for (int l = 0; l < n; ++l) acc.add(wlo[l] * X[std::size_t(j) * n + l]);
      q[j] = acc.value();
    }

    // Pair stage source from the exchange projection, with the tagged factor
    // g0(v) H0(k) reinstated through the drift derivative of g0.
    PairField rhs(grid, m);
    for (int i = 0; i < n; ++i) {
      double g1 = gz.dg[i] - beta * v[i] * gz.g[i];
      for (int j = 0; j < n; ++j)
        rhs.at(i, j) = cplx(0, -c2 * k * vhat) * hval * g1 * q[j];
    }

    // Pair stage resolvent, row by row (the tagged slot is diagonal); the
    // bath slot keeps the staggered j nodes.
    PairField W(grid, m);
    std::vector<double> kv(n);
    for (int j = 0; j < n; ++j) kv[j] = k * vjo[j];
    std::vector<cplx> row(n);
    for (int i = 0; i < n; ++i) {
      cplx zeta = k * v[i] + omega;
      cplx eps = detail::discrete_epsilon(cbv, kv, wjo, zeta);
      detail::bath_resolvent_row(cbv, kv, wjo, zeta, eps, &rhs.a[std::size_t(i) * n],
                                 row.data());
      for (int j = 0; j < n; ++j) W.at(i, j) = cplx(0, -1) * row[j];
    }
    PairField Wm(grid, -m);
    for (std::size_t qq = 0; qq < W.a.size(); ++qq) Wm.a[qq] = std::conj(W.a[qq]);
    pieces.push_back(std::move(W));
    pieces.push_back(std::move(Wm));
  }

  InitCorrResult out{GridFn<cplx>(grid, FnKind::ratio), 0.0};
  if (pieces.empty()) return out;

  // Complex-valued projection: accumulate the slice, then differentiate.
  std::vector<cplx> s(n, cplx(0, 0));
  for (const auto& F : pieces) {
    const double k = two_pi * F.mode_m;
    const double vhat = detail::mode_coeff(pot, F.mode_m);
    for (int i = 0; i < n; ++i) {
      NeumaierSumC avg;
      for (int j = 0; j < n; ++j) avg.add(wjo[j] * F.at(i, j));
      s[i] += cplx(0, k * vhat) * avg.value();
    }
  }
  std::vector<cplx> d = detail::drift_derivative(beta, grid, s);
  for (int i = 0; i < n; ++i) out.field[i] = cplx(0, 1) * omega * d[i];

  GridFn<double> re(grid, FnKind::ratio), im(grid, FnKind::ratio);
  for (int i = 0; i < n; ++i) {
    re[i] = out.field[i].real();
    im[i] = out.field[i].imag();
  }
  double nr = weighted_norm(beta, re, -1);
  double ni = weighted_norm(beta, im, -1);
  out.norm = std::sqrt(sq(nr) + sq(ni));
  return out;
}

// ---------------------------------------------------------------------------
// Truncated hierarchy evolution: tagged law G1 coupled to the rescaled pair
// and triple stages (N G2, N G3) per retained mode, everything else dropped.

struct TruncatedResult {
  std::vector<double> times;
  std::vector<double> norm2;  // pair-stage norm, summed over modes
  std::vector<double> norm3;  // triple-stage norm
  GridFn<double> g1;
  GridFn<double> feedback;  // N dG1/dt at the final time
};

inline TruncatedResult evolve_truncated(double beta, const FourierPotential& pot,
                                        const VGrid& grid, const GZero& gz, long N,
                                        double T, double dt, int records = 8) {
  require(grid.dim == 1, "evolve_truncated: one-dimensional grids only");
  require(N >= 2, "evolve_truncated: N must be >= 2");
  require(T > 0.0 && dt > 0.0, "evolve_truncated: T and dt must be > 0");
  const long steps = std::lround(T / dt);
  require(std::abs(steps * dt - T) < 1e-9 * std::max(1.0, T),
          "evolve_truncated: T must be an integer number of steps");
  const double c2 = double(N - 1) / double(N);
  const int n = grid.n;
  auto v = detail::node_velocities(grid);
  auto w = maxwell_weights_1d(grid, beta);

  std::vector<int> ms;
  std::vector<double> vhats;
  for (const auto& mode : pot.half_modes())
    if (mode.coeff != 0.0) {
      ms.push_back(mode.m[0]);
      vhats.push_back(mode.coeff);
    }
  const std::size_t n1 = n, n2 = std::size_t(n) * n, n3 = std::size_t(n) * n * n;
  const std::size_t per_mode = n2 + n3;
  const std::size_t total = n1 + ms.size() * per_mode;

  std::vector<cplx> y(total, cplx(0, 0));
  for (int i = 0; i < n; ++i) y[i] = gz.g[i];

  auto rhs = [&](const std::vector<cplx>& yy, std::vector<cplx>& dy) {
    // Tagged feedback: (1/N) sum_modes (both signs) i k Vhat D (Im <W2>).
    std::vector<cplx> s(n, cplx(0, 0));
    for (std::size_t q = 0; q < ms.size(); ++q) {
      const double k = two_pi * ms[q];
      const cplx* W2 = &yy[n1 + q * per_mode];
      for (int i = 0; i < n; ++i) {
        NeumaierSumC avg_im;
        for (int j = 0; j < n; ++j) avg_im.add(w[j] * W2[std::size_t(i) * n + j].imag());
        s[i] += -2.0 * k * vhats[q] * avg_im.value();
      }
    }
    std::vector<cplx> ds = detail::drift_derivative(beta, grid, s);
    for (int i = 0; i < n; ++i) dy[i] = ds[i] / double(N);

    // Tagged derivative for the sources: analytic at t = 0 plus the discrete
    // derivative of the (small) increment accumulated since.
    std::vector<cplx> delta(n);
    for (int i = 0; i < n; ++i) delta[i] = yy[i] - gz.g[i];
    std::vector<cplx> ddelta = detail::plain_derivative(grid, delta);
    std::vector<cplx> g1v(n), dg1v(n);
    for (int i = 0; i < n; ++i) {
      g1v[i] = yy[i];
      dg1v[i] = gz.dg[i] + ddelta[i];
    }

    for (std::size_t q = 0; q < ms.size(); ++q) {
      const double k = two_pi * ms[q];
      const double vhat = vhats[q];
      const double cbv = beta * vhat;
      const cplx* W2 = &yy[n1 + q * per_mode];
      const cplx* W3 = &yy[n1 + q * per_mode + n2];
      cplx* dW2 = &dy[n1 + q * per_mode];
      cplx* dW3 = &dy[n1 + q * per_mode + n2];

      // Pair stage: transport + tagged source + triple-stage exchange.
      std::vector<cplx> avgW3(n2, cplx(0, 0));  // <W3>_{w*} on (i, j)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          NeumaierSumC acc;
          const cplx* row = &W3[(std::size_t(i) * n + j) * n];
          for (int l = 0; l < n; ++l) acc.add(w[l] * row[l]);
          avgW3[std::size_t(i) * n + j] = acc.value();
        }
      // drift derivative in the tagged slot, column by column
      std::vector<cplx> col(n), dcol(n);
      std::vector<cplx> m32(n2);
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) col[i] = avgW3[std::size_t(i) * n + j];
        dcol = detail::drift_derivative(beta, grid, col);
        for (int i = 0; i < n; ++i)
          m32[std::size_t(i) * n + j] = cplx(0, -c2 * k * vhat) * dcol[i];
      }
      for (int i = 0; i < n; ++i) {
        NeumaierSumC avg;
        for (int j = 0; j < n; ++j) avg.add(w[j] * W2[std::size_t(i) * n + j]);
        cplx rank1 = cbv * avg.value();
        cplx base = dg1v[i] - beta * v[i] * g1v[i];
        for (int j = 0; j < n; ++j) {
          std::size_t id = std::size_t(i) * n + j;
          cplx ly = k * (v[j] - v[i]) * W2[id] + k * v[j] * rank1;
          cplx s12 = cplx(0, -k * vhat) * (base + beta * v[j] * g1v[i]);
          dW2[id] = cplx(0, -1) * ly + s12 + m32[id];
        }
      }

      // Triple stage: transport + tagged source.
      std::vector<cplx> avgJ(n2, cplx(0, 0));  // over j, on (i, l)
      std::vector<cplx> avgL(n2, cplx(0, 0));  // over l, on (i, j)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const cplx* row = &W3[(std::size_t(i) * n + j) * n];
          for (int l = 0; l < n; ++l) {
            avgJ[std::size_t(i) * n + l] += w[j] * row[l];
            avgL[std::size_t(i) * n + j] += w[l] * row[l];
          }
        }
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t base3 = (std::size_t(i) * n + j) * n;
          for (int l = 0; l < n; ++l) {
            cplx lg = k * (v[j] - v[l]) * W3[base3 + l] +
                      c2 * cbv * k * (v[j] * avgJ[std::size_t(i) * n + l] -
                                      v[l] * avgL[std::size_t(i) * n + j]);
            cplx s13 = cplx(0, -k * cbv) * (v[j] - v[l]) * g1v[i];
            dW3[base3 + l] = cplx(0, -1) * lg + s13;
          }
        }
    }
  };

  TruncatedResult rec;
  rec.g1 = GridFn<double>(grid, FnKind::ratio);
  rec.feedback = GridFn<double>(grid, FnKind::ratio);
  auto record = [&](double t) {
    NeumaierSum s2, s3;
    for (std::size_t q = 0; q < ms.size(); ++q) {
      const cplx* W2 = &y[n1 + q * per_mode];
      const cplx* W3 = &y[n1 + q * per_mode + n2];
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          s2.add(w[i] * w[j] * std::norm(W2[std::size_t(i) * n + j]));
          for (int l = 0; l < n; ++l)
            s3.add(w[i] * w[j] * w[l] * std::norm(W3[(std::size_t(i) * n + j) * n + l]));
        }
    }
    rec.times.push_back(t);
    rec.norm2.push_back(std::sqrt(s2.value()));
    rec.norm3.push_back(std::sqrt(s3.value()));
  };

  std::vector<cplx> k1(total), k2(total), k3(total), k4(total), tmp(total);
  const long stride = std::max<long>(1, steps / std::max(1, records));
  record(0.0);
  for (long st = 1; st <= steps; ++st) {
    rhs(y, k1);
    for (std::size_t q = 0; q < total; ++q) tmp[q] = y[q] + 0.5 * dt * k1[q];
    rhs(tmp, k2);
    for (std::size_t q = 0; q < total; ++q) tmp[q] = y[q] + 0.5 * dt * k2[q];
    rhs(tmp, k3);
    for (std::size_t q = 0; q < total; ++q) tmp[q] = y[q] + dt * k3[q];
    rhs(tmp, k4);
    for (std::size_t q = 0; q < total; ++q)
      y[q] += dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
    if (st % stride == 0 || st == steps) record(st * dt);
  }

  rhs(y, k1);
  for (int i = 0; i < n; ++i) {
    rec.g1[i] = y[i].real();
    rec.feedback[i] = double(N) * k1[i].real();
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Laplace-dual weight of a compactly supported time profile:
//   g(alpha) = (1/2 pi) int_0^inf e^{(i alpha + 1) tau} phi(tau) / (i alpha + 1) d tau,
// whose alpha-integral recovers int phi and which decays superpolynomially for
// smooth bumps supported away from zero.
inline cplx laplace_weight(const std::function<double(double)>& phi, double tau_min,
                           double tau_max, double alpha) {
  require(tau_max > tau_min && tau_min >= 0.0,
          "laplace_weight: need 0 <= tau_min < tau_max");
  const cplx s(1.0, alpha);
  auto f = [&](double tau) { return std::exp(s * tau) * phi(tau) / s; };
  cplx integral = adaptive_simpson<cplx>(f, tau_min, tau_max, 1e-13);
  return integral / two_pi;
}

// Standard smooth bump supported on (center - width, center + width).
struct BumpFn {
  double center = 1.5;
  double width = 1.0;
  double operator()(double tau) const {
    double s = (tau - center) / width;
    if (std::abs(s) >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - s * s));
  }
};

}  // namespace lblab
