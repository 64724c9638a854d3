#pragma once

// Monte-Carlo estimators over ensembles of tagged-particle trajectories.
//
// Every run r draws its own generator from derive_seed(base_seed, r) and all
// reductions run in run-index order with compensated sums, so results are
// bit-identical for a fixed base seed regardless of the thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lblab/common.hpp"
#include "lblab/dispersion.hpp"
#include "lblab/kinetic_ops.hpp"
#include "lblab/nbody.hpp"
#include "lblab/parallel.hpp"
#include "lblab/potential.hpp"
#include "lblab/rng.hpp"
#include "lblab/vgrid.hpp"

namespace lblab {

// ---------------------------------------------------------------------------
// Observables.

// Probabilists' Hermite polynomial He_m (He_0 = 1, He_1 = x, He_{m+1} =
// x He_m - m He_{m-1}).
inline double hermite_he(int m, double x) {
  require(m >= 0, "hermite_he: order must be >= 0");
  double h0 = 1.0, h1 = x;
  if (m == 0) return h0;
  if (m == 1) return h1;
  for (int j = 1; j < m; ++j) {
    double h2 = x * h1 - j * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

// Velocity observable family: phi(v) = He_m(sqrt(beta) v) e^{-a v^2}.
// Polynomially weighted Gaussians stay bounded, separate the low Hermite
// modes of the velocity law, and have exactly computable grid pairings.
struct HermiteGaussian {
  int m = 1;
  double a = 0.5;
  double beta = 1.0;
  std::string name;

  double operator()(double v) const {
    return hermite_he(m, std::sqrt(beta) * v) * std::exp(-a * v * v);
  }
};

// Phase-space observable psi(x, v) = cos(2 pi mode x) * vel(v); mode == 0
// drops the x factor (and then the Maxwellian gauge of vel matters).
struct PhaseObservable {
  int mode = 0;
  std::function<double(double)> vel;

  double operator()(double x, double v) const {
    double f = vel ? vel(v) : 1.0;
    return (mode == 0) ? f : std::cos(two_pi * mode * x) * f;
  }
};

// Gaussian-measure average of a velocity function, int f(v) M_beta(v) dv,
// by fine trapezoid over [-8 sigma, 8 sigma] (used for gauge checks).
inline double maxwell_average(const std::function<double(double)>& f, double beta) {
  const double sigma = 1.0 / std::sqrt(beta);
  const int n = 4000;
  const double a = -8.0 * sigma, h = 16.0 * sigma / n;
  NeumaierSum acc;
  for (int i = 0; i <= n; ++i) {
    double v = a + i * h;
    double w = (i == 0 || i == n) ? 0.5 : 1.0;
    acc.add(w * f(v) * maxwellian_value(beta, v * v, 1));
  }
  return acc.value() * h;
}

// ---------------------------------------------------------------------------
// Common ensemble configuration.

struct EnsembleSpec {
  FourierPotential pot = FourierPotential::from_preset("zero", 1, 0.0);
  double beta = 1.0;
  int N = 64;
  double dt = 2e-3;
  long runs = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  GibbsSamplerCfg gibbs{};
  TaggedInitLaw law = TaggedInitLaw::maxwellian();

  void validate() const {
    require(beta > 0.0 && dt > 0.0 && runs > 0 && N >= 1,
            "EnsembleSpec: beta, dt, runs, N must be positive");
    require(pot.dim() == 1, "EnsembleSpec: estimators are one-dimensional");
  }
};

struct MeanEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long runs = 0;
};

namespace detail {

inline MeanEstimate reduce_mean(const std::vector<double>& samples) {
  MeanEstimate out;
  out.runs = long(samples.size());
  NeumaierSum s;
  for (double x : samples) s.add(x);
  out.value = s.value() / double(samples.size());
  NeumaierSum s2;
  for (double x : samples) s2.add(sq(x - out.value));
  double var = s2.value() / std::max<std::size_t>(1, samples.size() - 1);
  out.std_error = std::sqrt(var / double(samples.size()));
  return out;
}

inline long step_index(double t, double dt, const char* what) {
  long s = std::lround(t / dt);
  require(std::abs(s * dt - t) <= 1e-9 * std::max(1.0, std::abs(t)), what);
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Drift estimator: for each observable phi,
//   D_r = N [ phi(v_0(t_c + delta)) - phi(v_0(t_c - delta)) ] / (2 delta)
// along a single trajectory (the two evaluations share the whole path, which
// cancels most of the O(1) fluctuation of phi itself).

struct DriftResult {
  std::vector<MeanEstimate> per_observable;
};

inline DriftResult estimate_drift(const EnsembleSpec& spec,
                                  const std::vector<std::function<double(double)>>& phis,
                                  double t_center, double delta,
                                  std::vector<std::vector<double>>* per_run = nullptr) {
  spec.validate();
  require(!phis.empty(), "estimate_drift: need at least one observable");
  require(delta > 0.0 && t_center > delta, "estimate_drift: need 0 < delta < t_center");
  const long s_minus = detail::step_index(t_center - delta, spec.dt,
                                          "estimate_drift: t_c - delta must align with dt");
  const long s_plus = detail::step_index(t_center + delta, spec.dt,
                                         "estimate_drift: t_c + delta must align with dt");
  const double T = t_center + delta;

  const std::size_t P = phis.size();
  std::vector<std::vector<double>> samples(P, std::vector<double>(spec.runs, 0.0));
  parallel_for(std::size_t(spec.runs), spec.threads, [&](std::size_t r) {
    Rng rng(derive_seed(spec.seed, std::uint64_t(r)));
    SimState st = sample_gibbs(spec.pot, spec.beta, spec.N, spec.gibbs, spec.law, rng);
    std::vector<double> lo(P, 0.0), hi(P, 0.0);
    run_trajectory(spec.pot, st, T, spec.dt, {s_minus, s_plus},
                   [&](const SimState& s, long step) {
                     for (std::size_t p = 0; p < P; ++p) {
                       double val = phis[p](s.vp(0)[0]);
                       (step == s_minus ? lo[p] : hi[p]) = val;
                     }
                   });
    for (std::size_t p = 0; p < P; ++p)
      samples[p][r] = spec.N * (hi[p] - lo[p]) / (2.0 * delta);
  });

  DriftResult out;
  for (std::size_t p = 0; p < P; ++p)
    out.per_observable.push_back(detail::reduce_mean(samples[p]));
  if (per_run) *per_run = std::move(samples);
  return out;
}

// ---------------------------------------------------------------------------
// Kinetic prediction of the drift: pair phi against the full collision
// operator applied to the initial velocity law, on a fine grid,
//   prediction = int phi(v) M(v) [ K g0 ](v) dv.

struct DriftPrediction {
  VGrid grid{1, 16, 6.0};
  GridFn<double> rate_density{VGrid{1, 16, 6.0}, FnKind::density};  // M * (K g0)
  double pair(const std::function<double(double)>& phi) const {
    NeumaierSum acc;
    for (int i = 0; i < grid.n; ++i) acc.add(phi(grid.coord(i)) * rate_density[i]);
    return acc.value() * grid.h();
  }
};

inline DriftPrediction drift_prediction(const FourierPotential& pot, double beta,
                                        int N,
                                        const std::function<double(double)>& g0,
                                        int n_grid = 400, double widths = 8.0) {
  require(pot.dim() == 1, "drift_prediction: one-dimensional only");
  VGrid grid = VGrid::for_beta(1, n_grid, beta, widths);
  GridFn<double> f(grid, FnKind::density);
  for (int i = 0; i < grid.n; ++i) {
    double v = grid.coord(i);
    f[i] = maxwellian_value(beta, v * v, 1) * g0(v);
  }
  DriftPrediction out;
  out.grid = grid;
  if (pot.empty()) {
    out.rate_density = GridFn<double>(grid, FnKind::density);
    return out;
  }
  DiffusionField D = diffusion_tensor(beta, pot, grid);
  GridFn<double> term1 = fp_apply(beta, D, f);

  // Exchange corrections: the pair term carries kernel weight beta*Vhat per
  // mode, the triple term cancels it up to the finite-N factor.
  DiffusionField C2(grid), C3(grid);
  for (const auto& mode : pot.full_modes()) {
    if (mode.coeff == 0.0) continue;
    double bv = beta * mode.coeff;
    double cf3 = ((N - 1.0) / N) * (1.0 + bv) / (1.0 + ((N - 1.0) / N) * bv);
    for (int i = 0; i < grid.n; ++i) {
      std::array<double, 3> v{grid.coord(i), 0.0, 0.0};
      double da = delta_average(beta, mode.k, v);
      double e2 = std::norm(epsilon_fp(beta, pot, mode.m, mode.k[0] * v[0]));
      double kk = mode.k[0] * mode.k[0];
      double base = kk * pi * mode.coeff * mode.coeff * da / e2;
      C2.xx[i] += bv * base;
      C3.xx[i] += bv * base * cf3;
    }
  }
  GridFn<double> term2 = fp_apply_diffusion_only(C2, f);
  GridFn<double> term3 = fp_apply_diffusion_only(C3, f);
  out.rate_density = GridFn<double>(grid, FnKind::density);
  for (int i = 0; i < grid.n; ++i)
    out.rate_density[i] = term1[i] + term2[i] - term3[i];
  return out;
}

// ---------------------------------------------------------------------------
// Second-cumulant estimator:
//   estimate = mean_r[ phi(z_0) (1/N) sum_j psi(z_j) ] - mean[phi] mean[(1/N) sum psi]
// which pairs against the two-particle correlation when psi has zero
// Maxwellian gauge.  Standard error by the linearized influence function.

struct Cumulant2Result {
  MeanEstimate estimate;
  double gauge = 0.0;    // |int psi d(uniform x Maxwell)|, enforced <= 1e-8
  double mean_a = 0.0;   // raw product mean
  double mean_b = 0.0;   // mean of phi(z_0)
  double mean_c = 0.0;   // mean of bath average of psi
};

inline Cumulant2Result estimate_cumulant2(const EnsembleSpec& spec,
                                          const PhaseObservable& phi,
                                          const PhaseObservable& psi, double t) {
  spec.validate();
  require(t > 0.0, "estimate_cumulant2: t must be > 0");
  const long s_t = detail::step_index(t, spec.dt,
                                      "estimate_cumulant2: t must align with dt");

  Cumulant2Result out;
  out.gauge = (psi.mode == 0 && psi.vel)
                  ? std::abs(maxwell_average(psi.vel, spec.beta))
                  : 0.0;
  require(out.gauge <= 1e-8,
          "estimate_cumulant2: psi must have zero Maxwellian gauge");

  std::vector<double> A(spec.runs, 0.0), B(spec.runs, 0.0), C(spec.runs, 0.0);
  parallel_for(std::size_t(spec.runs), spec.threads, [&](std::size_t r) {
    Rng rng(derive_seed(spec.seed, std::uint64_t(r)));
    SimState st = sample_gibbs(spec.pot, spec.beta, spec.N, spec.gibbs, spec.law, rng);
    run_trajectory(spec.pot, st, t, spec.dt, {s_t}, [&](const SimState& s, long) {
      double phi0 = phi(s.xp(0)[0], s.vp(0)[0]);
      NeumaierSum bath;
      for (int j = 1; j <= s.N; ++j) bath.add(psi(s.xp(j)[0], s.vp(j)[0]));
      double cbar = bath.value() / s.N;
      A[r] = phi0 * cbar;
      B[r] = phi0;
      C[r] = cbar;
    });
  });

  MeanEstimate ma = detail::reduce_mean(A);
  MeanEstimate mb = detail::reduce_mean(B);
  MeanEstimate mc = detail::reduce_mean(C);
  out.mean_a = ma.value;
  out.mean_b = mb.value;
  out.mean_c = mc.value;

  std::vector<double> infl(spec.runs, 0.0);
  for (long r = 0; r < spec.runs; ++r)
    infl[r] = (A[r] - ma.value) - mb.value * (C[r] - mc.value) -
              mc.value * (B[r] - mb.value);
  MeanEstimate mi = detail::reduce_mean(infl);

  out.estimate.value = ma.value - mb.value * mc.value;
  out.estimate.std_error = mi.std_error;
  out.estimate.runs = spec.runs;
  return out;
}

// ---------------------------------------------------------------------------
// Drift theorem check: z-scores of measured drifts against the kinetic
// prediction over a grid of (observable, time) cells.

struct TheoremCell {
  std::string observable;
  double tau = 0.0;       // macroscopic time label
  double t_center = 0.0;  // microscopic center time used
  double estimate = 0.0;
  double std_error = 0.0;
  double prediction = 0.0;
  double z = 0.0;
};

struct TheoremCheckResult {
  std::vector<TheoremCell> cells;
  double max_abs_z = 0.0;
  double pass_fraction = 0.0;  // fraction of cells with |z| <= 2
};

inline TheoremCheckResult theorem_check(const EnsembleSpec& spec,
                                        const std::vector<HermiteGaussian>& phis,
                                        const std::function<double(double)>& g0,
                                        const std::vector<double>& t_centers,
                                        double delta, double z_pass = 2.0) {
  spec.validate();
  require(!phis.empty() && !t_centers.empty(), "theorem_check: empty cell grid");
  DriftPrediction pred = drift_prediction(spec.pot, spec.beta, spec.N, g0);

  std::vector<std::function<double(double)>> fns;
  for (const auto& p : phis) fns.push_back([p](double v) { return p(v); });

  TheoremCheckResult out;
  int passed = 0;
  for (double tc : t_centers) {
    DriftResult d = estimate_drift(spec, fns, tc, delta);
    for (std::size_t p = 0; p < phis.size(); ++p) {
      TheoremCell cell;
      cell.observable = phis[p].name.empty()
                            ? ("He" + std::to_string(phis[p].m))
                            : phis[p].name;
      cell.t_center = tc;
      cell.tau = tc;
      cell.estimate = d.per_observable[p].value;
      cell.std_error = d.per_observable[p].std_error;
      cell.prediction = pred.pair(fns[p]);
      double se = std::max(d.per_observable[p].std_error, 1e-300);
      cell.z = (cell.estimate - cell.prediction) / se;
      out.max_abs_z = std::max(out.max_abs_z, std::abs(cell.z));
      if (std::abs(cell.z) <= z_pass) ++passed;
      out.cells.push_back(cell);
    }
  }
  out.pass_fraction = double(passed) / double(out.cells.size());
  return out;
}

}  // namespace lblab
