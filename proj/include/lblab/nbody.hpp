#pragma once

// Tagged-particle dynamics in a thermal bath on the unit torus.
//
// State: N + 1 particles (index 0 is the tagged one) with mean-field coupling
// 1/N: the Hamiltonian is sum_j |v_j|^2/2 + (1/2N) sum_{j != l} V(x_j - x_l).
// Forces, pair energies and Metropolis increments are evaluated spectrally
// through the collective coordinates rho(k) = sum_l e^{-i k.x_l}, which costs
// O((N+1) * #modes) per evaluation and conserves total momentum to rounding.
//
// Initial law: bath positions from the Gibbs density ~ exp(-(beta/2N)
// sum_{1<=j!=l<=N} V(x_j-x_l)) via Metropolis sweeps, bath velocities iid
// Maxwellian, tagged position uniform, tagged velocity by rejection from
// M_beta(v) g0(v).

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "lblab/common.hpp"
#include "lblab/potential.hpp"
#include "lblab/rng.hpp"

namespace lblab {

struct SimState {
  int dim = 1;
  int N = 0;              // bath size; total particle count is N + 1
  double t = 0.0;
  std::vector<double> x;  // (N+1) * dim, wrapped to [0,1)
  std::vector<double> v;  // (N+1) * dim

  SimState(int dim_, int N_) : dim(dim_), N(N_), x((N_ + 1) * dim_, 0.0),
                               v((N_ + 1) * dim_, 0.0) {
    require(dim >= 1 && dim <= 3, "SimState: dim must be 1..3");
    require(N >= 1, "SimState: need at least one bath particle");
  }

  double* xp(int j) { return &x[std::size_t(j) * dim]; }
  const double* xp(int j) const { return &x[std::size_t(j) * dim]; }
  double* vp(int j) { return &v[std::size_t(j) * dim]; }
  const double* vp(int j) const { return &v[std::size_t(j) * dim]; }
};

inline double wrap01(double x) {
  double y = x - std::floor(x);
  return (y < 1.0) ? y : 0.0;  // guard against floor rounding at exactly 1.0
}

namespace detail {

// rho(k) = sum_l e^{-i k.x_l} for one half mode, over all N+1 particles.
inline cplx collective_mode(const SimState& s, const PotentialMode& mode) {
  NeumaierSum re, im;
  for (int l = 0; l <= s.N; ++l) {
    double phase = 0.0;
    for (int a = 0; a < s.dim; ++a) phase += mode.m[a] * s.xp(l)[a];
    phase *= two_pi;
    re.add(std::cos(phase));
    im.add(-std::sin(phase));
  }
  return cplx(re.value(), im.value());
}

}  // namespace detail

// Mean-field accelerations a_j = -(1/N) sum_{l != j} grad V(x_j - x_l),
// evaluated spectrally: a_j = (2/N) sum_{half modes} k Vhat(k) Im(e^{i k.x_j} rho(k)).
inline std::vector<double> mean_field_forces(const FourierPotential& pot,
                                             const SimState& s) {
  require(pot.dim() == s.dim || pot.empty(), "mean_field_forces: dimension mismatch");
  std::vector<double> a((s.N + 1) * s.dim, 0.0);
  for (const auto& mode : pot.half_modes()) {
    if (mode.coeff == 0.0) continue;
    cplx rho = detail::collective_mode(s, mode);
    for (int j = 0; j <= s.N; ++j) {
      double phase = 0.0;
      for (int b = 0; b < s.dim; ++b) phase += mode.m[b] * s.xp(j)[b];
      phase *= two_pi;
      // Im(e^{i phase} rho)
      double im = std::sin(phase) * rho.real() + std::cos(phase) * rho.imag();
      double c = 2.0 / s.N * mode.coeff * im;
      for (int b = 0; b < s.dim; ++b)
        a[std::size_t(j) * s.dim + b] += c * two_pi * mode.m[b];
    }
  }
  return a;
}

// Total energy H = sum |v|^2/2 + (1/2N) sum_{j != l} V(x_j - x_l); the pair
// sum is evaluated through |rho(k)|^2 (self-interactions subtracted exactly).
inline double total_energy(const FourierPotential& pot, const SimState& s) {
  NeumaierSum kin;
  for (double vv : s.v) kin.add(0.5 * vv * vv);
  NeumaierSum potsum;
  double np1 = s.N + 1.0;
  potsum.add(pot.coeff0() * (np1 * np1 - np1));
  for (const auto& mode : pot.half_modes()) {
    if (mode.coeff == 0.0) continue;
    cplx rho = detail::collective_mode(s, mode);
    potsum.add(2.0 * mode.coeff * (std::norm(rho) - np1));
  }
  return kin.value() + potsum.value() / (2.0 * s.N);
}

// One velocity-Verlet step; forces_in, if provided, must be the forces at the
// current positions (they are returned refreshed for the new positions).
inline void step_verlet(const FourierPotential& pot, SimState& s, double dt,
                        std::vector<double>& forces) {
  const int total = (s.N + 1) * s.dim;
  if (forces.empty()) forces = mean_field_forces(pot, s);
  for (int t = 0; t < total; ++t) {
    s.v[t] += 0.5 * dt * forces[t];
    s.x[t] = wrap01(s.x[t] + dt * s.v[t]);
  }
  forces = mean_field_forces(pot, s);
  for (int t = 0; t < total; ++t) s.v[t] += 0.5 * dt * forces[t];
  s.t += dt;
}

// ---------------------------------------------------------------------------
// Gibbs sampling of the initial law.

struct GibbsSamplerCfg {
  int burn_in_sweeps = 10;
  double step = 0.5;  // proposal half-width per axis (torus units)
};

// Acceptance decision for an energy increment dU (already multiplied by beta):
// accept with probability min(1, e^{-dU}).  Exposed so the decision rule can
// be validated against an exactly solvable chain.
inline bool metropolis_accept(Rng& rng, double dU) {
  if (dU <= 0.0) return true;
  return rng.uniform01_open_left() <= std::exp(-dU);
}

// Tagged-particle velocity law: density M_beta(v) g0(v) with g0 bounded by
// g0_bound (rejection sampling envelope).
struct TaggedInitLaw {
  std::function<double(const std::array<double, 3>&)> g0;  // ratio factor
  double g0_bound = 1.0;

  static TaggedInitLaw maxwellian() {
    TaggedInitLaw law;
    law.g0 = [](const std::array<double, 3>&) { return 1.0; };
    law.g0_bound = 1.0;
    return law;
  }
};

namespace detail {

// One Metropolis sweep over the bath particles (indices 1..N) with spectral
// incremental energy updates; rhoptr holds rho_bath(k) per half mode.
inline void gibbs_sweep(const FourierPotential& pot, double beta, SimState& s,
                        const GibbsSamplerCfg& cfg, Rng& rng,
                        std::vector<cplx>& rho_bath) {
  const auto& modes = pot.half_modes();
  for (int j = 1; j <= s.N; ++j) {
    std::array<double, 3> xo{0, 0, 0}, xn{0, 0, 0};
    for (int a = 0; a < s.dim; ++a) {
      xo[a] = s.xp(j)[a];
      xn[a] = wrap01(xo[a] + cfg.step * (rng.uniform01() - 0.5));
    }
    // dU = (beta/N) sum_half Vhat(k) [ |rho'|^2 - |rho|^2 ]  (both signs folded)
    double dU = 0.0;
    std::vector<cplx> delta(modes.size());
    for (std::size_t q = 0; q < modes.size(); ++q) {
      if (modes[q].coeff == 0.0) continue;
      double po = 0.0, pn = 0.0;
      for (int a = 0; a < s.dim; ++a) {
        po += modes[q].m[a] * xo[a];
        pn += modes[q].m[a] * xn[a];
      }
      cplx eo(std::cos(two_pi * po), -std::sin(two_pi * po));
      cplx en(std::cos(two_pi * pn), -std::sin(two_pi * pn));
      delta[q] = en - eo;
      cplx rho_new = rho_bath[q] + delta[q];
      dU += modes[q].coeff * (std::norm(rho_new) - std::norm(rho_bath[q]));
    }
    dU *= beta / s.N;
    if (metropolis_accept(rng, dU)) {
      for (int a = 0; a < s.dim; ++a) s.xp(j)[a] = xn[a];
      for (std::size_t q = 0; q < modes.size(); ++q) rho_bath[q] += delta[q];
    }
  }
}

inline std::vector<cplx> bath_modes(const FourierPotential& pot, const SimState& s) {
  std::vector<cplx> rho(pot.half_modes().size(), cplx(0, 0));
  const auto& modes = pot.half_modes();
  for (std::size_t q = 0; q < modes.size(); ++q) {
    NeumaierSum re, im;
    for (int l = 1; l <= s.N; ++l) {
      double phase = 0.0;
      for (int a = 0; a < s.dim; ++a) phase += modes[q].m[a] * s.xp(l)[a];
      phase *= two_pi;
      re.add(std::cos(phase));
      im.add(-std::sin(phase));
    }
    rho[q] = cplx(re.value(), im.value());
  }
  return rho;
}

}  // namespace detail

// Draw an initial state: bath positions by Metropolis from the bath Gibbs
// density, bath velocities Maxwellian, tagged position uniform, tagged
// velocity by rejection from M_beta g0.
inline SimState sample_gibbs(const FourierPotential& pot, double beta, int N,
                             const GibbsSamplerCfg& cfg, const TaggedInitLaw& law,
                             Rng& rng) {
  require(beta > 0.0, "sample_gibbs: beta must be > 0");
  require(cfg.burn_in_sweeps >= 0 && cfg.step > 0.0 && cfg.step <= 1.0,
          "sample_gibbs: invalid sampler configuration");
  SimState s(pot.dim(), N);
  for (int j = 0; j <= N; ++j)
    for (int a = 0; a < s.dim; ++a) s.xp(j)[a] = rng.uniform01();

  // Bath positions: Metropolis sweeps; the collective coordinates are rebuilt
  // from scratch every sweep so incremental rounding cannot accumulate.
  if (!pot.half_modes().empty()) {
    for (int sweep = 0; sweep < cfg.burn_in_sweeps; ++sweep) {
      std::vector<cplx> rho = detail::bath_modes(pot, s);
      detail::gibbs_sweep(pot, beta, s, cfg, rng, rho);
    }
  }

  const double sigma_v = 1.0 / std::sqrt(beta);
  for (int j = 1; j <= N; ++j)
    for (int a = 0; a < s.dim; ++a) s.vp(j)[a] = sigma_v * rng.normal();

  // Tagged velocity: rejection from M_beta g0 with envelope bound.
  require(law.g0_bound > 0.0, "sample_gibbs: rejection bound must be > 0");
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 1000000)
      throw numerical_error("sample_gibbs: tagged-velocity rejection stalled");
    std::array<double, 3> vv{0, 0, 0};
    for (int a = 0; a < s.dim; ++a) vv[a] = sigma_v * rng.normal();
    double g = law.g0 ? law.g0(vv) : 1.0;
    require(g >= 0.0, "sample_gibbs: g0 must be nonnegative");
    if (g > law.g0_bound * (1.0 + 1e-12))
      throw numerical_error("sample_gibbs: g0 exceeds its declared bound");
    if (rng.uniform01() * law.g0_bound < g) {
      for (int a = 0; a < s.dim; ++a) s.vp(0)[a] = vv[a];
      break;
    }
  }
  return s;
}

// Continue a sampled chain for extra sweeps (thinning support for histogram
// tests); velocities are untouched.
inline void gibbs_extra_sweeps(const FourierPotential& pot, double beta,
                               SimState& s, const GibbsSamplerCfg& cfg, int sweeps,
                               Rng& rng) {
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    std::vector<cplx> rho = detail::bath_modes(pot, s);
    detail::gibbs_sweep(pot, beta, s, cfg, rng, rho);
  }
}

// Integrate to time T, invoking the observer at the listed step indices
// (0 = initial state); step indices must be sorted and <= round(T/dt).
inline void run_trajectory(const FourierPotential& pot, SimState& s, double T,
                           double dt,
                           const std::vector<long>& observe_steps,
                           const std::function<void(const SimState&, long)>& observe) {
  const long steps = std::lround(T / dt);
  require(std::abs(steps * dt - T) < 1e-9 * std::max(1.0, T),
          "run_trajectory: T must be an integer number of steps");
  std::size_t next = 0;
  if (next < observe_steps.size() && observe_steps[next] == 0) {
    observe(s, 0);
    ++next;
  }
  std::vector<double> forces;
  for (long st = 1; st <= steps; ++st) {
    step_verlet(pot, s, dt, forces);
    if (next < observe_steps.size() && observe_steps[next] == st) {
      observe(s, st);
      ++next;
    }
  }
  require(next == observe_steps.size(),
          "run_trajectory: some observation steps exceed the horizon");
}

}  // namespace lblab
