#pragma once

// Gaussian-averaged Cauchy integrals and the electrostatic-analogue dielectric
// function for a thermal bath.  For wave vector k and frequency omega in the
// closed upper half-plane,
//
//   cauchy_average(beta, |k|, omega)          = < 1 / (k.v - omega) >_{M_beta}
//   weighted_cauchy_average(beta, |k|, omega) = < k.v / (k.v - omega) >_{M_beta}
//   epsilon(params, m, omega) = 1 + c * beta * Vhat(k) * weighted_cauchy_average
//
// with c the bath occupancy factor ((N+1-m)/N type corrections; c = 1 for the
// tagged-pair case).  k.v under the Maxwellian is N(0, |k|^2/beta), so every
// average reduces to the scaled complementary error function w(z).
// Boundary values (real omega, +i0 prescription) are evaluated by an explicit
// principal-value / delta split using the Dawson function rather than by
// taking w at a real argument, so that the two code paths can be cross-checked.

#include <array>
#include <cmath>
#include <vector>

#include "lblab/common.hpp"
#include "lblab/faddeeva.hpp"
#include "lblab/potential.hpp"

namespace lblab {

// Frequency in the closed upper half-plane.  boundary == true means the limit
// "value + i0" with real value.
struct UpperFrequency {
  cplx value{0.0, 0.0};
  bool boundary = false;

  static UpperFrequency interior(cplx w) {
    require(w.imag() > 0.0, "UpperFrequency::interior: Im omega must be > 0");
    return {w, false};
  }
  static UpperFrequency plus_i0(double u) { return {cplx(u, 0.0), true}; }
};

struct DispersionParams {
  double beta = 1.0;
  FourierPotential potential;
  double bath_factor = 1.0;  // occupancy factor c in front of beta * Vhat

  DispersionParams(double b, FourierPotential pot, double c = 1.0)
      : beta(b), potential(std::move(pot)), bath_factor(c) {
    require(beta > 0.0, "DispersionParams: beta must be > 0");
    require(bath_factor >= 0.0 && bath_factor <= 1.0,
            "DispersionParams: bath factor must lie in [0,1]");
  }
};

// < 1 / (s - omega) > for s ~ N(0, sigma^2).
inline cplx gaussian_cauchy(double sigma, UpperFrequency omega) {
  require(sigma > 0.0, "gaussian_cauchy: sigma must be > 0");
  const double root2_sigma = std::sqrt(2.0) * sigma;
  if (!omega.boundary) {
    cplx zeta = omega.value / root2_sigma;
    return iu * std::sqrt(pi) * faddeeva_w(zeta) / root2_sigma;
  }
  // Plemelj split: PV part via the Dawson function, delta part = i pi * pdf.
  double u = omega.value.real();
  double zeta = u / root2_sigma;
  double pv = -2.0 * dawson(zeta) / root2_sigma;
  double delta = pi * std::exp(-0.5 * sq(u / sigma)) / (std::sqrt(two_pi) * sigma);
  return cplx(pv, delta);
}

inline cplx cauchy_average(double beta, double k_abs, UpperFrequency omega) {
  require(beta > 0.0, "cauchy_average: beta must be > 0");
  require(k_abs > 0.0, "cauchy_average: |k| must be > 0");
  return gaussian_cauchy(k_abs / std::sqrt(beta), omega);
}

inline cplx weighted_cauchy_average(double beta, double k_abs, UpperFrequency omega) {
  return 1.0 + omega.value * cauchy_average(beta, k_abs, omega);
}

inline double k_abs_of_index(const std::array<int, 3>& m) {
  double n2 = double(m[0]) * m[0] + double(m[1]) * m[1] + double(m[2]) * m[2];
  return two_pi * std::sqrt(n2);
}

// Dielectric function at lattice index m (wave vector k = 2 pi m).
inline cplx epsilon(const DispersionParams& params, const std::array<int, 3>& m,
                    UpperFrequency omega) {
  double vhat = params.potential.coeff_of(m);
  if (vhat == 0.0 || params.bath_factor == 0.0) return cplx(1.0, 0.0);
  double k_abs = k_abs_of_index(m);
  require(k_abs > 0.0, "epsilon: zero mode has no dispersion function");
  return 1.0 + params.bath_factor * params.beta * vhat *
                   weighted_cauchy_average(params.beta, k_abs, omega);
}

// Boundary dielectric function at real phase variable u = k.v, occupancy 1.
// This is the modulus factor entering every Landau-type diffusion kernel.
inline cplx epsilon_fp(double beta, const FourierPotential& potential,
                       const std::array<int, 3>& m, double u) {
  DispersionParams params(beta, potential, 1.0);
  return epsilon(params, m, UpperFrequency::plus_i0(u));
}

// < 1 / ((s - eta)(s - omega)) > for s = k.v under the Maxwellian; partial
// fractions when eta != omega, derivative of the Cauchy average when confluent.
inline cplx double_pole_average(double beta, double k_abs, UpperFrequency eta,
                                UpperFrequency omega) {
  if (eta.value != omega.value) {
    cplx num = cauchy_average(beta, k_abs, omega) - cauchy_average(beta, k_abs, eta);
    return num / (omega.value - eta.value);
  }
  require(!omega.boundary && omega.value.imag() > 0.0,
          "double_pole_average: confluent poles need Im omega > 0");
  double sigma = k_abs / std::sqrt(beta);
  double root2_sigma = std::sqrt(2.0) * sigma;
  cplx zeta = omega.value / root2_sigma;
  cplx w = faddeeva_w(zeta);
  cplx wprime = -2.0 * zeta * w + 2.0 * iu / std::sqrt(pi);
  return iu * std::sqrt(pi) * wprime / (root2_sigma * root2_sigma);
}

// Stability scan: tabulates epsilon over a frequency rectangle (or the +i0
// boundary) for each requested mode and reports the minimal modulus.
struct PenroseRow {
  std::array<int, 3> m{0, 0, 0};
  double re_omega = 0.0;
  double im_omega = 0.0;  // 0 encodes the +i0 boundary
  cplx eps{1.0, 0.0};
};

struct PenroseScan {
  std::vector<PenroseRow> rows;
  double min_abs_eps = 0.0;
  std::size_t num_below_threshold = 0;
  double threshold = 0.0;
};

inline PenroseScan penrose_scan(const DispersionParams& params,
                                const std::vector<std::array<int, 3>>& modes,
                                double re_min, double re_max, int re_count,
                                const std::vector<double>& im_values,
                                double threshold) {
  require(re_count >= 2, "penrose_scan: need at least two Re omega samples");
  require(!modes.empty(), "penrose_scan: empty mode list");
  PenroseScan out;
  out.threshold = threshold;
  out.min_abs_eps = std::numeric_limits<double>::infinity();
  for (const auto& m : modes) {
    for (double im : im_values) {
      require(im >= 0.0, "penrose_scan: Im omega must be >= 0");
      for (int i = 0; i < re_count; ++i) {
        double re = re_min + (re_max - re_min) * i / (re_count - 1);
        UpperFrequency om = (im == 0.0) ? UpperFrequency::plus_i0(re)
                                        : UpperFrequency::interior(cplx(re, im));
        PenroseRow row;
        row.m = m;
        row.re_omega = re;
        row.im_omega = im;
        row.eps = epsilon(params, m, om);
        double a = std::abs(row.eps);
        out.min_abs_eps = std::min(out.min_abs_eps, a);
        if (a < threshold) ++out.num_below_threshold;
        out.rows.push_back(row);
      }
    }
  }
  return out;
}

}  // namespace lblab
