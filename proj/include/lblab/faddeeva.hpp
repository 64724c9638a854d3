#pragma once

// Scaled complex complementary error function w(z) = e^{-z^2} erfc(-iz) on the
// closed upper half-plane, plus the real Dawson function.  w is the workhorse
// behind every Gaussian-averaged Cauchy integral in this project.
//
// Algorithm: rational expansion in the mapped variable Z = (L+iz)/(L-iz)
// (Weideman-style, N = 64 terms) for moderate |z|, switched to the Laplace
// continued fraction for |z| >= 100 where the rational expansion loses
// accuracy and the continued fraction is essentially exact.
// Both branches are validated in the test suite against an adaptive-quadrature
// oracle of the defining integral w(z) = (i/pi) ∫ e^{-t^2}/(z-t) dt.

#include <array>
#include <cmath>

#include "lblab/common.hpp"

namespace lblab {

namespace detail {

inline const std::array<double, 64>& weideman_coeffs() {
  static const std::array<double, 64> coeffs = [] {
    constexpr int N = 64;
    constexpr int M = 2 * N;
    const double L = std::sqrt(N / std::sqrt(2.0));
    std::array<double, 64> a{};
    // Sample F(theta) = e^{-t^2} (L^2 + t^2), t = L tan(theta/2), at
    // theta_k = k pi / M for k = -M..M-1; the endpoint theta = -pi maps to
    // t = infinity where F vanishes.
    std::array<double, 2 * M> f{};
    for (int k = -M; k < M; ++k) {
      if (k == -M) {
        f[0] = 0.0;
        continue;
      }
      double theta = k * pi / M;
      double t = L * std::tan(0.5 * theta);
      f[k + M] = std::exp(-t * t) * (L * L + t * t);
    }
    for (int n = 1; n <= N; ++n) {
      double s = 0.0;
      for (int k = -M; k < M; ++k) {
        if (k == -M) continue;
        double theta = k * pi / M;
        s += f[k + M] * std::cos(n * theta);
      }
      a[n - 1] = s / (2.0 * M);
    }
    return a;
  }();
  return coeffs;
}

inline cplx faddeeva_weideman(cplx z) {
  constexpr int N = 64;
  const double L = std::sqrt(N / std::sqrt(2.0));
  const auto& a = weideman_coeffs();
  cplx iz = iu * z;
  cplx Z = (L + iz) / (L - iz);
  // p(Z) = sum a_n Z^{n-1}, Horner from the top.
  cplx p{0.0, 0.0};
  for (int n = N - 1; n >= 0; --n) p = p * Z + a[n];
  cplx d = L - iz;
  return 2.0 * p / (d * d) + (1.0 / std::sqrt(pi)) / d;
}

inline cplx faddeeva_contfrac(cplx z, int depth = 24) {
  // Laplace continued fraction: w(z) = (i/sqrt(pi)) / (z - 1/2/(z - 1/(z - 3/2/(...))))
  cplx r{0.0, 0.0};
  for (int n = depth; n >= 1; --n) r = (0.5 * n) / (z - r);
  return iu / std::sqrt(pi) / (z - r);
}

}  // namespace detail

// w(z) for Im z >= 0.
inline cplx faddeeva_w(cplx z) {
  require(z.imag() >= 0.0, "faddeeva_w: argument must satisfy Im z >= 0");
  if (std::norm(z) >= 1.0e4) return detail::faddeeva_contfrac(z);
  return detail::faddeeva_weideman(z);
}

// Dawson function D(x) = e^{-x^2} ∫_0^x e^{t^2} dt.
inline double dawson(double x) {
  double ax = std::abs(x);
  double s = x < 0.0 ? -1.0 : 1.0;
  if (ax < 100.0) {
    // Im w(x) = 2 D(x)/sqrt(pi) on the real axis.
    return s * 0.5 * std::sqrt(pi) * faddeeva_w(cplx(ax, 0.0)).imag();
  }
  // Asymptotic series D(x) ~ (1/2x) sum_m (2m-1)!! / (2x^2)^m.
  double inv2x2 = 1.0 / (2.0 * ax * ax);
  double term = 1.0, sum = 1.0;
  for (int m = 1; m <= 8; ++m) {
    term *= (2.0 * m - 1.0) * inv2x2;
    sum += term;
  }
  return s * sum / (2.0 * ax);
}

}  // namespace lblab
