#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lblab/common.hpp"

namespace lblab {

namespace detail {

template <class T, class F>
T adaptive_simpson_rec(const F& f, double a, double b, T fa, T fm, T fb, T whole,
                       double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  T flm = f(lm), frm = f(rm);
  T left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  T right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  T delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson on [a, b]; T is double or cplx.
template <class T, class F>
T adaptive_simpson(const F& f, double a, double b, double tol = 1e-12,
                   int max_depth = 48) {
  T fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  T whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson_rec<T>(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

struct QuadRule {
  std::vector<double> x, w;
};

// Gauss-Hermite nodes/weights for weight e^{-x^2}: Newton iteration on the
// Hermite recurrence, seeded from the Tricomi-style initial guesses.
inline QuadRule gauss_hermite(int n) {
  require(n >= 1, "gauss_hermite: n >= 1");
  QuadRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  const double sqrt_pi = std::sqrt(pi);
  // pim4 = pi^{-1/4}
  const double pim4 = 1.0 / std::pow(pi, 0.25);
  int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * rule.x[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * rule.x[1];
    else
      z = 2.0 * z - rule.x[i - 2];
    double pp = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      // Orthonormal Hermite recurrence.
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 -
             std::sqrt(static_cast<double>(j) / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15 * (1.0 + std::abs(z))) break;
    }
    rule.x[i] = z;
    rule.x[n - 1 - i] = -z;
    rule.w[i] = 2.0 / (pp * pp);
    rule.w[n - 1 - i] = rule.w[i];
  }
  if (n % 2 == 1) rule.x[m - 1] = 0.0;
  // Nodes come out in descending |x|; sort ascending for sanity.
  for (int i = 0; i < n / 2; ++i) {
    std::swap(rule.x[i], rule.x[n - 1 - i]);
    std::swap(rule.w[i], rule.w[n - 1 - i]);
  }
  (void)sqrt_pi;
  return rule;
}

// Gauss-Legendre on [-1, 1] via Newton on the Legendre recurrence.
inline QuadRule gauss_legendre(int n) {
  require(n >= 1, "gauss_legendre: n >= 1");
  QuadRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    rule.x[i] = -z;
    rule.x[n - 1 - i] = z;
    rule.w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.w[n - 1 - i] = rule.w[i];
  }
  return rule;
}

// Maps a [-1,1] rule onto [a,b].
inline QuadRule mapped(const QuadRule& base, double a, double b) {
  QuadRule rule = base;
  double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (std::size_t i = 0; i < rule.x.size(); ++i) {
    rule.x[i] = mid + half * base.x[i];
    rule.w[i] = half * base.w[i];
  }
  return rule;
}

// Composite Gauss-Legendre: `panels` equal panels of `order` points on [a,b].
inline QuadRule panel_rule(double a, double b, int panels, int order) {
  QuadRule base = gauss_legendre(order);
  QuadRule out;
  out.x.reserve(static_cast<std::size_t>(panels) * order);
  out.w.reserve(static_cast<std::size_t>(panels) * order);
  for (int p = 0; p < panels; ++p) {
    double pa = a + (b - a) * p / panels;
    double pb = a + (b - a) * (p + 1) / panels;
    QuadRule local = mapped(base, pa, pb);
    out.x.insert(out.x.end(), local.x.begin(), local.x.end());
    out.w.insert(out.w.end(), local.w.begin(), local.w.end());
  }
  return out;
}

}  // namespace lblab
