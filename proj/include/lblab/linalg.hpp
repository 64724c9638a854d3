#pragma once

#include <cmath>
#include <vector>

#include "lblab/common.hpp"

namespace lblab {

// Dense column-major-free complex matrix, row-major storage.
struct CMatrix {
  int n = 0;
  std::vector<cplx> a;  // row-major n x n

  CMatrix() = default;
  explicit CMatrix(int n_) : n(n_), a(static_cast<std::size_t>(n_) * n_, cplx{0.0, 0.0}) {}
  cplx& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
  cplx operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
};

// LU with partial pivoting, in place; solves A x = b for several b.
class CLu {
 public:
  explicit CLu(CMatrix m) : m_(std::move(m)), piv_(m_.n) {
    int n = m_.n;
    for (int i = 0; i < n; ++i) piv_[i] = i;
    for (int col = 0; col < n; ++col) {
      int best = col;
      double best_mag = std::abs(m_(col, col));
      for (int r = col + 1; r < n; ++r) {
        double mag = std::abs(m_(r, col));
        if (mag > best_mag) {
          best_mag = mag;
          best = r;
        }
      }
      if (best_mag == 0.0) throw numerical_error("singular matrix in LU");
      if (best != col) {
        for (int j = 0; j < n; ++j) std::swap(m_(col, j), m_(best, j));
        std::swap(piv_[col], piv_[best]);
      }
      cplx inv_d = 1.0 / m_(col, col);
      for (int r = col + 1; r < n; ++r) {
        cplx f = m_(r, col) * inv_d;
        m_(r, col) = f;
        for (int j = col + 1; j < n; ++j) m_(r, j) -= f * m_(col, j);
      }
    }
  }

  std::vector<cplx> solve(const std::vector<cplx>& b) const {
    int n = m_.n;
    std::vector<cplx> x(n);
    for (int i = 0; i < n; ++i) x[i] = b[piv_[i]];
    for (int i = 1; i < n; ++i)
      for (int j = 0; j < i; ++j) x[i] -= m_(i, j) * x[j];
    for (int i = n - 1; i >= 0; --i) {
      for (int j = i + 1; j < n; ++j) x[i] -= m_(i, j) * x[j];
      x[i] /= m_(i, i);
    }
    return x;
  }

 private:
  CMatrix m_;
  std::vector<int> piv_;
};

// Tridiagonal solve (Thomas).  diag/lower/upper are the three bands; lower[0]
// and upper[n-1] are ignored.
inline std::vector<double> solve_tridiag(const std::vector<double>& lower,
                                         const std::vector<double>& diag,
                                         const std::vector<double>& upper,
                                         std::vector<double> rhs) {
  std::size_t n = diag.size();
  require(lower.size() == n && upper.size() == n && rhs.size() == n,
          "solve_tridiag: inconsistent band sizes");
  std::vector<double> c(n);
  double d = diag[0];
  if (d == 0.0) throw numerical_error("tridiagonal pivot is zero");
  c[0] = upper[0] / d;
  rhs[0] /= d;
  for (std::size_t i = 1; i < n; ++i) {
    double denom = diag[i] - lower[i] * c[i - 1];
    if (denom == 0.0) throw numerical_error("tridiagonal pivot is zero");
    c[i] = upper[i] / denom;
    rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i] * rhs[i + 1];
  return rhs;
}

// Conjugate gradient for a symmetric positive definite operator given as a
// matvec callback.  Used for the negative-order norms in d = 2 where the
// operator is not tridiagonal.
template <class MatVec>
std::vector<double> conjugate_gradient(const MatVec& apply, std::vector<double> b,
                                       double tol = 1e-13, int max_iter = 20000) {
  std::size_t n = b.size();
  std::vector<double> x(n, 0.0), r = b, p = b, ap(n);
  double rr = 0.0;
  for (double v : r) rr += v * v;
  double b_norm = std::sqrt(rr);
  if (b_norm == 0.0) return x;
  for (int it = 0; it < max_iter; ++it) {
    apply(p, ap);
    double pap = 0.0;
    for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
    if (pap <= 0.0) throw numerical_error("CG: operator not positive definite");
    double alpha = rr / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    double rr_new = 0.0;
    for (double v : r) rr_new += v * v;
    if (std::sqrt(rr_new) <= tol * b_norm) return x;
    double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  throw numerical_error("CG did not converge");
}

}  // namespace lblab
