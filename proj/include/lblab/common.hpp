#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lblab {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;

using cplx = std::complex<double>;

inline constexpr cplx iu{0.0, 1.0};

inline double sq(double x) { return x * x; }
inline cplx sq(cplx z) { return z * z; }

// Compensated (Neumaier) summation.  Reductions over ensembles and grids use
// this in a fixed index order so results do not depend on thread count.
struct NeumaierSum {
  double s = 0.0;
  double c = 0.0;

  void add(double x) {
    double t = s + x;
    if (std::abs(s) >= std::abs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }
  double value() const { return s + c; }
};

struct NeumaierSumC {
  NeumaierSum re, im;
  void add(cplx z) {
    re.add(z.real());
    im.add(z.imag());
  }
  cplx value() const { return {re.value(), im.value()}; }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Thrown when an operation detects that continuing would produce garbage
// (resolvent too close to the real axis, blown-up field norms, ...).
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace lblab
