#pragma once

// Real, even, positive-definite interaction potentials on the unit torus T^d,
// held as a finite Fourier series V(x) = c0 + sum_m 2 c_m cos(2 pi m . x).
// Only one representative of each {m, -m} pair is stored; the evenness and
// nonnegativity of the full coefficient family V_hat(k) >= 0 is enforced at
// construction, which guarantees positive-definiteness of the pair energy.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "lblab/common.hpp"

namespace lblab {

struct PotentialMode {
  std::array<int, 3> m{0, 0, 0};  // integer lattice vector; entries beyond dim are 0
  double coeff = 0.0;             // V_hat(2 pi m) = V_hat(-2 pi m) = coeff >= 0
};

namespace detail {

// Canonical half-lattice representative: first nonzero entry positive.
inline bool is_canonical(const std::array<int, 3>& m) {
  for (int c : m) {
    if (c > 0) return true;
    if (c < 0) return false;
  }
  return false;  // zero vector is not a valid mode
}

inline std::array<int, 3> negate(const std::array<int, 3>& m) {
  return {-m[0], -m[1], -m[2]};
}

inline bool lex_less(const std::array<int, 3>& a, const std::array<int, 3>& b) {
  return a < b;
}

}  // namespace detail

class FourierPotential {
 public:
  FourierPotential(int dim, double coeff0, std::vector<PotentialMode> half_modes,
                   int smoothness_order = 2)
      : dim_(dim), coeff0_(coeff0), modes_(std::move(half_modes)),
        smoothness_order_(smoothness_order) {
    require(dim_ >= 1 && dim_ <= 3, "FourierPotential: dim must be 1, 2 or 3");
    require(coeff0_ >= 0.0, "FourierPotential: zero-mode coefficient must be >= 0");
    require(smoothness_order_ >= 0, "FourierPotential: smoothness order must be >= 0");
    for (auto& mode : modes_) {
      require(mode.coeff >= 0.0, "FourierPotential: negative Fourier coefficient");
      for (int a = dim_; a < 3; ++a)
        require(mode.m[a] == 0, "FourierPotential: mode component beyond dim must be 0");
      if (!detail::is_canonical(mode.m)) {
        require(mode.m != std::array<int, 3>{0, 0, 0},
                "FourierPotential: zero lattice vector is not a mode (use coeff0)");
        mode.m = detail::negate(mode.m);  // fold to the canonical representative
      }
    }
    std::sort(modes_.begin(), modes_.end(),
              [](const PotentialMode& a, const PotentialMode& b) {
                return detail::lex_less(a.m, b.m);
              });
    for (std::size_t i = 1; i < modes_.size(); ++i)
      require(modes_[i - 1].m != modes_[i].m, "FourierPotential: duplicate mode");
  }

  // Build from a full +/- mode list; the two members of each pair must carry
  // equal coefficients (evenness of V), otherwise construction is rejected.
  static FourierPotential from_full_modes(int dim, double coeff0,
                                          const std::vector<PotentialMode>& full,
                                          int smoothness_order = 2) {
    std::vector<PotentialMode> canon;
    for (const auto& mode : full) {
      std::array<int, 3> rep = detail::is_canonical(mode.m) ? mode.m : detail::negate(mode.m);
      auto it = std::find_if(canon.begin(), canon.end(),
                             [&](const PotentialMode& c) { return c.m == rep; });
      if (it == canon.end())
        canon.push_back({rep, mode.coeff});
      else
        require(it->coeff == mode.coeff,
                "FourierPotential: asymmetric coefficients for a +/- mode pair");
    }
    // Every stored pair must have been seen from both sides, or only once
    // (a single-sided list is accepted as shorthand for the even extension).
    return FourierPotential(dim, coeff0, std::move(canon), smoothness_order);
  }

  static FourierPotential single_cosine(int dim, double c) {
    PotentialMode mode;
    mode.m = {1, 0, 0};
    mode.coeff = c;
    return FourierPotential(dim, 0.0, {mode}, 0);
  }

  // Smooth screened-type potential: coefficients A (1 + |m|^2)^{-q} on the
  // block |m|_inf <= K, folded to the half lattice.
  static FourierPotential smooth_screened(int dim, int K, double amplitude = 0.1,
                                          int q = 4) {
    require(K >= 1, "smooth_screened: K must be >= 1");
    std::vector<PotentialMode> modes;
    std::array<int, 3> m{0, 0, 0};
    auto push = [&](std::array<int, 3> mm) {
      if (mm == std::array<int, 3>{0, 0, 0}) return;
      if (!detail::is_canonical(mm)) return;  // visit each pair once
      double n2 = double(mm[0]) * mm[0] + double(mm[1]) * mm[1] + double(mm[2]) * mm[2];
      modes.push_back({mm, amplitude * std::pow(1.0 + n2, -q)});
    };
    if (dim == 1) {
      for (m[0] = -K; m[0] <= K; ++m[0]) push(m);
    } else if (dim == 2) {
      for (m[0] = -K; m[0] <= K; ++m[0])
        for (m[1] = -K; m[1] <= K; ++m[1]) push(m);
    } else {
      for (m[0] = -K; m[0] <= K; ++m[0])
        for (m[1] = -K; m[1] <= K; ++m[1])
          for (m[2] = -K; m[2] <= K; ++m[2]) push(m);
    }
    return FourierPotential(dim, 0.0, std::move(modes), q);
  }

  static FourierPotential from_preset(const std::string& name, int dim,
                                      double amplitude, int K = 2, int q = 4) {
    if (name == "single_cosine") return single_cosine(dim, amplitude);
    if (name == "smooth_screened") return smooth_screened(dim, K, amplitude, q);
    if (name == "zero") return FourierPotential(dim, 0.0, {}, 0);
    throw std::invalid_argument("FourierPotential: unknown preset '" + name + "'");
  }

  int dim() const { return dim_; }
  double coeff0() const { return coeff0_; }
  int smoothness_order() const { return smoothness_order_; }
  const std::vector<PotentialMode>& half_modes() const { return modes_; }

  // V(x), x in R^d (periodicity is automatic through the cosines).
  double eval_V(const double* x) const {
    NeumaierSum s;
    s.add(coeff0_);
    for (const auto& mode : modes_) {
      double phase = 0.0;
      for (int a = 0; a < dim_; ++a) phase += mode.m[a] * x[a];
      s.add(2.0 * mode.coeff * std::cos(two_pi * phase));
    }
    return s.value();
  }

  // grad V(x) into g[0..dim).
  void eval_gradV(const double* x, double* g) const {
    for (int a = 0; a < dim_; ++a) g[a] = 0.0;
    for (const auto& mode : modes_) {
      double phase = 0.0;
      for (int a = 0; a < dim_; ++a) phase += mode.m[a] * x[a];
      double s = -2.0 * mode.coeff * two_pi * std::sin(two_pi * phase);
      for (int a = 0; a < dim_; ++a) g[a] += s * mode.m[a];
    }
  }

  double eval_V(double x) const {
    require(dim_ == 1, "eval_V(double): potential is not one-dimensional");
    return eval_V(&x);
  }

  double eval_gradV(double x) const {
    require(dim_ == 1, "eval_gradV(double): potential is not one-dimensional");
    double g;
    eval_gradV(&x, &g);
    return g;
  }

  // sup_x |V(x)| <= c0 + 2 sum_m c_m (all coefficients are nonnegative).
  double sup_norm_bound() const {
    NeumaierSum s;
    s.add(coeff0_);
    for (const auto& mode : modes_) s.add(2.0 * mode.coeff);
    return s.value();
  }

  // sum over the full lattice of V_hat(k)^2 (Parseval mass without the zero mode
  // when include_zero is false).
  double coeff_square_sum(bool include_zero = true) const {
    NeumaierSum s;
    if (include_zero) s.add(coeff0_ * coeff0_);
    for (const auto& mode : modes_) s.add(2.0 * mode.coeff * mode.coeff);
    return s.value();
  }

  bool empty() const { return modes_.empty() && coeff0_ == 0.0; }

  // V_hat at lattice index m (either sign); 0 if the mode is absent.
  double coeff_of(const std::array<int, 3>& m_in) const {
    if (m_in == std::array<int, 3>{0, 0, 0}) return coeff0_;
    std::array<int, 3> rep = detail::is_canonical(m_in) ? m_in : detail::negate(m_in);
    auto it = std::lower_bound(modes_.begin(), modes_.end(), rep,
                               [](const PotentialMode& a, const std::array<int, 3>& b) {
                                 return detail::lex_less(a.m, b);
                               });
    if (it != modes_.end() && it->m == rep) return it->coeff;
    return 0.0;
  }

  // Full +/- mode list with wave vectors k = 2 pi m, for force and dispersion sums.
  struct FullMode {
    std::array<double, 3> k{0.0, 0.0, 0.0};
    std::array<int, 3> m{0, 0, 0};
    double coeff = 0.0;
  };
  std::vector<FullMode> full_modes() const {
    std::vector<FullMode> out;
    out.reserve(2 * modes_.size());
    for (const auto& mode : modes_) {
      FullMode f;
      f.m = mode.m;
      f.coeff = mode.coeff;
      for (int a = 0; a < 3; ++a) f.k[a] = two_pi * mode.m[a];
      out.push_back(f);
      FullMode g = f;
      g.m = detail::negate(mode.m);
      for (int a = 0; a < 3; ++a) g.k[a] = -f.k[a];
      out.push_back(g);
    }
    return out;
  }

  // Equality is over the mathematical content (dimension, mean level, mode
  // set); the smoothness-order annotation is config metadata and ignored.
  bool operator==(const FourierPotential& other) const {
    return dim_ == other.dim_ && coeff0_ == other.coeff0_ &&
           modes_.size() == other.modes_.size() &&
           std::equal(modes_.begin(), modes_.end(), other.modes_.begin(),
                      [](const PotentialMode& a, const PotentialMode& b) {
                        return a.m == b.m && a.coeff == b.coeff;
                      });
  }

 private:
  int dim_;
  double coeff0_;
  std::vector<PotentialMode> modes_;
  int smoothness_order_;
};

}  // namespace lblab
