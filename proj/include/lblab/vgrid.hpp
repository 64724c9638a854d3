#pragma once

// Uniform cell-centered velocity grids on [-vmax, vmax]^d (d = 1 or 2) and
// scalar fields living on them.  Cell centers sit at v_i = -vmax + (i+1/2) h,
// h = 2 vmax / n, so midpoint sums of Schwartz-class integrands converge
// spectrally fast in n once the box captures the Gaussian tails.
//
// A field is either a phase-space "density" (carries the Maxwellian weight,
// integrates with plain cell sums) or a "ratio" (a function measured against
// the Maxwellian, paired through Maxwellian-weighted sums).

#include <cmath>
#include <vector>

#include "lblab/common.hpp"

namespace lblab {

struct VGrid {
  int dim = 1;
  int n = 0;        // cells per axis
  double vmax = 0;  // half-width of the box

  VGrid() = default;
  VGrid(int dim_, int n_, double vmax_) : dim(dim_), n(n_), vmax(vmax_) {
    require(dim == 1 || dim == 2, "VGrid: dim must be 1 or 2");
    require(n >= 16, "VGrid: need at least 16 cells per axis");
    require(vmax > 0.0, "VGrid: vmax must be > 0");
  }

  // Default box: six thermal widths.
  static VGrid for_beta(int dim, int n, double beta, double widths = 6.0) {
    require(beta > 0.0, "VGrid::for_beta: beta must be > 0");
    return VGrid(dim, n, widths / std::sqrt(beta));
  }

  double h() const { return 2.0 * vmax / n; }
  double coord(int i) const { return -vmax + (i + 0.5) * h(); }
  double face(int i) const { return -vmax + i * h(); }  // i = 0..n
  std::size_t size() const { return dim == 1 ? std::size_t(n) : std::size_t(n) * n; }
  std::size_t idx(int i, int j) const { return std::size_t(i) * n + j; }
  double cell_volume() const { return dim == 1 ? h() : h() * h(); }

  bool operator==(const VGrid& o) const {
    return dim == o.dim && n == o.n && vmax == o.vmax;
  }
};

enum class FnKind { density, ratio };

template <class T>
struct GridFn {
  VGrid grid;
  FnKind kind = FnKind::density;
  std::vector<T> values;

  GridFn() = default;
  GridFn(const VGrid& g, FnKind k, T fill = T{})
      : grid(g), kind(k), values(g.size(), fill) {}

  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }
  T& at(int i, int j) { return values[grid.idx(i, j)]; }
  const T& at(int i, int j) const { return values[grid.idx(i, j)]; }
};

inline double maxwellian_value(double beta, double v2, int dim) {
  return std::pow(beta / two_pi, 0.5 * dim) * std::exp(-0.5 * beta * v2);
}

inline GridFn<double> maxwellian(const VGrid& g, double beta) {
  require(beta > 0.0, "maxwellian: beta must be > 0");
  GridFn<double> out(g, FnKind::density);
  if (g.dim == 1) {
    for (int i = 0; i < g.n; ++i)
      out[i] = maxwellian_value(beta, sq(g.coord(i)), 1);
  } else {
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j)
        out.at(i, j) = maxwellian_value(beta, sq(g.coord(i)) + sq(g.coord(j)), 2);
  }
  return out;
}

template <class T>
inline T mass(const GridFn<T>& f) {
  require(f.kind == FnKind::density, "mass: defined for density fields");
  NeumaierSum re, im;
  for (const T& v : f.values) {
    if constexpr (std::is_same_v<T, cplx>) {
      re.add(v.real());
      im.add(v.imag());
    } else {
      re.add(v);
    }
  }
  if constexpr (std::is_same_v<T, cplx>)
    return cplx(re.value(), im.value()) * f.grid.cell_volume();
  else
    return re.value() * f.grid.cell_volume();
}

// Maxwellian-weighted inner product of two ratio fields: sum h^d M f g.
template <class T>
inline T l2_beta_inner(const GridFn<T>& f, const GridFn<T>& g, double beta) {
  require(f.grid == g.grid, "l2_beta_inner: grid mismatch");
  require(f.kind == FnKind::ratio && g.kind == FnKind::ratio,
          "l2_beta_inner: defined for ratio fields");
  GridFn<double> M = maxwellian(f.grid, beta);
  NeumaierSum re, im;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    T term;
    if constexpr (std::is_same_v<T, cplx>)
      term = std::conj(f.values[i]) * g.values[i] * M.values[i];
    else
      term = f.values[i] * g.values[i] * M.values[i];
    if constexpr (std::is_same_v<T, cplx>) {
      re.add(term.real());
      im.add(term.imag());
    } else {
      re.add(term);
    }
  }
  double vol = f.grid.cell_volume();
  if constexpr (std::is_same_v<T, cplx>)
    return cplx(re.value(), im.value()) * vol;
  else
    return re.value() * vol;
}

template <class T>
inline double l2_beta_norm(const GridFn<T>& f, double beta) {
  GridFn<T> g = f;
  if constexpr (std::is_same_v<T, cplx>) {
    T ip = l2_beta_inner(f, g, beta);
    return std::sqrt(std::max(0.0, ip.real()));
  } else {
    return std::sqrt(std::max(0.0, l2_beta_inner(f, g, beta)));
  }
}

// One-dimensional Maxwellian quadrature weights along an axis, normalized to
// sum exactly to 1.  Averages < . >_{v} in the mode-coupling operators use
// these weights so that rank-one identities hold at the discrete level.
inline std::vector<double> maxwell_weights_1d(const VGrid& g, double beta) {
  std::vector<double> w(g.n);
  NeumaierSum total;
  for (int i = 0; i < g.n; ++i) {
    w[i] = g.h() * maxwellian_value(beta, sq(g.coord(i)), 1);
    total.add(w[i]);
  }
  double t = total.value();
  require(t > 0.0, "maxwell_weights_1d: degenerate weights");
  for (double& x : w) x /= t;
  return w;
}

}  // namespace lblab
