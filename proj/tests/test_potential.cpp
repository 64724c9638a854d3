#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "lblab/io.hpp"
#include "lblab/potential.hpp"
#include "lblab/rng.hpp"

using namespace lblab;

namespace {

// Oracle: evaluate V directly from the full (two-sided) mode list,
// V(x) = c_0 + sum_{m != 0} c_m cos(2 pi m.x), independent of eval_V's
// half-mode folding.
double eval_oracle(const FourierPotential& pot, const std::array<double, 3>& x) {
  double s = pot.coeff0();
  for (const auto& mode : pot.full_modes()) {
    double phase = 0.0;
    for (int a = 0; a < pot.dim(); ++a) phase += mode.m[a] * x[a];
    s += mode.coeff * std::cos(two_pi * phase);
  }
  return s;
}

}  // namespace

TEST_CASE("eval_V matches the two-sided mode sum") {
  auto pot = FourierPotential::smooth_screened(2, 3, 0.7, 4);
  Rng rng(11u);
  for (int trial = 0; trial < 100; ++trial) {
    std::array<double, 3> x{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), 0.0};
    double got = pot.eval_V(x.data());
    double want = eval_oracle(pot, x);
    REQUIRE(got == Catch::Approx(want).margin(1e-13));
  }
}

TEST_CASE("gradient matches central differences") {
  auto pot = FourierPotential::smooth_screened(2, 2, 0.4, 3);
  Rng rng(12u);
  const double h = 1e-6;
  for (int trial = 0; trial < 30; ++trial) {
    std::array<double, 3> x{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), 0.0};
    double g[3];
    pot.eval_gradV(x.data(), g);
    for (int a = 0; a < 2; ++a) {
      auto xp = x, xm = x;
      xp[a] += h;
      xm[a] -= h;
      double fd = (pot.eval_V(xp.data()) - pot.eval_V(xm.data())) / (2.0 * h);
      REQUIRE(g[a] == Catch::Approx(fd).margin(1e-7));
    }
  }
}

TEST_CASE("unit periodicity in every axis") {
  auto pot = FourierPotential::smooth_screened(3, 1, 0.3, 2);
  std::array<double, 3> x{0.37, 0.81, 0.12};
  double base = pot.eval_V(x.data());
  for (int a = 0; a < 3; ++a) {
    auto y = x;
    y[a] += 1.0;
    REQUIRE(pot.eval_V(y.data()) == Catch::Approx(base).margin(1e-12));
  }
}

TEST_CASE("mean square over the cell equals the coefficient square sum") {
  // Trapezoid sums on a periodic grid are exact for trigonometric polynomials
  // once the grid out-resolves the highest mode, so this is an independent
  // Parseval check of the half-mode bookkeeping.
  auto pot = FourierPotential::smooth_screened(2, 2, 0.9, 2);
  const int n = 16;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double x[3] = {double(i) / n, double(j) / n, 0.0};
      acc += sq(pot.eval_V(x));
    }
  acc /= double(n) * n;
  REQUIRE(acc == Catch::Approx(pot.coeff_square_sum(true)).epsilon(1e-12));
}

TEST_CASE("sup norm bound holds and is attained for a pure cosine") {
  auto screened = FourierPotential::smooth_screened(1, 3, 1.1, 2);
  double max_seen = 0.0;
  for (int i = 0; i < 4096; ++i) {
    double v = std::abs(screened.eval_V(double(i) / 4096.0));
    max_seen = std::max(max_seen, v);
  }
  REQUIRE(max_seen <= screened.sup_norm_bound() + 1e-12);

  auto cosine = FourierPotential::single_cosine(1, 0.5);
  REQUIRE(cosine.sup_norm_bound() == Catch::Approx(1.0));
  REQUIRE(cosine.eval_V(0.0) == Catch::Approx(1.0));  // bound attained at x = 0
}

TEST_CASE("screened preset coefficients follow the power law") {
  auto pot = FourierPotential::smooth_screened(2, 2, 0.8, 4);
  REQUIRE(pot.coeff_of({1, 0, 0}) == Catch::Approx(0.8 * std::pow(2.0, -4.0)));
  REQUIRE(pot.coeff_of({1, 1, 0}) == Catch::Approx(0.8 * std::pow(3.0, -4.0)));
  REQUIRE(pot.coeff_of({0, 2, 0}) == Catch::Approx(0.8 * std::pow(5.0, -4.0)));
  // Canonical half only, but lookups work for either sign.
  REQUIRE(pot.coeff_of({-1, -1, 0}) == pot.coeff_of({1, 1, 0}));
  // (2K+1)^2 - 1 = 24 full modes fold to 12 canonical representatives.
  REQUIRE(pot.half_modes().size() == 12);
  REQUIRE(pot.full_modes().size() == 24);
}

TEST_CASE("absent modes report zero coefficient") {
  auto pot = FourierPotential::single_cosine(1, 0.3);
  REQUIRE(pot.coeff_of({2, 0, 0}) == 0.0);
  REQUIRE(pot.coeff_of({0, 0, 0}) == 0.0);
}

TEST_CASE("full-mode constructor folds symmetric pairs and rejects asymmetry") {
  std::vector<PotentialMode> full = {{{1, 0, 0}, 0.25}, {{-1, 0, 0}, 0.25}};
  auto pot = FourierPotential::from_full_modes(1, 0.0, full);
  REQUIRE(pot == FourierPotential::single_cosine(1, 0.25));

  std::vector<PotentialMode> lopsided = {{{1, 0, 0}, 0.25}, {{-1, 0, 0}, 0.30}};
  REQUIRE_THROWS_AS(FourierPotential::from_full_modes(1, 0.0, lopsided),
                    std::invalid_argument);
}

TEST_CASE("constructor enforces the admissibility invariants") {
  using V = std::vector<PotentialMode>;
  REQUIRE_THROWS_AS(FourierPotential(0, 0.0, {}), std::invalid_argument);
  REQUIRE_THROWS_AS(FourierPotential(4, 0.0, {}), std::invalid_argument);
  REQUIRE_THROWS_AS(FourierPotential(1, -0.1, {}), std::invalid_argument);
  REQUIRE_THROWS_AS(FourierPotential(1, 0.0, V{{{1, 0, 0}, -0.2}}), std::invalid_argument);
  // Mode component beyond the declared dimension.
  REQUIRE_THROWS_AS(FourierPotential(1, 0.0, V{{{1, 1, 0}, 0.2}}), std::invalid_argument);
  // Duplicate canonical mode.
  REQUIRE_THROWS_AS(FourierPotential(1, 0.0, V{{{1, 0, 0}, 0.2}, {{1, 0, 0}, 0.2}}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(FourierPotential(1, 0.0, {}, -1), std::invalid_argument);
}

TEST_CASE("zero preset is empty and evaluates to zero") {
  auto pot = FourierPotential::from_preset("zero", 2, 0.0);
  REQUIRE(pot.empty());
  double x[3] = {0.3, 0.6, 0.0};
  REQUIRE(pot.eval_V(x) == 0.0);
  REQUIRE(pot.sup_norm_bound() == 0.0);
  REQUIRE_THROWS_AS(FourierPotential::from_preset("nonsense", 1, 0.1),
                    std::invalid_argument);
}

TEST_CASE("json round trip preserves the potential exactly") {
  auto pot = FourierPotential::smooth_screened(2, 2, 0.55, 3);
  auto j = io::potential_to_json(pot);
  auto back = io::potential_from_json(j);
  REQUIRE(back == pot);

  // Preset shorthand parses too.
  nlohmann::json preset = {{"preset", "single_cosine"}, {"dim", 1}, {"amplitude", 0.5}};
  REQUIRE(io::potential_from_json(preset) == FourierPotential::single_cosine(1, 0.5));
}

TEST_CASE("explicit empty mode list is a schema error") {
  nlohmann::json bad = {{"dim", 1}, {"coeff0", 0.0}, {"modes", nlohmann::json::array()}};
  REQUIRE_THROWS_AS(io::potential_from_json(bad), std::invalid_argument);
}
