#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "lblab/common.hpp"

namespace lblab {

// A lattice walk over correlation levels.  Steps live in {-2, -1, 0, +1};
// the walk starts at level 1 and after step j sits at level 1 + s_j where
// s_j = sigma_1 + ... + sigma_j.  gamma counts the non-increasing steps
// (sigma_j <= 0), each of which carries one factor of 1/N in the expansion
// the walk indexes.
struct WalkIndex {
  std::vector<int> sigma;   // steps, length ell
  int n = 0;                // target order (gamma budget)
  int ell = 0;              // length
  int gamma = 0;            // #{j : sigma_j <= 0}
  std::vector<int> levels;  // levels after each step: 1 + s_j
};

// Two admissible classes at order n:
//   returning walks: s_ell = 0, s_j > 0 for 1 <= j < ell, gamma = n;
//   escaping walks:  s_j > 0 for all j, s_ell >= 2, gamma + s_ell = n + 1.
// Both are enumerated within lengths [lmin, lmax]; the defaults are the
// tight bounds n+1 and 3n implied by the step alphabet.
struct WalkSets {
  std::vector<WalkIndex> returning;
  std::vector<WalkIndex> escaping;
};

namespace detail {

inline WalkIndex make_walk(const std::vector<int>& sigma, int n) {
  WalkIndex w;
  w.sigma = sigma;
  w.n = n;
  w.ell = static_cast<int>(sigma.size());
  w.gamma = 0;
  int s = 0;
  w.levels.reserve(sigma.size());
  for (int step : sigma) {
    s += step;
    if (step <= 0) ++w.gamma;
    w.levels.push_back(1 + s);
  }
  return w;
}

inline void walk_dfs(std::vector<int>& sigma, int s, int gamma, int n,
                     int lmin, int lmax, WalkSets& out) {
  int depth = static_cast<int>(sigma.size());
  if (depth >= lmax) return;
  static const int steps[4] = {-2, -1, 0, 1};
  for (int step : steps) {
    int s2 = s + step;
    int g2 = gamma + (step <= 0 ? 1 : 0);
    if (g2 > n) continue;  // gamma is n (returning) or <= n-1 (escaping), and never decreases
    int len = depth + 1;
    sigma.push_back(step);
    if (s2 <= 0) {
      // Interior positivity is gone; only a returning terminus survives.
      if (s2 == 0 && g2 == n && len >= lmin && len <= lmax)
        out.returning.push_back(make_walk(sigma, n));
    } else {
      if (s2 >= 2 && g2 + s2 == n + 1 && len >= lmin && len <= lmax)
        out.escaping.push_back(make_walk(sigma, n));
      // Keep extending while a completion is still possible: the height can
      // shrink by at most 2 per remaining step, and gamma only grows.
      int remaining = lmax - len;
      if (g2 <= n && s2 <= 2 * remaining + (n + 1)) {
        walk_dfs(sigma, s2, g2, n, lmin, lmax, out);
      }
    }
    sigma.pop_back();
  }
}

}  // namespace detail

// Enumerate both walk classes at order n by depth-first search with prefix
// pruning.  Walks are produced in lexicographic step order (-2 < -1 < 0 < 1).
inline WalkSets enumerate_walks(int n, int lmin = -1, int lmax = -1) {
  require(n >= 1, "walk order must be >= 1");
  require(n <= 8, "walk order above 8 is not supported (search space explodes)");
  if (lmin < 0) lmin = n + 1;
  if (lmax < 0) lmax = 3 * n;
  require(lmin >= 1 && lmax >= lmin, "bad walk length window");
  WalkSets out;
  std::vector<int> sigma;
  sigma.reserve(static_cast<std::size_t>(lmax));
  detail::walk_dfs(sigma, 0, 0, n, lmin, lmax, out);
  return out;
}

// Operator token for one step.  `level_after` is the level the step lands on
// (1 + s_j); the token records the landing level as subscript and the level
// the step came from as superscript:
//   +1 -> M_m^{m-1}   (creation: level raised by one)
//   -1 -> S_m^{m+1}   (transfer down by one)
//   -2 -> S_m^{m+2}   (transfer down by two)
//    0 -> S_m^{m}     (same-level transfer)
inline std::string operator_token(int step, int level_after) {
  int m = level_after;
  int src = m - step;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%c_%d^%d", step == 1 ? 'M' : 'S', m, src);
  return std::string(buf);
}

// Tokens in walk (time) order: entry j belongs to step sigma_{j+1}.  Written
// as a right-to-left operator product, the first entry acts first.
inline std::vector<std::string> operator_word(const WalkIndex& w) {
  std::vector<std::string> tokens;
  tokens.reserve(w.sigma.size());
  for (std::size_t j = 0; j < w.sigma.size(); ++j)
    tokens.push_back(operator_token(w.sigma[j], w.levels[j]));
  return tokens;
}

}  // namespace lblab
