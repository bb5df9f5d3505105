#pragma once

// Test-only reference computations. Nothing here calls into the library code
// paths it is used to check.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

namespace oracle {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

inline double leaf_score(double g, double h, double lambda) { return g * g / (h + lambda); }

// Enumerates every (feature, midpoint) split, summing gradient statistics
// directly for each candidate, and returns the best by gain. Near-equal gains
// (relative 1e-12) are ties, resolved by lowest feature then lowest threshold.
inline Split brute_force_stump(const std::vector<std::vector<double>>& x, const std::vector<double>& grad,
                               const std::vector<double>& hess, double lambda, int min_leaf) {
  const std::size_t n = x.size();
  const std::size_t d = n ? x[0].size() : 0;
  double g_all = 0, h_all = 0;
  for (std::size_t i = 0; i < n; ++i) {
    g_all += grad[i];
    h_all += hess[i];
  }
  std::vector<Split> all;
  for (std::size_t f = 0; f < d; ++f) {
    std::set<double> distinct;
    for (const auto& row : x) distinct.insert(row[f]);
    std::vector<double> v(distinct.begin(), distinct.end());
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
      const double t = (v[k] + v[k + 1]) / 2.0;
      double gl = 0, hl = 0;
      int nl = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i][f] <= t) {
          gl += grad[i];
          hl += hess[i];
          ++nl;
        }
      }
      const int nr = static_cast<int>(n) - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double gain =
          leaf_score(gl, hl, lambda) + leaf_score(g_all - gl, h_all - hl, lambda) - leaf_score(g_all, h_all, lambda);
      all.push_back({static_cast<int>(f), t, gain});
    }
  }
  Split best;
  double max_gain = -1e300;
  for (const auto& s : all) max_gain = std::max(max_gain, s.gain);
  if (all.empty() || max_gain < -1e-12) return best;  // zero-gain splits allowed
  const double tol = 1e-12 * std::max(1.0, std::abs(max_gain));
  for (const auto& s : all) {  // already ordered by (feature, threshold)
    if (s.gain >= max_gain - tol) return s;
  }
  return best;
}

// Scalar LSTM step for hidden size 2 and input size 2 followed by a dense
// layer, gates ordered input, forget, cell, output. Weights are given as plain
// arrays: wx[gate][unit][input], wh[gate][unit][hidden], b[gate][unit].
struct TinyLstm {
  double wx[4][2][2];
  double wh[4][2][2];
  double b[4][2];
};

inline double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// One step from the zero state; returns the hidden vector.
inline std::vector<double> tiny_lstm_step(const TinyLstm& m, const double x[2]) {
  double z[4][2];
  for (int g = 0; g < 4; ++g) {
    for (int u = 0; u < 2; ++u) z[g][u] = m.wx[g][u][0] * x[0] + m.wx[g][u][1] * x[1] + m.b[g][u];
  }
  std::vector<double> h(2);
  for (int u = 0; u < 2; ++u) {
    const double i = sig(z[0][u]);
    const double gcell = std::tanh(z[2][u]);
    const double o = sig(z[3][u]);
    const double c = i * gcell;  // previous cell state is zero
    h[u] = o * std::tanh(c);
  }
  return h;
}

}  // namespace oracle
