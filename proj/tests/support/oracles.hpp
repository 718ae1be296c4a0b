// Copyright 2026 The mospred Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Brute-force reference implementations used as test oracles. These stay
// deliberately independent of the library code paths they check.

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracles {

// Pearson correlation via the raw sum formula.
inline double pearson_direct(const std::vector<double>& x,
                             const std::vector<double>& y) {
  const size_t n = x.size();
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  const double nn = static_cast<double>(n);
  const double num = sxy - sx * sy / nn;
  const double den = std::sqrt((sxx - sx * sx / nn) * (syy - sy * sy / nn));
  return num / den;
}

// Average ranks computed by direct pairwise counting: rank(i) = 1 + (number
// of values strictly below) + (ties other than self) / 2.
inline std::vector<double> average_ranks_pairwise(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<double> ranks(n);
  for (size_t i = 0; i < n; ++i) {
    int below = 0, tied = 0;
    for (size_t j = 0; j < n; ++j) {
      if (v[j] < v[i]) ++below;
      if (v[j] == v[i] && j != i) ++tied;
    }
    ranks[i] = 1.0 + below + tied / 2.0;
  }
  return ranks;
}

inline double spearman_oracle(const std::vector<double>& x,
                              const std::vector<double>& y) {
  return pearson_direct(average_ranks_pairwise(x), average_ranks_pairwise(y));
}

// Kendall tau-b by O(n^2) pair enumeration.
inline double ktau_oracle(const std::vector<double>& x,
                          const std::vector<double>& y) {
  const size_t n = x.size();
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0) ++ties_x;
      if (dy == 0) ++ties_y;
      if (dx != 0 && dy != 0) {
        if (dx * dy > 0)
          ++concordant;
        else
          ++discordant;
      }
    }
  }
  const long long n0 = static_cast<long long>(n) * (static_cast<long long>(n) - 1) / 2;
  const double denom = std::sqrt(static_cast<double>(n0 - ties_x) *
                                 static_cast<double>(n0 - ties_y));
  return static_cast<double>(concordant - discordant) / denom;
}

// Full-matrix Levenshtein (distinct formulation from the library's
// two-row DP).
inline int edit_distance_matrix(const std::vector<std::string>& a,
                                const std::vector<std::string>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j) {
      int best = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      best = std::min(best, d[i - 1][j] + 1);
      best = std::min(best, d[i][j - 1] + 1);
      d[i][j] = best;
    }
  return d[n][m];
}

// Spectral peak by direct windowed DFT over a frequency grid (no FFT),
// refined by a second finer pass around the coarse winner.
inline double spectral_peak_hz(const std::vector<float>& x, int sample_rate,
                               double f_lo, double f_hi) {
  auto window_mag = [&](double f) {
    const size_t n = x.size();
    std::complex<double> acc(0.0, 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n - 1));
      const double ang = -2.0 * M_PI * f * static_cast<double>(i) / sample_rate;
      acc += x[i] * w * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    return std::abs(acc);
  };
  double best_f = f_lo, best_m = -1.0;
  const double coarse = (f_hi - f_lo) / 200.0;
  for (double f = f_lo; f <= f_hi; f += coarse) {
    const double m = window_mag(f);
    if (m > best_m) {
      best_m = m;
      best_f = f;
    }
  }
  double lo = best_f - coarse, hi = best_f + coarse;
  const double fine = (hi - lo) / 100.0;
  for (double f = lo; f <= hi; f += fine) {
    const double m = window_mag(f);
    if (m > best_m) {
      best_m = m;
      best_f = f;
    }
  }
  return best_f;
}

// Central finite difference of a scalar function of one coordinate.
template <typename F>
double central_diff(F&& fn, double& slot, double h = 1e-5) {
  const double orig = slot;
  slot = orig + h;
  const double up = fn();
  slot = orig - h;
  const double down = fn();
  slot = orig;
  return (up - down) / (2.0 * h);
}

}  // namespace oracles
