// Copyright 2026 The lsttts Authors
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

// Shared helpers for the unit and acceptance suites.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace testsup {

// Regularized upper incomplete gamma Q(a, x), series + continued fraction.
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // P(a,x) by series, return 1 - P
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-14) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
  }
  // Q(a,x) by continued fraction (Lentz)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-14) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

// p-value of a chi-square statistic with the given degrees of freedom.
inline double chi_square_p_value(double stat, int dof) {
  return gamma_q(double(dof) / 2.0, stat / 2.0);
}

// Chi-square uniformity p-value for observed counts against a uniform
// expectation over counts.size() bins.
inline double uniform_chi_square_p(const std::vector<long>& counts) {
  long total = 0;
  for (long c : counts) total += c;
  const double expected = double(total) / double(counts.size());
  double stat = 0.0;
  for (long c : counts) {
    const double d = double(c) - expected;
    stat += d * d / expected;
  }
  return chi_square_p_value(stat, int(counts.size()) - 1);
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Numeric rank via Gaussian elimination with partial pivoting.
inline int matrix_rank(std::vector<double> a, std::size_t rows, std::size_t cols,
                       double tol = 1e-9) {
  int rank = 0;
  for (std::size_t col = 0; col < cols && std::size_t(rank) < rows; ++col) {
    std::size_t pivot = std::size_t(rank);
    for (std::size_t r = pivot + 1; r < rows; ++r)
      if (std::abs(a[r * cols + col]) > std::abs(a[pivot * cols + col])) pivot = r;
    if (std::abs(a[pivot * cols + col]) < tol) continue;
    for (std::size_t c = 0; c < cols; ++c)
      std::swap(a[pivot * cols + c], a[std::size_t(rank) * cols + c]);
    for (std::size_t r = std::size_t(rank) + 1; r < rows; ++r) {
      const double f = a[r * cols + col] / a[std::size_t(rank) * cols + col];
      for (std::size_t c = 0; c < cols; ++c) a[r * cols + c] -= f * a[std::size_t(rank) * cols + c];
    }
    ++rank;
  }
  return rank;
}

}  // namespace testsup
