#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace lcs {

// Singular values of a dense row-major m x n matrix via one-sided Jacobi.
// Intended for the small matrices in this project (mixing weights, the
// natural-parameter difference matrix).
inline std::vector<double> singular_values(std::vector<double> a, int m, int n) {
  // Work on columns; transpose if wide so that m >= n.
  if (m < n) {
    std::vector<double> t(a.size());
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
    a.swap(t);
    std::swap(m, n);
  }
  auto at = [&](int i, int j) -> double& { return a[i * n + j]; };

  const double tol = 1e-14;
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (int i = 0; i < m; ++i) {
          app += at(i, p) * at(i, p);
          aqq += at(i, q) * at(i, q);
          apq += at(i, p) * at(i, q);
        }
        off = std::max(off, std::abs(apq) / std::max(std::sqrt(app * aqq),
                                                     std::numeric_limits<double>::min()));
        if (std::abs(apq) <= tol * std::sqrt(app * aqq)) continue;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (int i = 0; i < m; ++i) {
          const double vp = at(i, p), vq = at(i, q);
          at(i, p) = c * vp - s * vq;
          at(i, q) = s * vp + c * vq;
        }
      }
    if (off < tol) break;
  }

  std::vector<double> sv(n);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += at(i, j) * at(i, j);
    sv[j] = std::sqrt(s);
  }
  std::sort(sv.begin(), sv.end(), [](double x, double y) { return x > y; });
  return sv;
}

// sigma_max / sigma_min; infinity when the matrix is numerically singular.
inline double condition_number(const std::vector<double>& a, int m, int n) {
  auto sv = singular_values(a, m, n);
  if (sv.empty() || sv.back() <= 0.0) return std::numeric_limits<double>::infinity();
  return sv.front() / sv.back();
}

}  // namespace lcs
