#include "lcs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lcs::metrics {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ConfigError("pearson: series must have equal length >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw ConfigError("pearson: zero-variance series");
  return sab / std::sqrt(saa * sbb);
}

namespace {

// Hungarian algorithm (shortest augmenting path), minimizing total cost.
std::vector<int> hungarian_min(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> perm(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) perm[p[j] - 1] = j - 1;
  return perm;
}

}  // namespace

std::vector<int> match_components(const std::vector<std::vector<double>>& abs_corr) {
  const int d = static_cast<int>(abs_corr.size());
  for (const auto& row : abs_corr)
    if (static_cast<int>(row.size()) != d)
      throw ConfigError("match_components: matrix must be square");

  if (d <= 8) {
    std::vector<int> perm(d), best(d);
    std::iota(perm.begin(), perm.end(), 0);
    best = perm;
    double best_total = -1.0;
    do {
      double total = 0.0;
      for (int i = 0; i < d; ++i) total += abs_corr[i][perm[i]];
      if (total > best_total + 1e-15) {
        best_total = total;
        best = perm;
      }
      // ties keep the earlier (lexicographically smaller) permutation
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }

  double mx = 0.0;
  for (const auto& row : abs_corr)
    for (double v : row) mx = std::max(mx, v);
  std::vector<std::vector<double>> cost(d, std::vector<double>(d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) cost[i][j] = mx - abs_corr[i][j];
  return hungarian_min(cost);
}

MccReport mcc(const std::vector<std::vector<double>>& true_cols,
              const std::vector<std::vector<double>>& est_cols) {
  if (true_cols.size() != est_cols.size() || true_cols.empty())
    throw ConfigError("mcc: dimension mismatch");
  const int d = static_cast<int>(true_cols.size());
  if (true_cols[0].size() < 3) throw ConfigError("mcc: need at least 3 samples");

  std::vector<std::vector<double>> abs_corr(d, std::vector<double>(d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      abs_corr[i][j] = std::abs(pearson(true_cols[i], est_cols[j]));

  MccReport rep;
  rep.matching = match_components(abs_corr);
  for (int i = 0; i < d; ++i) rep.matched_corr.push_back(abs_corr[i][rep.matching[i]]);
  rep.mcc = std::accumulate(rep.matched_corr.begin(), rep.matched_corr.end(), 0.0) /
            static_cast<double>(d);
  return rep;
}

double label_kl(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty())
    throw ConfigError("label_kl: support sizes differ");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    if (q[k] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[k] * std::log(p[k] / q[k]);
  }
  return kl;
}

double r_squared(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw ConfigError("r_squared: length mismatch");
  const double mean = std::accumulate(y_true.begin(), y_true.end(), 0.0) /
                      static_cast<double>(y_true.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (ss_tot == 0.0) throw ConfigError("r_squared: constant labels");
  return 1.0 - ss_res / ss_tot;
}

double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw ConfigError("accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (y_true[i] == y_pred[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

}  // namespace lcs::metrics
