#pragma once

#include <vector>

#include "lcs/errors.hpp"

namespace lcs::metrics {

double pearson(const std::vector<double>& a, const std::vector<double>& b);

// Permutation maximizing the total matched score of a square non-negative
// matrix (row i matched to column perm[i]). Exhaustive for d <= 8,
// Hungarian assignment above that; ties broken by lowest row index.
std::vector<int> match_components(const std::vector<std::vector<double>>& abs_corr);

struct MccReport {
  double mcc = 0.0;
  std::vector<int> matching;          // est column per true column
  std::vector<double> matched_corr;   // |r| per matched pair
};

// Mean absolute Pearson correlation between true and estimated latents after
// optimal component matching. Columns are latent dimensions.
MccReport mcc(const std::vector<std::vector<double>>& true_cols,
              const std::vector<std::vector<double>>& est_cols);

// KL(p || q) for categorical distributions; +infinity when q has a zero
// where p has mass.
double label_kl(const std::vector<double>& p, const std::vector<double>& q);

double r_squared(const std::vector<double>& y_true, const std::vector<double>& y_pred);
double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred);

}  // namespace lcs::metrics
