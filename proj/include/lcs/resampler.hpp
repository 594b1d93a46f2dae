#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcs/scm.hpp"

namespace lcs::resample {

struct ResampleSpec {
  int num_domains = 4;
  int num_classes = 7;
  double target_kl = 0.3;
  // available_counts[k][c]: labeled samples of class c in domain k. Only
  // needed by subsample; solve_marginals works from (K, C, target) alone.
  std::vector<std::vector<int>> available_counts;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MarginalSet {
  std::vector<std::vector<double>> distributions;  // K x C, entries >= 1e-6
  std::vector<std::vector<double>> kl_matrix;      // achieved ordered-pair KLs
};

// Per-domain categorical label marginals whose every ordered-pair KL lies
// within +-0.05 of the target, found by gradient descent on softmax scores.
MarginalSet solve_marginals(const ResampleSpec& spec);

// Subsample a labeled dataset so each domain realizes its marginal: domain
// scale N_u is the largest integer with floor(N_u p_k) <= available(u,k) for
// every class, then floor(N_u p_k) samples per class are drawn uniformly
// without replacement.
scm::Dataset subsample(const scm::Dataset& ds, const MarginalSet& marginals,
                       std::uint64_t seed);

// Empirical per-domain label distributions of a labeled dataset (K x C).
std::vector<std::vector<double>> empirical_marginals(const scm::Dataset& ds,
                                                     int num_classes);

void export_marginals_json(const MarginalSet& m, const std::string& path);

}  // namespace lcs::resample
