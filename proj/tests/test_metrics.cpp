#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "lcs/metrics.hpp"
#include "lcs/rng.hpp"

using namespace lcs;
using namespace lcs::metrics;

TEST_CASE("pearson of identical, negated, and independent sequences") {
  std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> b = {2.0, 4.0, 6.0, 8.0, 10.0};
  std::vector<double> c = {-1.0, -2.0, -3.0, -4.0, -5.0};
  CHECK(pearson(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(a, c) == doctest::Approx(-1.0).epsilon(1e-12));
  // Symmetric cross pattern with zero covariance.
  std::vector<double> u = {1.0, -1.0, 1.0, -1.0};
  std::vector<double> v = {1.0, 1.0, -1.0, -1.0};
  CHECK(pearson(u, v) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pearson rejects zero-variance input") {
  std::vector<double> a = {3.0, 3.0, 3.0};
  std::vector<double> b = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(pearson(a, b), ConfigError);
  CHECK_THROWS_AS(pearson(b, a), ConfigError);
}

TEST_CASE("matching maximizes total absolute correlation on the 2x2 example") {
  // |corr| matrix [[0.1, 0.9], [0.8, 0.2]]: the swap (0->1, 1->0) totals 1.7
  // against 0.3 for identity.
  std::vector<std::vector<double>> m = {{0.1, 0.9}, {0.8, 0.2}};
  auto perm = match_components(m);
  REQUIRE(perm.size() == 2);
  CHECK(perm[0] == 1);
  CHECK(perm[1] == 0);
}

TEST_CASE("hungarian and exhaustive matching agree on random 6x6 matrices") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<double>> m(6, std::vector<double>(6));
    for (auto& row : m)
      for (auto& v : row) v = rng.uniform();

    // Exhaustive reference.
    std::vector<int> idx = {0, 1, 2, 3, 4, 5};
    double best = -1.0;
    do {
      double total = 0.0;
      for (int i = 0; i < 6; ++i) total += m[i][idx[i]];
      best = std::max(best, total);
    } while (std::next_permutation(idx.begin(), idx.end()));

    auto perm = match_components(m);
    double got = 0.0;
    std::vector<bool> used(6, false);
    for (int i = 0; i < 6; ++i) {
      REQUIRE(!used[perm[i]]);
      used[perm[i]] = true;
      got += m[i][perm[i]];
    }
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("matching handles matrices larger than the exhaustive cutoff") {
  Rng rng(29);
  const int n = 10;
  std::vector<std::vector<double>> m(n, std::vector<double>(n));
  for (auto& row : m)
    for (auto& v : row) v = rng.uniform();
  auto perm = match_components(m);
  std::vector<bool> used(n, false);
  for (int i = 0; i < n; ++i) {
    CHECK(!used[perm[i]]);
    used[perm[i]] = true;
  }
  // Greedy column choice can never beat the optimal assignment.
  double got = 0.0;
  for (int i = 0; i < n; ++i) got += m[i][perm[i]];
  double greedy = 0.0;
  std::vector<bool> taken(n, false);
  for (int i = 0; i < n; ++i) {
    int bestj = -1;
    for (int j = 0; j < n; ++j)
      if (!taken[j] && (bestj < 0 || m[i][j] > m[i][bestj])) bestj = j;
    taken[bestj] = true;
    greedy += m[i][bestj];
  }
  CHECK(got >= greedy - 1e-12);
}

TEST_CASE("MCC is invariant to affine maps, permutation, and sign flips") {
  Rng rng(31);
  const int n = 400, d = 3;
  std::vector<std::vector<double>> truth(d, std::vector<double>(n));
  for (auto& col : truth)
    for (auto& v : col) v = rng.normal();

  // Estimated = permuted, negated, affinely mapped truth.
  std::vector<std::vector<double>> est(d, std::vector<double>(n));
  const int perm[3] = {2, 0, 1};
  const double scale[3] = {-2.0, 0.5, 3.0};
  const double shift[3] = {1.0, -4.0, 0.25};
  for (int c = 0; c < d; ++c)
    for (int i = 0; i < n; ++i) est[c][i] = scale[c] * truth[perm[c]][i] + shift[c];

  auto rep = mcc(truth, est);
  CHECK(rep.mcc == doctest::Approx(1.0).epsilon(1e-12));
  for (int c = 0; c < d; ++c)
    CHECK(rep.matched_corr[c] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("MCC of independent noise is near zero") {
  Rng rng(37);
  const int n = 1000, d = 2;
  std::vector<std::vector<double>> truth(d, std::vector<double>(n));
  std::vector<std::vector<double>> est(d, std::vector<double>(n));
  for (auto& col : truth)
    for (auto& v : col) v = rng.normal();
  for (auto& col : est)
    for (auto& v : col) v = rng.normal();
  CHECK(mcc(truth, est).mcc < 0.1);
}

TEST_CASE("MCC requires enough samples and matching dims") {
  std::vector<std::vector<double>> two = {{1.0, 2.0}, {3.0, 4.0}};
  CHECK_THROWS_AS(mcc(two, two), ConfigError);
  std::vector<std::vector<double>> a = {{1.0, 2.0, 3.0}};
  std::vector<std::vector<double>> b = {{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}};
  CHECK_THROWS_AS(mcc(a, b), ConfigError);
}

TEST_CASE("label_kl matches a hand-computed case") {
  // KL([0.5,0.5] || [0.9,0.1]) = 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1)
  std::vector<double> p = {0.5, 0.5};
  std::vector<double> q = {0.9, 0.1};
  const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(label_kl(p, q) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(label_kl(p, p) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("label_kl with absolutely discontinuous support is infinite") {
  std::vector<double> p = {0.5, 0.5};
  std::vector<double> q = {1.0, 0.0};
  CHECK(std::isinf(label_kl(p, q)));
  // q has mass where p has none: the zero term contributes 0, not NaN.
  CHECK(label_kl(q, p) == doctest::Approx(std::log(1.0 / 0.5)).epsilon(1e-12));
}

TEST_CASE("r_squared definitions") {
  std::vector<double> y = {1.0, 2.0, 3.0, 4.0};
  CHECK(r_squared(y, y) == doctest::Approx(1.0).epsilon(1e-12));
  // Predicting the mean everywhere gives exactly 0.
  std::vector<double> mean_pred(4, 2.5);
  CHECK(r_squared(y, mean_pred) == doctest::Approx(0.0).epsilon(1e-12));
  // Worse than the mean goes negative.
  std::vector<double> bad = {4.0, 3.0, 2.0, 1.0};
  CHECK(r_squared(y, bad) < 0.0);
}

TEST_CASE("accuracy counts exact matches") {
  std::vector<int> t = {0, 1, 2, 1};
  std::vector<int> p = {0, 1, 1, 1};
  CHECK(accuracy(t, p) == doctest::Approx(0.75));
  CHECK(accuracy(t, t) == doctest::Approx(1.0));
}
