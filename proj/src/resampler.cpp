#include "lcs/resampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "lcs/adam.hpp"
#include "lcs/metrics.hpp"
#include "lcs/rng.hpp"
#include "lcs/tensor.hpp"

namespace lcs::resample {

namespace {

constexpr double kMarginFloor = 1e-6;
constexpr double kResidualTol = 0.05;

std::vector<std::vector<double>> extract_distributions(std::vector<Tensor>& scores,
                                                       int C) {
  std::vector<std::vector<double>> dists;
  for (auto& s : scores) {
    Tensor p = add_const(scale(softmax_rows(s), 1.0 - C * kMarginFloor), kMarginFloor);
    dists.push_back(p.data());
  }
  return dists;
}

std::vector<std::vector<double>> kl_matrix_of(
    const std::vector<std::vector<double>>& dists) {
  const int K = static_cast<int>(dists.size());
  std::vector<std::vector<double>> kl(K, std::vector<double>(K, 0.0));
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      if (i != j) kl[i][j] = metrics::label_kl(dists[i], dists[j]);
  return kl;
}

double max_residual(const std::vector<std::vector<double>>& kl, double target) {
  double worst = 0.0;
  for (std::size_t i = 0; i < kl.size(); ++i)
    for (std::size_t j = 0; j < kl.size(); ++j)
      if (i != j) worst = std::max(worst, std::abs(kl[i][j] - target));
  return worst;
}

}  // namespace

void ResampleSpec::validate() const {
  if (num_domains < 2) throw ConfigError("ResampleSpec: need at least 2 domains");
  if (num_classes < 1) throw ConfigError("ResampleSpec: need at least 1 class");
  if (target_kl < 0.0) throw ConfigError("ResampleSpec: target_kl must be >= 0");
  if (num_classes == 1 && target_kl > 0.0)
    throw ConfigError("ResampleSpec: single-class marginals always have KL 0; target " +
                      std::to_string(target_kl) + " is infeasible");
}

MarginalSet solve_marginals(const ResampleSpec& spec) {
  spec.validate();
  const int K = spec.num_domains;
  const int C = spec.num_classes;

  MarginalSet out;
  if (spec.target_kl == 0.0) {
    out.distributions.assign(K, std::vector<double>(C, 1.0 / C));
    out.kl_matrix = kl_matrix_of(out.distributions);
    return out;
  }

  // Deterministic restarts: each attempt re-initializes the scores from a
  // symmetric Dirichlet(5) draw (log-space), one tensor per domain so
  // ordered-pair KLs compose from whole-row softmaxes.
  const int max_attempts = 8;
  double best = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Rng rng(derive_seed(spec.seed, "marginal_init", static_cast<std::uint64_t>(attempt)));
    std::vector<Tensor> scores;
    for (int k = 0; k < K; ++k) {
      std::vector<double> s(C);
      double total = 0.0;
      std::vector<double> g(C);
      for (int c = 0; c < C; ++c) {
        // Gamma(5) via sum of 5 exponentials.
        double acc = 0.0;
        for (int r = 0; r < 5; ++r) acc += -std::log(1.0 - rng.uniform());
        g[c] = acc;
        total += acc;
      }
      for (int c = 0; c < C; ++c) s[c] = std::log(g[c] / total);
      scores.push_back(Tensor::from({1, C}, std::move(s), true));
    }

    AdamConfig adam_cfg;
    adam_cfg.lr = 0.05;
    AdamState adam;
    const int max_iters = 4000;

    for (int iter = 0; iter < max_iters; ++iter) {
      std::vector<Tensor> p, logp;
      for (auto& s : scores) {
        Tensor pi =
            add_const(scale(softmax_rows(s), 1.0 - C * kMarginFloor), kMarginFloor);
        p.push_back(pi);
        logp.push_back(log(pi));
      }
      Tensor loss = Tensor::scalar(0.0);
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) {
          if (i == j) continue;
          Tensor kl = sum(mul(p[i], sub(logp[i], logp[j])));
          loss = add(loss, square(add_const(kl, -spec.target_kl)));
        }
      for (auto& s : scores) s.zero_grad();
      backward(loss);
      adam_step(scores, adam_cfg, adam);

      if (iter % 50 == 49 || iter + 1 == max_iters) {
        auto dists = extract_distributions(scores, C);
        const double res = max_residual(kl_matrix_of(dists), spec.target_kl);
        best = std::min(best, res);
        if (res <= 0.6 * kResidualTol) {
          out.distributions = std::move(dists);
          out.kl_matrix = kl_matrix_of(out.distributions);
          return out;
        }
      }
    }
  }
  throw ConfigError("solve_marginals: did not converge; best residual " +
                    std::to_string(best) + " vs tolerance " +
                    std::to_string(kResidualTol));
}

std::vector<std::vector<double>> empirical_marginals(const scm::Dataset& ds,
                                                     int num_classes) {
  const int K = ds.config.num_domains;
  std::vector<std::vector<double>> counts(K, std::vector<double>(num_classes, 0.0));
  std::vector<double> totals(K, 0.0);
  for (const auto& s : ds.samples) {
    if (!s.y) continue;
    const int c = static_cast<int>(*s.y);
    if (c < 0 || c >= num_classes)
      throw ConfigError("empirical_marginals: label " + std::to_string(c) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    counts[s.domain_id][c] += 1.0;
    totals[s.domain_id] += 1.0;
  }
  for (int k = 0; k < K; ++k) {
    if (totals[k] == 0.0) continue;
    for (double& v : counts[k]) v /= totals[k];
  }
  return counts;
}

scm::Dataset subsample(const scm::Dataset& ds, const MarginalSet& marginals,
                       std::uint64_t seed) {
  const int K = static_cast<int>(marginals.distributions.size());
  const int C = static_cast<int>(marginals.distributions[0].size());

  // Per-domain, per-class index pools.
  std::vector<std::vector<std::vector<int>>> pools(
      K, std::vector<std::vector<int>>(C));
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (!s.y) continue;
    if (s.domain_id < 0 || s.domain_id >= K) continue;
    const int c = static_cast<int>(*s.y);
    if (c < 0 || c >= C)
      throw ConfigError("subsample: label " + std::to_string(c) + " outside [0, " +
                        std::to_string(C) + ")");
    pools[s.domain_id][c].push_back(static_cast<int>(i));
  }

  std::vector<int> keep;
  for (int u = 0; u < K; ++u) {
    const auto& p = marginals.distributions[u];
    for (int c = 0; c < C; ++c)
      if (p[c] > 0.01 && pools[u][c].empty())
        throw ConfigError("subsample: domain " + std::to_string(u) + " has no samples of "
                          "required class " + std::to_string(c));

    // Largest N with floor(N p_k) <= available for every class.
    long n_u = std::numeric_limits<long>::max();
    for (int c = 0; c < C; ++c) {
      if (p[c] <= 0.0) continue;
      const long avail = static_cast<long>(pools[u][c].size());
      long n = static_cast<long>(std::floor((avail + 1) / p[c]));
      while (n > 0 && static_cast<long>(std::floor(n * p[c])) > avail) --n;
      n_u = std::min(n_u, n);
    }
    if (n_u == std::numeric_limits<long>::max()) n_u = 0;

    Rng rng(derive_seed(seed, "subsample", static_cast<std::uint64_t>(u)));
    for (int c = 0; c < C; ++c) {
      const long want = static_cast<long>(std::floor(n_u * p[c]));
      auto& pool = pools[u][c];
      // Partial Fisher-Yates keeps the draw uniform without replacement.
      for (long i = 0; i < want; ++i) {
        const std::size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
        keep.push_back(pool[i]);
      }
    }
  }
  std::sort(keep.begin(), keep.end());

  scm::Dataset out;
  out.config = ds.config;
  for (int i : keep) {
    out.samples.push_back(ds.samples[i]);
    if (!ds.latents.empty()) out.latents.push_back(ds.latents[i]);
    out.eval_labels.push_back(ds.eval_labels[i]);
  }
  return out;
}

void export_marginals_json(const MarginalSet& m, const std::string& path) {
  nlohmann::json doc{{"distributions", m.distributions}, {"kl_matrix", m.kl_matrix}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace lcs::resample
