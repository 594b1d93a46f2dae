#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcs/errors.hpp"

namespace lcs::scm {

// Per-domain Gaussian parameters of the latent exogenous noise.
// Natural parameters per dimension are (mu/var, -1/(2 var)).
struct DomainSpec {
  int domain_id = 0;
  std::vector<double> means;
  std::vector<double> variances;

  DomainSpec() = default;
  DomainSpec(int id, std::vector<double> mu, std::vector<double> var);

  int latent_dim() const { return static_cast<int>(means.size()); }
  // Flattened (eta_{i,1}, eta_{i,2}) pairs, dimension-major.
  std::vector<double> natural_params() const;
};

enum class Family { kPaperCubic, kPostNonlinear };

struct ScmConfig {
  int d_c = 1;
  int d_s = 1;
  int d_x = 2;
  int num_domains = 5;
  int target_domain = 4;
  int samples_per_domain = 1000;
  Family family = Family::kPaperCubic;
  double obs_noise_std = 0.0;
  double label_noise_std = 0.0;
  int mixing_depth = 2;
  std::uint64_t seed = 0;

  int latent_dim() const { return d_c + d_s; }
  void validate() const;

  // 5 domains x 1000 samples, d_c = d_s = 1, cubic SCM, no noise.
  static ScmConfig paper_replication(std::uint64_t seed);
};

struct LatentSample {
  std::vector<double> n_c, n_s, z_c, z_s;
  int domain_id = 0;
};

struct LabeledSample {
  std::vector<double> x;
  std::optional<double> y;  // absent on target-domain rows (training view)
  int domain_id = 0;
};

struct Dataset {
  ScmConfig config;
  std::vector<LabeledSample> samples;
  std::vector<LatentSample> latents;               // empty for ingested CSVs
  std::vector<std::optional<double>> eval_labels;  // ground truth for all rows

  std::size_t size() const { return samples.size(); }
};

// Strictly monotone elementwise map t -> a t + b tanh(c t + d), slope
// bounded below by 0.2 so the inverse is well defined.
struct MonotoneMap {
  std::vector<double> a, b, c, d;  // one entry per dimension

  std::vector<double> forward(const std::vector<double>& t) const;
  std::vector<double> inverse(const std::vector<double>& y) const;
};

// Smooth map from content to the style pre-image: W z + amp ⊙ tanh(V z).
struct SmoothMap {
  int in_dim = 0, out_dim = 0;
  std::vector<double> w;    // out_dim x in_dim
  std::vector<double> v;    // out_dim x in_dim
  std::vector<double> amp;  // out_dim

  std::vector<double> forward(const std::vector<double>& z) const;
};

// Leaky-relu MLP mixing z (latent_dim) into x (d_x). The first weight lifts
// to d_x when d_x > latent_dim; all later layers are square. Every weight
// matrix is drawn with condition number < 1e3.
struct MixingMlp {
  int in_dim = 0, out_dim = 0;
  std::vector<std::vector<double>> weights;  // row-major

  std::vector<double> forward(const std::vector<double>& z) const;
};

// Ground-truth generative process: components are explicit so the
// counterexample construction and the inverse oracles can reuse them.
struct Generator {
  ScmConfig config;
  std::vector<DomainSpec> specs;
  MonotoneMap g_c;   // post_nonlinear only
  MonotoneMap g_s2;  // post_nonlinear only
  SmoothMap g_s1;    // post_nonlinear only
  MixingMlp mixing;

  // (z_c, z_s) from noise, per Family.
  LatentSample latents_from_noise(const std::vector<double>& n_c,
                                  const std::vector<double>& n_s,
                                  int domain_id) const;
  std::vector<double> observe(const LatentSample& s) const;  // noiseless f(z)
  double label(const LatentSample& s) const;
};

// The alternative solution of the non-identifiability construction:
// z'_c = g_c(n_c), z'_s = n_s, observation map f ∘ f' with
// f'(z') = [z'_c, g_s2(g_s1(z'_c) + z'_s)].
struct AltGenerator {
  const Generator* base = nullptr;

  LatentSample latents_from_noise(const std::vector<double>& n_c,
                                  const std::vector<double>& n_s,
                                  int domain_id) const;
  std::vector<double> observe(const LatentSample& s) const;
};

std::vector<DomainSpec> sample_domain_specs(const ScmConfig& config);

// n x latent-dim noise matrix, i.i.d. Gaussian per dimension.
std::vector<std::vector<double>> sample_noise(const DomainSpec& spec, int n,
                                              std::uint64_t seed);

Generator build_generator(const ScmConfig& config);
Generator build_generator(const ScmConfig& config, std::vector<DomainSpec> specs);

Dataset generate(const ScmConfig& config);
Dataset generate(const Generator& gen);

AltGenerator build_counterexample(const Generator& gen);

struct VariabilityReport {
  int two_ell = 0;
  std::vector<double> matrix;  // two_ell x two_ell, row-major
  double condition = 0.0;
  bool singular = false;
};

// Assumption-(iii) matrix of natural-parameter differences across 2l+1
// domains; singular when sigma_min < 1e-10 * sigma_max.
VariabilityReport variability_matrix(const std::vector<DomainSpec>& specs);

// CSV round trip. Dataset rows: domain,label,x0,... (empty label for
// unlabeled); latents: domain,nc*,ns*,zc*,zs*. 17 significant digits.
void export_csv(const Dataset& ds, const std::string& samples_path,
                const std::string& latents_path = "");
Dataset import_csv(const std::string& samples_path);
std::vector<LatentSample> import_latents_csv(const std::string& latents_path);

}  // namespace lcs::scm
