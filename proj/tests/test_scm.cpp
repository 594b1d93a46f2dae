#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <vector>

#include "lcs/metrics.hpp"
#include "lcs/rng.hpp"
#include "lcs/scm.hpp"

using namespace lcs;
using namespace lcs::scm;

namespace {

ScmConfig post_nonlinear_config(std::uint64_t seed) {
  ScmConfig cfg;
  cfg.family = Family::kPostNonlinear;
  cfg.d_c = 1;
  cfg.d_s = 1;
  cfg.d_x = 2;
  cfg.num_domains = 5;
  cfg.target_domain = 4;
  cfg.samples_per_domain = 200;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("domain specs stay inside the configured ranges") {
  auto cfg = ScmConfig::paper_replication(7);
  auto specs = sample_domain_specs(cfg);
  REQUIRE(specs.size() == 5);
  for (const auto& s : specs) {
    for (double m : s.means) {
      CHECK(m >= 1.0);
      CHECK(m <= 2.0);
    }
    for (double v : s.variances) {
      CHECK(v >= 0.3);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("domain specs are deterministic per seed") {
  auto cfg = ScmConfig::paper_replication(11);
  auto a = sample_domain_specs(cfg);
  auto b = sample_domain_specs(cfg);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].means == b[i].means);
    CHECK(a[i].variances == b[i].variances);
  }
}

TEST_CASE("law of large numbers: spec means concentrate at the range center") {
  // 1e5 draws per entry; bound is 3 sigma of the sample mean of U[1,2].
  const int n = 100000;
  ScmConfig cfg = ScmConfig::paper_replication(0);
  cfg.num_domains = 5;
  double acc = 0.0;
  int count = 0;
  for (int rep = 0; rep < n / 10; ++rep) {
    cfg.seed = static_cast<std::uint64_t>(rep);
    for (const auto& s : sample_domain_specs(cfg)) {
      acc += s.means[0] + s.means[1];
      count += 2;
    }
  }
  const double bound = 3.0 * (1.0 / std::sqrt(12.0)) / std::sqrt(static_cast<double>(count));
  CHECK(std::abs(acc / count - 1.5) < bound);
}

TEST_CASE("sample_noise matches the spec moments") {
  DomainSpec spec(0, {1.5}, {0.5});
  auto rows = sample_noise(spec, 100000, 99);
  double mean = 0.0;
  for (const auto& r : rows) mean += r[0];
  mean /= rows.size();
  double var = 0.0;
  for (const auto& r : rows) var += (r[0] - mean) * (r[0] - mean);
  var /= rows.size();
  CHECK(std::abs(mean - 1.5) < 0.02);
  CHECK(std::abs(var - 0.5) < 0.02);
}

TEST_CASE("sample_noise is bitwise deterministic") {
  DomainSpec spec(1, {1.2, 1.8}, {0.4, 0.9});
  CHECK(sample_noise(spec, 500, 3) == sample_noise(spec, 500, 3));
}

TEST_CASE("zero variance is rejected at DomainSpec construction") {
  CHECK_THROWS_AS(DomainSpec(0, {1.0}, {0.0}), ConfigError);
  CHECK_THROWS_AS(DomainSpec(0, {1.0}, {-0.1}), ConfigError);
}

TEST_CASE("paper_cubic identities: n_c = 1, n_s = 0") {
  auto cfg = ScmConfig::paper_replication(5);
  auto gen = build_generator(cfg);
  auto lat = gen.latents_from_noise({1.0}, {0.0}, 0);
  CHECK(lat.z_c[0] == 1.0);
  CHECK(lat.z_s[0] == 1.0);  // z_c^3 + n_s = 1
  CHECK(gen.label(lat) == 1.0);
}

TEST_CASE("paper-replication preset: 5000 rows, last segment unlabeled") {
  auto ds = generate(ScmConfig::paper_replication(13));
  REQUIRE(ds.samples.size() == 5000);
  REQUIRE(ds.latents.size() == 5000);
  REQUIRE(ds.eval_labels.size() == 5000);
  int per_domain[5] = {0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    per_domain[s.domain_id]++;
    if (s.domain_id == 4) {
      CHECK_FALSE(s.y.has_value());
      CHECK(ds.eval_labels[i].has_value());  // ground truth retained
    } else {
      REQUIRE(s.y.has_value());
      CHECK(*s.y == *ds.eval_labels[i]);
    }
  }
  for (int u = 0; u < 5; ++u) CHECK(per_domain[u] == 1000);
}

TEST_CASE("generate is a pure function of config") {
  auto cfg = post_nonlinear_config(21);
  auto a = generate(cfg);
  auto b = generate(cfg);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].x == b.samples[i].x);
    CHECK(a.samples[i].y == b.samples[i].y);
    CHECK(a.latents[i].n_c == b.latents[i].n_c);
  }
}

TEST_CASE("post_nonlinear: noise recovered through the inverse maps") {
  auto cfg = post_nonlinear_config(31);
  auto gen = build_generator(cfg);
  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> n_c = {rng.normal()};
    const std::vector<double> n_s = {rng.normal()};
    auto lat = gen.latents_from_noise(n_c, n_s, 0);
    // n_c = g_c^{-1}(z_c); n_s = g_s2^{-1}(z_s) - g_s1(z_c).
    const double rc = gen.g_c.inverse(lat.z_c)[0];
    const double rs = gen.g_s2.inverse(lat.z_s)[0] - gen.g_s1.forward(lat.z_c)[0];
    worst = std::max(worst, std::abs(rc - n_c[0]));
    worst = std::max(worst, std::abs(rs - n_s[0]));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("counterexample: z'_c equals z_c, z'_s differs, x matches bitwise") {
  auto cfg = post_nonlinear_config(41);
  cfg.samples_per_domain = 500;
  auto gen = build_generator(cfg);
  auto alt = build_counterexample(gen);
  double max_x_diff = 0.0;
  bool zs_differs = false;
  std::vector<double> zc, zs, azc, azs;
  for (int u = 0; u < cfg.num_domains; ++u) {
    auto noise = sample_noise(gen.specs[u], cfg.samples_per_domain,
                              derive_seed(cfg.seed, "noise", static_cast<std::uint64_t>(u)));
    for (const auto& row : noise) {
      const std::vector<double> n_c = {row[0]};
      const std::vector<double> n_s = {row[1]};
      auto a = gen.latents_from_noise(n_c, n_s, u);
      auto b = alt.latents_from_noise(n_c, n_s, u);
      CHECK(a.z_c == b.z_c);
      if (a.z_s != b.z_s) zs_differs = true;
      auto xa = gen.observe(a);
      auto xb = alt.observe(b);
      for (std::size_t i = 0; i < xa.size(); ++i)
        max_x_diff = std::max(max_x_diff, std::abs(xa[i] - xb[i]));
      zc.push_back(a.z_c[0]);
      zs.push_back(a.z_s[0]);
      azc.push_back(b.z_c[0]);
      azs.push_back(b.z_s[0]);
    }
  }
  CHECK(zs_differs);
  CHECK(max_x_diff <= 1e-9);
  // Original latents are strongly dependent; alternative style is the raw
  // independent noise.
  CHECK(std::abs(metrics::pearson(zs, zc)) > 0.5);
  CHECK(std::abs(metrics::pearson(azs, azc)) < 0.1);
}

TEST_CASE("counterexample requires the post_nonlinear family") {
  auto gen = build_generator(ScmConfig::paper_replication(3));
  CHECK_THROWS_AS(build_counterexample(gen), ConfigError);
}

TEST_CASE("natural parameters of known specs") {
  CHECK(DomainSpec(0, {0.0}, {1.0}).natural_params() == std::vector<double>{0.0, -0.5});
  CHECK(DomainSpec(0, {2.0}, {0.5}).natural_params() == std::vector<double>{4.0, -1.0});
}

TEST_CASE("variability matrix: identical specs are singular, sampled ones are not") {
  std::vector<DomainSpec> identical;
  for (int i = 0; i < 5; ++i) identical.push_back(DomainSpec(i, {1.5, 1.5}, {0.5, 0.5}));
  auto rep = variability_matrix(identical);
  CHECK(rep.singular);
  for (double v : rep.matrix) CHECK(v == 0.0);

  auto cfg = ScmConfig::paper_replication(19);
  auto specs = sample_domain_specs(cfg);
  auto rep2 = variability_matrix(specs);
  CHECK_FALSE(rep2.singular);
  CHECK(std::isfinite(rep2.condition));
  CHECK(rep2.two_ell == 4);
}

TEST_CASE("variability matrix rejects a wrong spec count") {
  std::vector<DomainSpec> four;
  for (int i = 0; i < 4; ++i) four.push_back(DomainSpec(i, {1.0, 1.0}, {0.5, 0.5}));
  CHECK_THROWS_AS(variability_matrix(four), ConfigError);
}

TEST_CASE("post_nonlinear noise-to-x map is injective on sampled data") {
  auto cfg = post_nonlinear_config(53);
  cfg.samples_per_domain = 200;
  auto ds = generate(cfg);
  Rng rng(9);
  for (int pair = 0; pair < 1000; ++pair) {
    const std::size_t i = rng.below(ds.samples.size());
    const std::size_t j = rng.below(ds.samples.size());
    double noise_dist = 0.0, x_dist = 0.0;
    for (int k = 0; k < cfg.d_c; ++k)
      noise_dist = std::max(noise_dist,
                            std::abs(ds.latents[i].n_c[k] - ds.latents[j].n_c[k]));
    for (int k = 0; k < cfg.d_s; ++k)
      noise_dist = std::max(noise_dist,
                            std::abs(ds.latents[i].n_s[k] - ds.latents[j].n_s[k]));
    for (int k = 0; k < cfg.d_x; ++k)
      x_dist = std::max(x_dist, std::abs(ds.samples[i].x[k] - ds.samples[j].x[k]));
    if (noise_dist > 1e-3) CHECK(x_dist > 1e-9);
  }
}

TEST_CASE("CSV round trip preserves samples and latents") {
  namespace fs = std::filesystem;
  auto cfg = post_nonlinear_config(61);
  cfg.samples_per_domain = 50;
  auto ds = generate(cfg);
  const auto dir = fs::temp_directory_path() / "lcs_scm_csv_test";
  fs::create_directories(dir);
  const std::string data = (dir / "d.csv").string();
  const std::string lats = (dir / "l.csv").string();
  export_csv(ds, data, lats);

  auto back = import_csv(data);
  auto lback = import_latents_csv(lats);
  REQUIRE(back.samples.size() == ds.samples.size());
  REQUIRE(lback.size() == ds.latents.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].domain_id == ds.samples[i].domain_id);
    CHECK(back.samples[i].y == ds.samples[i].y);
    for (int k = 0; k < cfg.d_x; ++k)
      CHECK(back.samples[i].x[k] == doctest::Approx(ds.samples[i].x[k]).epsilon(1e-15));
    CHECK(lback[i].n_c == ds.latents[i].n_c);
    CHECK(lback[i].z_s == ds.latents[i].z_s);
  }
  fs::remove_all(dir);
}

TEST_CASE("import_csv rejects malformed input") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "lcs_scm_bad_csv";
  fs::create_directories(dir);
  const auto p = dir / "bad.csv";
  {
    std::FILE* f = std::fopen(p.c_str(), "w");
    std::fputs("not,a,valid,header\n0,1,2,3\n", f);
    std::fclose(f);
  }
  CHECK_THROWS(import_csv(p.string()));
  CHECK_THROWS_AS(import_csv((dir / "missing.csv").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("monotone maps have slope bounded away from zero and exact inverses") {
  auto cfg = post_nonlinear_config(71);
  auto gen = build_generator(cfg);
  Rng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const double t = 4.0 * rng.normal();
    const double h = 1e-6;
    const double slope =
        (gen.g_c.forward({t + h})[0] - gen.g_c.forward({t - h})[0]) / (2.0 * h);
    CHECK(slope >= 0.2);
    const double rt = gen.g_c.inverse(gen.g_c.forward({t}))[0];
    CHECK(std::abs(rt - t) < 1e-8);
  }
}
