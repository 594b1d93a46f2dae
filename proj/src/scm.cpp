#include "lcs/scm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "lcs/linalg.hpp"
#include "lcs/rng.hpp"

namespace lcs::scm {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double cubic_label(const std::vector<double>& z_c) {
  double s = 0.0;
  for (double v : z_c) s += v;
  const double m = s / static_cast<double>(z_c.size());
  return m * m * m;
}

std::vector<double> draw_weight(Rng& rng, int rows, int cols) {
  std::vector<double> w(static_cast<std::size_t>(rows) * cols);
  for (double& v : w) v = rng.normal();
  return w;
}

std::vector<double> draw_conditioned_weight(Rng& rng, int rows, int cols) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto w = draw_weight(rng, rows, cols);
    if (condition_number(w, rows, cols) < 1e3) return w;
  }
  throw std::runtime_error("failed to draw a well-conditioned mixing matrix in 100 attempts");
}

}  // namespace

DomainSpec::DomainSpec(int id, std::vector<double> mu, std::vector<double> var)
    : domain_id(id), means(std::move(mu)), variances(std::move(var)) {
  if (means.size() != variances.size())
    throw ConfigError("DomainSpec: means/variances length mismatch");
  for (double v : variances)
    if (v <= 0.0) throw ConfigError("DomainSpec: variances must be strictly positive");
}

std::vector<double> DomainSpec::natural_params() const {
  std::vector<double> eta;
  eta.reserve(2 * means.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    eta.push_back(means[i] / variances[i]);
    eta.push_back(-1.0 / (2.0 * variances[i]));
  }
  return eta;
}

void ScmConfig::validate() const {
  if (d_c < 1 || d_s < 1) throw ConfigError("ScmConfig: d_c and d_s must be >= 1");
  if (d_x < latent_dim())
    throw ConfigError("ScmConfig: d_x must be >= d_c + d_s");
  if (num_domains < 2) throw ConfigError("ScmConfig: need at least 2 domains");
  if (target_domain < 0 || target_domain >= num_domains)
    throw ConfigError("ScmConfig: target_domain out of range");
  if (samples_per_domain < 1)
    throw ConfigError("ScmConfig: samples_per_domain must be >= 1");
  if (obs_noise_std < 0.0 || label_noise_std < 0.0)
    throw ConfigError("ScmConfig: noise std must be non-negative");
  if (mixing_depth < 1) throw ConfigError("ScmConfig: mixing_depth must be >= 1");
}

ScmConfig ScmConfig::paper_replication(std::uint64_t seed) {
  ScmConfig c;
  c.d_c = 1;
  c.d_s = 1;
  c.d_x = 2;
  c.num_domains = 5;
  c.target_domain = 4;
  c.samples_per_domain = 1000;
  c.family = Family::kPaperCubic;
  c.obs_noise_std = 0.0;
  c.mixing_depth = 2;
  c.seed = seed;
  return c;
}

std::vector<double> MonotoneMap::forward(const std::vector<double>& t) const {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = a[i] * t[i] + b[i] * std::tanh(c[i] * t[i] + d[i]);
  return out;
}

std::vector<double> MonotoneMap::inverse(const std::vector<double>& y) const {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto f = [&](double t) { return a[i] * t + b[i] * std::tanh(c[i] * t + d[i]); };
    // Monotone with slope >= 0.2; bracket then bisect.
    double lo = (y[i] - std::abs(b[i])) / a[i] - 1.0;
    double hi = (y[i] + std::abs(b[i])) / a[i] + 1.0;
    while (f(lo) > y[i]) lo -= 1.0;
    while (f(hi) < y[i]) hi += 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (f(mid) < y[i])
        lo = mid;
      else
        hi = mid;
    }
    out[i] = 0.5 * (lo + hi);
  }
  return out;
}

std::vector<double> SmoothMap::forward(const std::vector<double>& z) const {
  std::vector<double> out(out_dim, 0.0);
  for (int j = 0; j < out_dim; ++j) {
    double lin = 0.0, pre = 0.0;
    for (int i = 0; i < in_dim; ++i) {
      lin += w[j * in_dim + i] * z[i];
      pre += v[j * in_dim + i] * z[i];
    }
    out[j] = lin + amp[j] * std::tanh(pre);
  }
  return out;
}

std::vector<double> MixingMlp::forward(const std::vector<double>& z) const {
  std::vector<double> h = z;
  for (std::size_t layer = 0; layer < weights.size(); ++layer) {
    const int in = layer == 0 ? in_dim : out_dim;
    std::vector<double> next(out_dim, 0.0);
    for (int r = 0; r < out_dim; ++r)
      for (int c = 0; c < in; ++c) next[r] += weights[layer][r * in + c] * h[c];
    if (layer + 1 < weights.size())
      for (double& v : next) v = v >= 0.0 ? v : 0.2 * v;
    h = std::move(next);
  }
  return h;
}

std::vector<DomainSpec> sample_domain_specs(const ScmConfig& config) {
  config.validate();
  const int l = config.latent_dim();
  std::vector<DomainSpec> specs;
  specs.reserve(config.num_domains);
  for (int u = 0; u < config.num_domains; ++u) {
    Rng rng(derive_seed(config.seed, "domain_spec", static_cast<std::uint64_t>(u)));
    std::vector<double> mu(l), var(l);
    for (int i = 0; i < l; ++i) mu[i] = rng.uniform(1.0, 2.0);
    for (int i = 0; i < l; ++i) var[i] = rng.uniform(0.3, 1.0);
    specs.emplace_back(u, std::move(mu), std::move(var));
  }
  return specs;
}

std::vector<std::vector<double>> sample_noise(const DomainSpec& spec, int n,
                                              std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_noise: n must be >= 1");
  Rng rng(seed);
  const int l = spec.latent_dim();
  std::vector<std::vector<double>> rows(n);
  for (int r = 0; r < n; ++r) {
    rows[r].resize(l);
    for (int i = 0; i < l; ++i)
      rows[r][i] = rng.normal(spec.means[i], std::sqrt(spec.variances[i]));
  }
  return rows;
}

namespace {

MonotoneMap draw_monotone(Rng& rng, int dim) {
  MonotoneMap m;
  m.a.resize(dim);
  m.b.resize(dim);
  m.c.resize(dim);
  m.d.resize(dim);
  for (int i = 0; i < dim; ++i) {
    m.a[i] = rng.uniform(1.0, 2.0);
    m.b[i] = rng.uniform(-0.5, 0.5);
    m.c[i] = rng.uniform(0.5, 1.5);
    m.d[i] = rng.uniform(-1.0, 1.0);
    // slope >= a - |b c| >= 1 - 0.75 = 0.25
  }
  return m;
}

}  // namespace

Generator build_generator(const ScmConfig& config) {
  return build_generator(config, sample_domain_specs(config));
}

Generator build_generator(const ScmConfig& config, std::vector<DomainSpec> specs) {
  config.validate();
  Generator gen;
  gen.config = config;
  gen.specs = std::move(specs);

  const int l = config.latent_dim();
  Rng mix_rng(derive_seed(config.seed, "mixing"));
  gen.mixing.in_dim = l;
  gen.mixing.out_dim = config.d_x;
  gen.mixing.weights.push_back(draw_conditioned_weight(mix_rng, config.d_x, l));
  for (int k = 1; k < config.mixing_depth; ++k)
    gen.mixing.weights.push_back(draw_conditioned_weight(mix_rng, config.d_x, config.d_x));

  if (config.family == Family::kPostNonlinear) {
    Rng gc_rng(derive_seed(config.seed, "g_c"));
    Rng gs2_rng(derive_seed(config.seed, "g_s2"));
    Rng gs1_rng(derive_seed(config.seed, "g_s1"));
    gen.g_c = draw_monotone(gc_rng, config.d_c);
    gen.g_s2 = draw_monotone(gs2_rng, config.d_s);
    gen.g_s1.in_dim = config.d_c;
    gen.g_s1.out_dim = config.d_s;
    gen.g_s1.w = draw_weight(gs1_rng, config.d_s, config.d_c);
    gen.g_s1.v = draw_weight(gs1_rng, config.d_s, config.d_c);
    gen.g_s1.amp.resize(config.d_s);
    for (double& a : gen.g_s1.amp) a = gs1_rng.uniform(0.5, 1.5);
  }
  return gen;
}

LatentSample Generator::latents_from_noise(const std::vector<double>& n_c,
                                           const std::vector<double>& n_s,
                                           int domain_id) const {
  LatentSample s;
  s.domain_id = domain_id;
  s.n_c = n_c;
  s.n_s = n_s;
  if (config.family == Family::kPaperCubic) {
    s.z_c = n_c;
    s.z_s.resize(n_s.size());
    const double zc3 = cubic_label(s.z_c);
    for (std::size_t i = 0; i < n_s.size(); ++i) s.z_s[i] = zc3 + n_s[i];
  } else {
    s.z_c = g_c.forward(n_c);
    auto pre = g_s1.forward(s.z_c);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += n_s[i];
    s.z_s = g_s2.forward(pre);
  }
  return s;
}

std::vector<double> Generator::observe(const LatentSample& s) const {
  std::vector<double> z;
  z.reserve(s.z_c.size() + s.z_s.size());
  z.insert(z.end(), s.z_c.begin(), s.z_c.end());
  z.insert(z.end(), s.z_s.begin(), s.z_s.end());
  return mixing.forward(z);
}

double Generator::label(const LatentSample& s) const { return cubic_label(s.z_c); }

LatentSample AltGenerator::latents_from_noise(const std::vector<double>& n_c,
                                              const std::vector<double>& n_s,
                                              int domain_id) const {
  LatentSample s;
  s.domain_id = domain_id;
  s.n_c = n_c;
  s.n_s = n_s;
  s.z_c = base->g_c.forward(n_c);
  s.z_s = n_s;  // the edge z_c -> z_s is removed
  return s;
}

std::vector<double> AltGenerator::observe(const LatentSample& s) const {
  // f'(z') = [z'_c, g_s2(g_s1(z'_c) + z'_s)], then the base mixing f.
  auto pre = base->g_s1.forward(s.z_c);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += s.z_s[i];
  LatentSample composed;
  composed.z_c = s.z_c;
  composed.z_s = base->g_s2.forward(pre);
  return base->observe(composed);
}

AltGenerator build_counterexample(const Generator& gen) {
  if (gen.config.family != Family::kPostNonlinear)
    throw ConfigError(
        "build_counterexample: requires family=post_nonlinear (paper_cubic has no "
        "explicit g_c/g_s1/g_s2 components)");
  AltGenerator alt;
  alt.base = &gen;
  return alt;
}

Dataset generate(const ScmConfig& config) { return generate(build_generator(config)); }

Dataset generate(const Generator& gen) {
  const ScmConfig& config = gen.config;
  Dataset ds;
  ds.config = config;
  ds.samples.reserve(static_cast<std::size_t>(config.num_domains) * config.samples_per_domain);

  for (int u = 0; u < config.num_domains; ++u) {
    const auto noise = sample_noise(
        gen.specs[u], config.samples_per_domain,
        derive_seed(config.seed, "noise", static_cast<std::uint64_t>(u)));
    Rng obs_rng(derive_seed(config.seed, "obs_noise", static_cast<std::uint64_t>(u)));
    Rng lbl_rng(derive_seed(config.seed, "label_noise", static_cast<std::uint64_t>(u)));
    for (const auto& row : noise) {
      std::vector<double> n_c(row.begin(), row.begin() + config.d_c);
      std::vector<double> n_s(row.begin() + config.d_c, row.end());
      LatentSample lat = gen.latents_from_noise(n_c, n_s, u);
      LabeledSample obs;
      obs.domain_id = u;
      obs.x = gen.observe(lat);
      if (config.obs_noise_std > 0.0)
        for (double& v : obs.x) v += obs_rng.normal(0.0, config.obs_noise_std);
      double y = gen.label(lat);
      if (config.label_noise_std > 0.0) y += lbl_rng.normal(0.0, config.label_noise_std);
      ds.eval_labels.push_back(y);
      if (u != config.target_domain) obs.y = y;
      ds.samples.push_back(std::move(obs));
      ds.latents.push_back(std::move(lat));
    }
  }
  return ds;
}

VariabilityReport variability_matrix(const std::vector<DomainSpec>& specs) {
  if (specs.empty()) throw ConfigError("variability_matrix: no specs");
  const int l = specs[0].latent_dim();
  const int two_ell = 2 * l;
  if (static_cast<int>(specs.size()) != two_ell + 1)
    throw ConfigError("variability_matrix: need exactly 2l+1 = " +
                      std::to_string(two_ell + 1) + " specs, got " +
                      std::to_string(specs.size()));

  const auto eta0 = specs[0].natural_params();
  VariabilityReport rep;
  rep.two_ell = two_ell;
  rep.matrix.assign(static_cast<std::size_t>(two_ell) * two_ell, 0.0);
  for (int k = 1; k <= two_ell; ++k) {
    const auto etak = specs[k].natural_params();
    for (int i = 0; i < two_ell; ++i)
      rep.matrix[i * two_ell + (k - 1)] = etak[i] - eta0[i];
  }

  auto sv = singular_values(rep.matrix, two_ell, two_ell);
  const double smax = sv.front();
  const double smin = sv.back();
  if (smax <= 0.0 || smin < 1e-10 * smax) {
    rep.singular = true;
    rep.condition = std::numeric_limits<double>::infinity();
  } else {
    rep.condition = smax / smin;
  }
  return rep;
}

void export_csv(const Dataset& ds, const std::string& samples_path,
                const std::string& latents_path) {
  std::ofstream out(samples_path);
  if (!out) throw IoError("cannot open for writing: " + samples_path);
  const int d_x = ds.samples.empty() ? ds.config.d_x
                                     : static_cast<int>(ds.samples[0].x.size());
  out << "domain,label";
  for (int i = 0; i < d_x; ++i) out << ",x" << i;
  out << "\n";
  for (const auto& s : ds.samples) {
    out << s.domain_id << ",";
    if (s.y) out << fmt17(*s.y);
    for (double v : s.x) out << "," << fmt17(v);
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + samples_path);

  if (latents_path.empty() || ds.latents.empty()) return;
  std::ofstream lout(latents_path);
  if (!lout) throw IoError("cannot open for writing: " + latents_path);
  const auto& first = ds.latents[0];
  lout << "domain";
  for (std::size_t i = 0; i < first.n_c.size(); ++i) lout << ",nc" << i;
  for (std::size_t i = 0; i < first.n_s.size(); ++i) lout << ",ns" << i;
  for (std::size_t i = 0; i < first.z_c.size(); ++i) lout << ",zc" << i;
  for (std::size_t i = 0; i < first.z_s.size(); ++i) lout << ",zs" << i;
  lout << "\n";
  for (const auto& s : ds.latents) {
    lout << s.domain_id;
    for (double v : s.n_c) lout << "," << fmt17(v);
    for (double v : s.n_s) lout << "," << fmt17(v);
    for (double v : s.z_c) lout << "," << fmt17(v);
    for (double v : s.z_s) lout << "," << fmt17(v);
    lout << "\n";
  }
  if (!lout) throw IoError("write failed: " + latents_path);
}

Dataset import_csv(const std::string& samples_path) {
  std::ifstream in(samples_path);
  if (!in) throw IoError("cannot open for reading: " + samples_path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + samples_path);
  std::stringstream hs(line);
  std::string field;
  std::vector<std::string> header;
  while (std::getline(hs, field, ',')) header.push_back(field);
  if (header.size() < 3 || header[0] != "domain" || header[1] != "label")
    throw IoError("bad CSV header in " + samples_path);
  const int d_x = static_cast<int>(header.size()) - 2;

  Dataset ds;
  int max_domain = 0;
  int unlabeled_domain = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<std::string> cells;
    while (std::getline(ls, field, ',')) cells.push_back(field);
    if (line.back() == ',') cells.push_back("");
    if (static_cast<int>(cells.size()) != d_x + 2)
      throw IoError(samples_path + ":" + std::to_string(line_no) +
                    ": expected " + std::to_string(d_x + 2) + " fields");
    LabeledSample s;
    s.domain_id = std::stoi(cells[0]);
    max_domain = std::max(max_domain, s.domain_id);
    if (!cells[1].empty()) {
      s.y = std::stod(cells[1]);
    } else {
      unlabeled_domain = s.domain_id;
    }
    s.x.resize(d_x);
    for (int i = 0; i < d_x; ++i) s.x[i] = std::stod(cells[2 + i]);
    ds.eval_labels.push_back(s.y);
    ds.samples.push_back(std::move(s));
  }
  ds.config.d_x = d_x;
  ds.config.num_domains = max_domain + 1;
  ds.config.target_domain = unlabeled_domain >= 0 ? unlabeled_domain : max_domain;
  ds.config.samples_per_domain =
      ds.samples.empty() ? 1
                         : static_cast<int>(ds.samples.size()) / (max_domain + 1);
  return ds;
}

std::vector<LatentSample> import_latents_csv(const std::string& latents_path) {
  std::ifstream in(latents_path);
  if (!in) throw IoError("cannot open for reading: " + latents_path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + latents_path);
  std::stringstream hs(line);
  std::string field;
  std::vector<std::string> header;
  while (std::getline(hs, field, ',')) header.push_back(field);
  if (header.empty() || header[0] != "domain")
    throw IoError("bad latents CSV header in " + latents_path);
  auto count_prefix = [&](const std::string& prefix) {
    int n = 0;
    for (const auto& h : header)
      if (h.rfind(prefix, 0) == 0) ++n;
    return n;
  };
  const int d_c = count_prefix("nc");
  const int d_s = count_prefix("ns");
  if (d_c == 0 || count_prefix("zc") != d_c || count_prefix("zs") != d_s)
    throw IoError("latents CSV columns must be domain,nc*,ns*,zc*,zs*");

  std::vector<LatentSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<std::string> cells;
    while (std::getline(ls, field, ',')) cells.push_back(field);
    if (cells.size() != header.size())
      throw IoError(latents_path + ": row has wrong field count");
    LatentSample s;
    s.domain_id = std::stoi(cells[0]);
    int k = 1;
    auto take = [&](int n) {
      std::vector<double> v(n);
      for (int i = 0; i < n; ++i) v[i] = std::stod(cells[k++]);
      return v;
    };
    s.n_c = take(d_c);
    s.n_s = take(d_s);
    s.z_c = take(d_c);
    s.z_s = take(d_s);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lcs::scm
