// Command-line harness: generate / train / evaluate / resample /
// counterexample / gradcheck, all driven by a JSON experiment config and a
// single seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lcs/adam.hpp"
#include "lcs/metrics.hpp"
#include "lcs/resampler.hpp"
#include "lcs/rng.hpp"
#include "lcs/scm.hpp"
#include "lcs/trainer.hpp"
#include "lcs/vae.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

// ---------------------------------------------------------------------------
// Experiment config

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::optional<lcs::scm::ScmConfig> scm;
  lcs::vae::ModelConfig model;
  lcs::train::TrainConfig train;
  lcs::resample::ResampleSpec resample;
  bool has_model = false, has_train = false, has_resample = false;
  std::optional<std::string> data_csv;
  std::optional<std::string> latents_csv;
  std::optional<int> discretize_classes;
};

void reject_unknown(const json& j, const std::string& section,
                    std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok)
      throw lcs::ConfigError("unknown key '" + section + it.key() + "' in config");
  }
}

template <typename T>
T require(const json& j, const std::string& section, const char* key) {
  if (!j.contains(key))
    throw lcs::ConfigError("missing required field '" + section + key + "'");
  return j.at(key).get<T>();
}

lcs::scm::ScmConfig parse_scm(const json& j, std::uint64_t seed) {
  reject_unknown(j, "scm.",
                 {"d_c", "d_s", "d_x", "num_domains", "target_domain",
                  "samples_per_domain", "family", "obs_noise_std", "label_noise_std",
                  "mixing_depth"});
  lcs::scm::ScmConfig c;
  c.d_c = require<int>(j, "scm.", "d_c");
  c.d_s = require<int>(j, "scm.", "d_s");
  c.d_x = require<int>(j, "scm.", "d_x");
  c.num_domains = require<int>(j, "scm.", "num_domains");
  c.target_domain = require<int>(j, "scm.", "target_domain");
  c.samples_per_domain = require<int>(j, "scm.", "samples_per_domain");
  const std::string family = require<std::string>(j, "scm.", "family");
  if (family == "paper_cubic")
    c.family = lcs::scm::Family::kPaperCubic;
  else if (family == "post_nonlinear")
    c.family = lcs::scm::Family::kPostNonlinear;
  else
    throw lcs::ConfigError("scm.family must be paper_cubic or post_nonlinear");
  c.obs_noise_std = j.value("obs_noise_std", 0.0);
  c.label_noise_std = j.value("label_noise_std", 0.0);
  c.mixing_depth = j.value("mixing_depth", 2);
  c.seed = seed;
  c.validate();
  return c;
}

lcs::vae::ModelConfig parse_model(const json& j) {
  reject_unknown(j, "model.",
                 {"task", "num_classes", "preset", "hidden", "beta", "lambda", "gamma",
                  "entropy_literal_sign"});
  lcs::vae::ModelConfig m;
  const std::string task = j.value("task", "regression");
  if (task == "classification")
    m.task = lcs::vae::Task::kClassification;
  else if (task == "regression")
    m.task = lcs::vae::Task::kRegression;
  else
    throw lcs::ConfigError("model.task must be classification or regression");
  m.num_classes = j.value("num_classes", 1);
  const std::string preset = j.value("preset", "synthetic");
  if (preset == "synthetic")
    m.preset = lcs::vae::Preset::kSynthetic;
  else if (preset == "feature")
    m.preset = lcs::vae::Preset::kFeature;
  else
    throw lcs::ConfigError("model.preset must be synthetic or feature");
  m.hidden = j.value("hidden", 30);
  m.beta = j.value("beta", 1.0);
  m.lambda = j.value("lambda", 1e-2);
  m.gamma = j.value("gamma", 0.0);
  m.entropy_literal_sign = j.value("entropy_literal_sign", false);
  return m;
}

lcs::train::TrainConfig parse_train(const json& j, std::uint64_t seed) {
  reject_unknown(j, "train.", {"epochs", "batch_size", "learning_rate", "eval_every"});
  lcs::train::TrainConfig t;
  t.epochs = j.value("epochs", 200);
  t.batch_size = j.value("batch_size", 256);
  t.learning_rate = j.value("learning_rate", 1e-3);
  t.eval_every = j.value("eval_every", 20);
  t.seed = seed;
  t.validate();
  return t;
}

ExperimentConfig load_config(const std::string& path,
                             std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw lcs::IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw lcs::ConfigError("malformed JSON in " + path + ": " + e.what());
  }
  reject_unknown(j, "",
                 {"seed", "scm", "model", "train", "resample", "data_csv", "latents_csv",
                  "discretize_classes"});
  ExperimentConfig cfg;
  cfg.seed = seed_override.value_or(j.value("seed", std::uint64_t{0}));
  if (j.contains("scm")) cfg.scm = parse_scm(j.at("scm"), cfg.seed);
  if (j.contains("model")) {
    cfg.model = parse_model(j.at("model"));
    cfg.has_model = true;
  }
  if (j.contains("train")) {
    cfg.train = parse_train(j.at("train"), cfg.seed);
    cfg.has_train = true;
  }
  cfg.train.seed = cfg.seed;
  if (j.contains("resample")) {
    const json& r = j.at("resample");
    reject_unknown(r, "resample.", {"num_domains", "num_classes", "target_kl"});
    cfg.resample.num_domains = require<int>(r, "resample.", "num_domains");
    cfg.resample.num_classes = require<int>(r, "resample.", "num_classes");
    cfg.resample.target_kl = require<double>(r, "resample.", "target_kl");
    cfg.resample.seed = cfg.seed;
    cfg.has_resample = true;
  }
  if (j.contains("data_csv")) cfg.data_csv = j.at("data_csv").get<std::string>();
  if (j.contains("latents_csv")) cfg.latents_csv = j.at("latents_csv").get<std::string>();
  if (j.contains("discretize_classes"))
    cfg.discretize_classes = j.at("discretize_classes").get<int>();
  return cfg;
}

// Model dims follow the dataset unless a model section pinned them.
lcs::vae::ModelConfig model_for_dataset(const ExperimentConfig& cfg,
                                        const lcs::scm::Dataset& ds) {
  lcs::vae::ModelConfig m = cfg.model;
  m.d_x = ds.config.d_x;
  m.num_domains = ds.config.num_domains;
  if (cfg.scm) {
    m.d_c = cfg.scm->d_c;
    m.d_s = cfg.scm->d_s;
  }
  m.validate();
  return m;
}

lcs::scm::Dataset load_or_generate(const ExperimentConfig& cfg) {
  if (cfg.data_csv) {
    auto ds = lcs::scm::import_csv(*cfg.data_csv);
    if (cfg.latents_csv) ds.latents = lcs::scm::import_latents_csv(*cfg.latents_csv);
    return ds;
  }
  if (!cfg.scm)
    throw lcs::ConfigError("missing required field 'scm' (or 'data_csv') in config");
  return lcs::scm::generate(*cfg.scm);
}

// Quantile-bin continuous labels into C classes (for resampling synthetic
// regression data).
void discretize_labels(lcs::scm::Dataset& ds, int classes) {
  std::vector<double> labeled;
  for (const auto& s : ds.samples)
    if (s.y) labeled.push_back(*s.y);
  if (labeled.empty()) throw lcs::ConfigError("discretize: no labeled rows");
  std::sort(labeled.begin(), labeled.end());
  std::vector<double> cuts;
  for (int c = 1; c < classes; ++c)
    cuts.push_back(labeled[labeled.size() * c / classes]);
  auto bin = [&](double y) {
    return static_cast<double>(std::upper_bound(cuts.begin(), cuts.end(), y) -
                               cuts.begin());
  };
  for (auto& s : ds.samples)
    if (s.y) s.y = bin(*s.y);
  for (auto& y : ds.eval_labels)
    if (y) y = bin(*y);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (!cfg.scm) throw lcs::ConfigError("missing required field 'scm' in config");
  auto ds = lcs::scm::generate(*cfg.scm);
  fs::create_directories(out_dir);
  lcs::scm::export_csv(ds, out_dir + "/dataset.csv", out_dir + "/latents.csv");
  json counts = json::object();
  std::vector<int> per_domain(cfg.scm->num_domains, 0);
  for (const auto& s : ds.samples) per_domain[s.domain_id]++;
  for (int u = 0; u < cfg.scm->num_domains; ++u)
    counts[std::to_string(u)] = per_domain[u];
  std::cout << json{{"command", "generate"},
                    {"samples", ds.samples.size()},
                    {"per_domain", counts},
                    {"dataset", out_dir + "/dataset.csv"},
                    {"latents", out_dir + "/latents.csv"}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  auto ds = load_or_generate(cfg);
  auto mc = model_for_dataset(cfg, ds);
  auto result = lcs::train::train(ds, cfg.train, mc);
  fs::create_directories(out_dir);
  lcs::train::save_train_checkpoint(result, out_dir + "/checkpoint.json");
  result.history.export_jsonl(out_dir + "/history.jsonl");
  json summary{{"command", "train"},
               {"epochs", result.epochs_done},
               {"checkpoint", out_dir + "/checkpoint.json"},
               {"history", out_dir + "/history.jsonl"}};
  if (!result.history.snapshots.empty()) {
    const auto& last = result.history.snapshots.back();
    summary["objective"] = last.objective;
    if (last.mcc) summary["mcc"] = *last.mcc;
    if (last.target_metric) summary["target_metric"] = *last.target_metric;
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_path,
                 const std::string& latents_path, const std::string& out_dir) {
  auto ck = lcs::train::load_train_checkpoint(checkpoint_path);
  auto ds = lcs::scm::import_csv(data_path);
  if (!latents_path.empty()) ds.latents = lcs::scm::import_latents_csv(latents_path);
  auto& mc = ck.params.config;
  if (ds.config.d_x != mc.d_x)
    throw lcs::ConfigError("dataset d_x does not match checkpoint");
  ds.config.num_domains = mc.num_domains;

  json report{{"command", "evaluate"}};
  std::vector<int> all_idx(ds.samples.size());
  for (std::size_t i = 0; i < all_idx.size(); ++i) all_idx[i] = static_cast<int>(i);
  auto pooled = lcs::train::make_batch(ds, all_idx, mc, false);

  if (!ds.latents.empty()) {
    auto est = lcs::vae::posterior_content_mean(ck.params, pooled.x, pooled.u_onehot);
    std::vector<std::vector<double>> true_cols(mc.d_c);
    for (int c = 0; c < mc.d_c; ++c) {
      true_cols[c].resize(ds.latents.size());
      for (std::size_t i = 0; i < ds.latents.size(); ++i)
        true_cols[c][i] = ds.latents[i].n_c[c];
    }
    auto rep = lcs::metrics::mcc(true_cols, est);
    report["mcc"] = rep.mcc;
    report["matching"] = rep.matching;
    report["matched_corr"] = rep.matched_corr;
  }

  // Target metric requires withheld labels; imported CSVs lack them unless
  // every row is labeled (then the "target" rows are scored directly).
  std::vector<int> target_idx;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].domain_id == ds.config.target_domain && ds.eval_labels[i])
      target_idx.push_back(static_cast<int>(i));
  if (!target_idx.empty()) {
    auto target = lcs::train::make_batch(ds, target_idx, mc, false);
    auto pred = lcs::vae::predict(ck.params, target.x, target.u_onehot);
    if (mc.task == lcs::vae::Task::kRegression) {
      std::vector<double> yt, yp;
      for (std::size_t r = 0; r < target_idx.size(); ++r) {
        yt.push_back(*ds.eval_labels[target_idx[r]]);
        yp.push_back(pred.data()[r]);
      }
      report["target_r2"] = lcs::metrics::r_squared(yt, yp);
    } else {
      std::vector<int> yt, yp;
      for (std::size_t r = 0; r < target_idx.size(); ++r) {
        yt.push_back(static_cast<int>(*ds.eval_labels[target_idx[r]]));
        int best = 0;
        for (int c = 1; c < mc.num_classes; ++c)
          if (pred.data()[r * mc.num_classes + c] > pred.data()[r * mc.num_classes + best])
            best = c;
        yp.push_back(best);
      }
      report["target_accuracy"] = lcs::metrics::accuracy(yt, yp);
    }
  }

  if (mc.task == lcs::vae::Task::kClassification) {
    auto marg = lcs::resample::empirical_marginals(ds, mc.num_classes);
    const int K = static_cast<int>(marg.size());
    std::vector<std::vector<double>> kl(K, std::vector<double>(K, 0.0));
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j)
        if (i != j) kl[i][j] = lcs::metrics::label_kl(marg[i], marg[j]);
    report["label_kl_matrix"] = kl;
  }

  std::cout << report.dump() << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir + "/report.json");
    if (!out) throw lcs::IoError("cannot open report.json in " + out_dir);
    out << report.dump(2) << "\n";
  }
  return 0;
}

int cmd_resample(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (!cfg.has_resample)
    throw lcs::ConfigError("missing required field 'resample' in config");
  auto ds = load_or_generate(cfg);
  // The resampler treats the pool as a fully labeled corpus; restore any
  // labels withheld for the adaptation task.
  for (std::size_t i = 0; i < ds.samples.size() && i < ds.eval_labels.size(); ++i)
    if (!ds.samples[i].y) ds.samples[i].y = ds.eval_labels[i];
  if (cfg.discretize_classes) discretize_labels(ds, *cfg.discretize_classes);

  auto marginals = lcs::resample::solve_marginals(cfg.resample);
  auto resampled = lcs::resample::subsample(ds, marginals, cfg.seed);
  fs::create_directories(out_dir);
  lcs::scm::export_csv(resampled, out_dir + "/resampled.csv");
  lcs::resample::export_marginals_json(marginals, out_dir + "/marginals.json");

  double max_kl = 0.0, min_kl = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < marginals.kl_matrix.size(); ++i)
    for (std::size_t j = 0; j < marginals.kl_matrix.size(); ++j)
      if (i != j) {
        max_kl = std::max(max_kl, marginals.kl_matrix[i][j]);
        min_kl = std::min(min_kl, marginals.kl_matrix[i][j]);
      }
  std::cout << json{{"command", "resample"},
                    {"kept", resampled.samples.size()},
                    {"target_kl", cfg.resample.target_kl},
                    {"achieved_kl_min", min_kl},
                    {"achieved_kl_max", max_kl},
                    {"resampled", out_dir + "/resampled.csv"},
                    {"marginals", out_dir + "/marginals.json"}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_counterexample(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (!cfg.scm) throw lcs::ConfigError("missing required field 'scm' in config");
  auto gen = lcs::scm::build_generator(*cfg.scm);
  auto alt = lcs::scm::build_counterexample(gen);

  double max_diff = 0.0;
  std::vector<double> zc, zs, alt_zc, alt_zs;
  for (int u = 0; u < cfg.scm->num_domains; ++u) {
    const auto noise = lcs::scm::sample_noise(
        gen.specs[u], cfg.scm->samples_per_domain,
        lcs::derive_seed(cfg.scm->seed, "noise", static_cast<std::uint64_t>(u)));
    for (const auto& row : noise) {
      std::vector<double> n_c(row.begin(), row.begin() + cfg.scm->d_c);
      std::vector<double> n_s(row.begin() + cfg.scm->d_c, row.end());
      auto lat = gen.latents_from_noise(n_c, n_s, u);
      auto lat2 = alt.latents_from_noise(n_c, n_s, u);
      auto x = gen.observe(lat);
      auto x2 = alt.observe(lat2);
      for (std::size_t i = 0; i < x.size(); ++i)
        max_diff = std::max(max_diff, std::abs(x[i] - x2[i]));
      zc.push_back(lat.z_c[0]);
      zs.push_back(lat.z_s[0]);
      alt_zc.push_back(lat2.z_c[0]);
      alt_zs.push_back(lat2.z_s[0]);
    }
  }
  json report{{"command", "counterexample"},
              {"samples", zc.size()},
              {"max_abs_obs_diff", max_diff},
              {"corr_original_zs_zc", lcs::metrics::pearson(zs, zc)},
              {"corr_alternative_zs_zc", lcs::metrics::pearson(alt_zs, alt_zc)},
              {"observationally_equivalent", max_diff <= 1e-9}};
  std::cout << report.dump() << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(out_dir + "/counterexample.json");
    if (!out) throw lcs::IoError("cannot open counterexample.json in " + out_dir);
    out << report.dump(2) << "\n";
  }
  return 0;
}

// Finite-difference sweep over every op kind and every loss term.
int cmd_gradcheck(std::uint64_t seed) {
  using lcs::OpKind;
  using lcs::Tensor;
  json report{{"command", "gradcheck"}};
  lcs::Rng rng(lcs::derive_seed(seed, "gradcheck"));

  auto rand_tensor = [&](std::vector<int> shape, bool positive) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<double> data(n);
    for (double& v : data) v = positive ? 0.2 + std::abs(rng.normal()) : rng.normal();
    return Tensor::from(shape, std::move(data), true);
  };

  double worst = 0.0;
  auto record = [&](const std::string& name, double err) {
    report[name] = err;
    worst = std::max(worst, err);
  };

  for (int trial = 0; trial < 5; ++trial) {
    Tensor w33 = rand_tensor({3, 3}, false);
    Tensor w34 = rand_tensor({3, 4}, false);
    {
      std::vector<Tensor> p = {rand_tensor({3, 4}, false), rand_tensor({4, 3}, false)};
      auto f = [&](const std::vector<Tensor>& q) {
        return lcs::sum(lcs::mul(lcs::matmul(q[0], q[1]), w33));
      };
      record("matmul", std::max(report.value("matmul", 0.0), lcs::grad_check(f, p)));
    }
    for (OpKind kind : {OpKind::kAdd, OpKind::kSub, OpKind::kMul, OpKind::kDiv}) {
      std::vector<Tensor> p = {rand_tensor({3, 4}, false),
                               rand_tensor({3, 4}, kind == OpKind::kDiv)};
      auto f = [&](const std::vector<Tensor>& q) {
        return lcs::sum(lcs::mul(lcs::apply(kind, {q[0], q[1]}), w34));
      };
      record(lcs::op_name(kind),
             std::max(report.value(lcs::op_name(kind), 0.0), lcs::grad_check(f, p)));
    }
    for (OpKind kind : {OpKind::kTanh, OpKind::kLeakyRelu, OpKind::kExp, OpKind::kLog,
                        OpKind::kSquare, OpKind::kSoftmaxRows}) {
      std::vector<Tensor> p = {rand_tensor({3, 4}, kind == OpKind::kLog)};
      auto f = [&](const std::vector<Tensor>& q) {
        return lcs::sum(lcs::mul(lcs::apply(kind, {q[0]}), w34));
      };
      record(lcs::op_name(kind),
             std::max(report.value(lcs::op_name(kind), 0.0), lcs::grad_check(f, p)));
    }
    {
      std::vector<Tensor> p = {rand_tensor({3, 4}, false)};
      auto fsum = [](const std::vector<Tensor>& q) { return lcs::sum(q[0]); };
      auto fmean = [](const std::vector<Tensor>& q) { return lcs::mean(q[0]); };
      record("sum", std::max(report.value("sum", 0.0), lcs::grad_check(fsum, p)));
      record("mean", std::max(report.value("mean", 0.0), lcs::grad_check(fmean, p)));
    }
    {
      Tensor w35 = rand_tensor({3, 6}, false);
      Tensor w32 = rand_tensor({3, 2}, false);
      std::vector<Tensor> p = {rand_tensor({3, 4}, false), rand_tensor({3, 2}, false)};
      auto f = [&](const std::vector<Tensor>& q) {
        return lcs::sum(lcs::mul(lcs::concat_cols(q[0], q[1]), w35));
      };
      auto g = [&](const std::vector<Tensor>& q) {
        return lcs::sum(lcs::mul(lcs::slice_cols(q[0], 1, 3), w32));
      };
      record("concat_cols", std::max(report.value("concat_cols", 0.0), lcs::grad_check(f, p)));
      record("slice_cols", std::max(report.value("slice_cols", 0.0), lcs::grad_check(g, p)));
    }
  }

  // Loss terms of the model, with the reparameterization draws held fixed
  // across perturbations.
  for (int task_case = 0; task_case < 2; ++task_case) {
    lcs::vae::ModelConfig mc;
    mc.d_c = 1;
    mc.d_s = 1;
    mc.d_x = 2;
    mc.num_domains = 3;
    mc.hidden = 6;
    mc.beta = 1.0;
    mc.lambda = 0.5;
    mc.gamma = task_case == 0 ? 0.3 : 0.0;
    mc.task = task_case == 0 ? lcs::vae::Task::kClassification
                             : lcs::vae::Task::kRegression;
    mc.num_classes = task_case == 0 ? 4 : 1;
    auto params = lcs::vae::VaeParams::init(mc, lcs::derive_seed(seed, "gc_model"));
    // Nudge the zero prior head so its gradient path is exercised off-origin.
    {
      auto tensors = params.parameters();
      lcs::Rng nrng(lcs::derive_seed(seed, "gc_nudge"));
      for (auto& t : tensors)
        for (auto& v : t.data())
          if (v == 0.0) v = 0.05 * nrng.normal();
    }
    const int rows = 6;
    lcs::vae::Batch source, target;
    {
      std::vector<double> x(rows * mc.d_x);
      for (double& v : x) v = rng.normal();
      source.x = Tensor::from({rows, mc.d_x}, x);
      std::vector<int> dom(rows);
      for (int r = 0; r < rows; ++r) dom[r] = r % 2;
      source.u_onehot = lcs::vae::one_hot(dom, mc.num_domains);
      source.has_labels = true;
      for (int r = 0; r < rows; ++r) {
        if (mc.task == lcs::vae::Task::kClassification)
          source.y_cls.push_back(r % mc.num_classes);
        else
          source.y_reg.push_back(rng.normal());
      }
      std::vector<double> tx(rows * mc.d_x);
      for (double& v : tx) v = rng.normal();
      target.x = Tensor::from({rows, mc.d_x}, tx);
      target.u_onehot = lcs::vae::one_hot(std::vector<int>(rows, 2), mc.num_domains);
    }
    std::vector<double> sdraw(rows * mc.latent_dim()), tdraw(rows * mc.latent_dim());
    for (double& v : sdraw) v = rng.normal();
    for (double& v : tdraw) v = rng.normal();
    Tensor sd = Tensor::from({rows, mc.latent_dim()}, sdraw);
    Tensor td = Tensor::from({rows, mc.latent_dim()}, tdraw);

    auto tensors = params.parameters();
    const std::string suffix = task_case == 0 ? "_classification" : "_regression";
    auto f_elbo = [&](const std::vector<Tensor>&) {
      return lcs::vae::loss_elbo(params, source, sd);
    };
    auto f_mi = [&](const std::vector<Tensor>&) {
      return lcs::vae::loss_mi(params, source, sd);
    };
    auto f_total = [&](const std::vector<Tensor>&) {
      return lcs::vae::total_objective(params, source, target, sd, td);
    };
    record("loss_elbo" + suffix, lcs::grad_check(f_elbo, tensors));
    record("loss_mi" + suffix, lcs::grad_check(f_mi, tensors));
    record("total_objective" + suffix, lcs::grad_check(f_total, tensors));
    if (mc.task == lcs::vae::Task::kClassification) {
      auto f_ent = [&](const std::vector<Tensor>&) {
        return lcs::vae::loss_entropy(params, target, td);
      };
      record("loss_entropy", lcs::grad_check(f_ent, tensors));
    }
  }
  {
    // Gaussian KL at a random point, checked against its own gradient path.
    std::vector<Tensor> p = {rand_tensor({4, 2}, false), rand_tensor({4, 2}, false),
                             rand_tensor({4, 2}, false), rand_tensor({4, 2}, false)};
    auto f = [&](const std::vector<Tensor>& q) {
      lcs::vae::GaussianParams qg{q[0], q[1]}, pg{q[2], q[3]};
      return lcs::vae::kl_gaussian(qg, pg);
    };
    record("kl_gaussian", lcs::grad_check(f, p));
  }

  report["max_relative_error"] = worst;
  report["pass"] = worst < 1e-4;
  std::cout << report.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-covariate-shift adaptation laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", checkpoint_path, data_path, latents_path;
  std::optional<std::uint64_t> seed_override;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "experiment config JSON");
    if (needs_config) opt->required();
    cmd->add_option("--seed", seed_override, "root seed override");
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* generate = app.add_subcommand("generate", "sample a dataset from the latent SCM");
  add_common(generate, true);
  auto* train = app.add_subcommand("train", "train the model on generated or ingested data");
  add_common(train, true);
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a dataset");
  evaluate->add_option("--checkpoint", checkpoint_path, "train checkpoint JSON")->required();
  evaluate->add_option("--data", data_path, "dataset CSV")->required();
  evaluate->add_option("--latents", latents_path, "ground-truth latents CSV");
  evaluate->add_option("--out", out_dir, "output directory (optional report.json)");
  std::string eval_out;
  evaluate->callback([&] { eval_out = evaluate->count("--out") ? out_dir : ""; });
  auto* resample = app.add_subcommand("resample", "resample labels to a target pairwise KL");
  add_common(resample, true);
  auto* counterexample =
      app.add_subcommand("counterexample", "verify the alternative-solution construction");
  add_common(counterexample, true);
  std::string ce_out;
  counterexample->callback(
      [&] { ce_out = counterexample->count("--out") ? out_dir : ""; });
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference sweep of all ops");
  gradcheck->add_option("--seed", seed_override, "root seed override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gradcheck->parsed()) return cmd_gradcheck(seed_override.value_or(0));
    if (evaluate->parsed())
      return cmd_evaluate(checkpoint_path, data_path, latents_path, eval_out);
    ExperimentConfig cfg = load_config(config_path, seed_override);
    if (generate->parsed()) return cmd_generate(cfg, out_dir);
    if (train->parsed()) return cmd_train(cfg, out_dir);
    if (resample->parsed()) return cmd_resample(cfg, out_dir);
    if (counterexample->parsed()) return cmd_counterexample(cfg, ce_out);
  } catch (const lcs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const lcs::TensorError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const lcs::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
