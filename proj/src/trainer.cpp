#include "lcs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "lcs/metrics.hpp"
#include "lcs/rng.hpp"

namespace lcs::train {

namespace {

using nlohmann::json;

std::vector<int> labeled_indices(const scm::Dataset& ds) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].y) idx.push_back(static_cast<int>(i));
  return idx;
}

std::vector<int> unlabeled_indices(const scm::Dataset& ds) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (!ds.samples[i].y) idx.push_back(static_cast<int>(i));
  return idx;
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);
}

Tensor normal_draws(Rng& rng, int rows, int cols) {
  std::vector<double> d(static_cast<std::size_t>(rows) * cols);
  for (double& v : d) v = rng.normal();
  return Tensor::from({rows, cols}, std::move(d));
}

void check_dataset(const scm::Dataset& ds) {
  if (ds.samples.empty()) throw ConfigError("train: empty dataset");
  std::set<int> labeled, unlabeled;
  for (const auto& s : ds.samples)
    (s.y ? labeled : unlabeled).insert(s.domain_id);
  if (labeled.empty()) throw ConfigError("train: no labeled source domain");
  if (unlabeled.size() != 1)
    throw ConfigError("train: need exactly one unlabeled target domain, found " +
                      std::to_string(unlabeled.size()));
}

struct EvalSnapshot {
  double elbo, mi, entropy, objective;
};

EvalSnapshot evaluate_losses(vae::VaeParams& params, const vae::Batch& source,
                             const vae::Batch& target, const Tensor& sd, const Tensor& td) {
  EvalSnapshot s{};
  s.elbo = 0.5 * (vae::loss_elbo(params, source, sd).item() +
                  vae::loss_elbo(params, target, td).item());
  s.mi = vae::loss_mi(params, source, sd).item();
  s.entropy = params.config.task == vae::Task::kClassification
                  ? vae::loss_entropy(params, target, td).item()
                  : 0.0;
  s.objective = vae::total_objective(params, source, target, sd, td).item();
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning_rate must be > 0");
  if (eval_every < 1) throw ConfigError("TrainConfig: eval_every must be >= 1");
}

std::vector<std::vector<int>> minibatch_indices(int n, int batch_size,
                                                std::uint64_t seed, int epoch) {
  if (n < 1) throw ConfigError("minibatch_indices: empty dataset");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
  shuffle_indices(idx, rng);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    batches.emplace_back(idx.begin() + start, idx.begin() + end);
  }
  return batches;
}

vae::Batch make_batch(const scm::Dataset& ds, const std::vector<int>& indices,
                      const vae::ModelConfig& mc, bool with_labels) {
  const int rows = static_cast<int>(indices.size());
  const int d_x = static_cast<int>(ds.samples[indices[0]].x.size());
  std::vector<double> x(static_cast<std::size_t>(rows) * d_x);
  std::vector<int> domains(rows);
  vae::Batch b;
  for (int r = 0; r < rows; ++r) {
    const auto& s = ds.samples[indices[r]];
    std::copy(s.x.begin(), s.x.end(), x.begin() + static_cast<std::size_t>(r) * d_x);
    domains[r] = s.domain_id;
    if (with_labels) {
      if (!s.y) throw ConfigError("make_batch: labeled batch contains unlabeled row");
      if (mc.task == vae::Task::kClassification)
        b.y_cls.push_back(static_cast<int>(*s.y));
      else
        b.y_reg.push_back((*s.y - mc.label_mean) / mc.label_std);
    }
  }
  b.x = Tensor::from({rows, d_x}, std::move(x));
  b.u_onehot = vae::one_hot(domains, mc.num_domains);
  b.has_labels = with_labels;
  return b;
}

std::vector<vae::Batch> minibatches(const scm::Dataset& ds, int batch_size,
                                    std::uint64_t seed, int epoch) {
  vae::ModelConfig mc;
  mc.d_x = ds.config.d_x;
  mc.num_domains = ds.config.num_domains;
  std::vector<vae::Batch> out;
  for (const auto& idx :
       minibatch_indices(static_cast<int>(ds.samples.size()), batch_size, seed, epoch))
    out.push_back(make_batch(ds, idx, mc, false));
  return out;
}

namespace {

[[noreturn]] void nan_abort(vae::VaeParams& params, const vae::Batch& source,
                            const vae::Batch& target, const Tensor& sd, const Tensor& td) {
  const char* offender = "objective";
  if (!std::isfinite(vae::loss_mi(params, source, sd).item()))
    offender = "loss_mi";
  else if (!std::isfinite(vae::loss_elbo(params, source, sd).item()) ||
           !std::isfinite(vae::loss_elbo(params, target, td).item()))
    offender = "loss_elbo";
  else if (params.config.task == vae::Task::kClassification &&
           !std::isfinite(vae::loss_entropy(params, target, td).item()))
    offender = "loss_entropy";
  throw TensorError(std::string("NaN loss encountered in ") + offender +
                    "; aborting training");
}

void append_metrics_snapshot(History& history, vae::VaeParams& params,
                             const scm::Dataset& ds, const vae::ModelConfig& mc,
                             int epoch, std::uint64_t seed) {
  const auto source_idx = labeled_indices(ds);
  const auto target_idx = unlabeled_indices(ds);
  vae::Batch source = make_batch(ds, source_idx, mc, true);
  vae::Batch target = make_batch(ds, target_idx, mc, false);
  Rng rng(derive_seed(seed, "eval_draws", static_cast<std::uint64_t>(epoch)));
  Tensor sd = normal_draws(rng, source.rows(), mc.latent_dim());
  Tensor td = normal_draws(rng, target.rows(), mc.latent_dim());

  Snapshot snap;
  snap.epoch = epoch;
  EvalSnapshot losses = evaluate_losses(params, source, target, sd, td);
  snap.elbo = losses.elbo;
  snap.mi = losses.mi;
  snap.entropy = losses.entropy;
  snap.objective = losses.objective;

  if (!ds.latents.empty()) {
    // MCC of true n_c vs posterior content mean, pooled over all domains.
    std::vector<int> all_idx(ds.samples.size());
    std::iota(all_idx.begin(), all_idx.end(), 0);
    vae::Batch pooled = make_batch(ds, all_idx, mc, false);
    auto est = vae::posterior_content_mean(params, pooled.x, pooled.u_onehot);
    std::vector<std::vector<double>> true_cols(mc.d_c);
    for (int c = 0; c < mc.d_c; ++c) {
      true_cols[c].resize(ds.latents.size());
      for (std::size_t i = 0; i < ds.latents.size(); ++i)
        true_cols[c][i] = ds.latents[i].n_c[c];
    }
    snap.mcc = metrics::mcc(true_cols, est).mcc;
  }

  // Target metric against withheld ground truth, when available.
  bool have_eval = !target_idx.empty();
  for (int i : target_idx)
    if (!ds.eval_labels[i]) have_eval = false;
  if (have_eval) {
    Tensor pred = vae::predict(params, target.x, target.u_onehot);
    if (mc.task == vae::Task::kRegression) {
      std::vector<double> yt, yp;
      for (std::size_t r = 0; r < target_idx.size(); ++r) {
        yt.push_back(*ds.eval_labels[target_idx[r]]);
        yp.push_back(pred.data()[r]);
      }
      snap.target_metric = metrics::r_squared(yt, yp);
    } else {
      std::vector<int> yt, yp;
      const int C = mc.num_classes;
      for (std::size_t r = 0; r < target_idx.size(); ++r) {
        yt.push_back(static_cast<int>(*ds.eval_labels[target_idx[r]]));
        int best = 0;
        for (int c = 1; c < C; ++c)
          if (pred.data()[r * C + c] > pred.data()[r * C + best]) best = c;
        yp.push_back(best);
      }
      snap.target_metric = metrics::accuracy(yt, yp);
    }
  }
  history.snapshots.push_back(snap);
}

}  // namespace

TrainResult train(const scm::Dataset& ds, const TrainConfig& tc,
                  const vae::ModelConfig& mc) {
  vae::ModelConfig fitted = mc;
  if (mc.task == vae::Task::kRegression) {
    // Train the label head in standardized units so the fit term's scale does
    // not depend on the raw label magnitude.
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (const auto& s : ds.samples)
      if (s.y) {
        sum += *s.y;
        sq += *s.y * *s.y;
        ++n;
      }
    if (n > 1) {
      fitted.label_mean = sum / n;
      const double var = sq / n - fitted.label_mean * fitted.label_mean;
      if (var > 1e-12) fitted.label_std = std::sqrt(var);
    }
  }
  return train_resume(ds, tc, vae::VaeParams::init(fitted, derive_seed(tc.seed, "init")),
                      AdamState{}, 0, History{});
}

TrainResult train_resume(const scm::Dataset& ds, const TrainConfig& tc,
                         vae::VaeParams params, AdamState adam, int start_epoch,
                         History history) {
  tc.validate();
  check_dataset(ds);
  const vae::ModelConfig& mc = params.config;

  const auto source_idx = labeled_indices(ds);
  const auto target_idx = unlabeled_indices(ds);
  auto tensors = params.parameters();
  AdamConfig adam_cfg;
  adam_cfg.lr = tc.learning_rate;

  for (int epoch = start_epoch; epoch < tc.epochs; ++epoch) {
    auto source_batches = minibatch_indices(
        static_cast<int>(source_idx.size()), tc.batch_size,
        derive_seed(tc.seed, "source"), epoch);
    auto target_batches = minibatch_indices(
        static_cast<int>(target_idx.size()), tc.batch_size,
        derive_seed(tc.seed, "target"), epoch);
    Rng draw_rng(derive_seed(tc.seed, "draws", static_cast<std::uint64_t>(epoch)));

    double objective_sum = 0.0;
    for (std::size_t step = 0; step < source_batches.size(); ++step) {
      std::vector<int> sidx, tidx;
      for (int k : source_batches[step]) sidx.push_back(source_idx[k]);
      for (int k : target_batches[step % target_batches.size()])
        tidx.push_back(target_idx[k]);
      vae::Batch source = make_batch(ds, sidx, mc, true);
      vae::Batch target = make_batch(ds, tidx, mc, false);
      Tensor sd = normal_draws(draw_rng, source.rows(), mc.latent_dim());
      Tensor td = normal_draws(draw_rng, target.rows(), mc.latent_dim());

      Tensor objective = vae::total_objective(params, source, target, sd, td);
      if (!std::isfinite(objective.item()))
        nan_abort(params, source, target, sd, td);
      objective_sum += objective.item();

      for (auto& t : tensors) t.zero_grad();
      backward(scale(objective, -1.0));  // ascend
      adam_step(tensors, adam_cfg, adam);
    }
    history.epoch_objective.push_back(objective_sum /
                                      static_cast<double>(source_batches.size()));

    if ((epoch + 1) % tc.eval_every == 0 || epoch + 1 == tc.epochs)
      append_metrics_snapshot(history, params, ds, mc, epoch + 1, tc.seed);
  }

  TrainResult result;
  result.params = std::move(params);
  result.history = std::move(history);
  result.adam = std::move(adam);
  result.epochs_done = std::max(tc.epochs, start_epoch);
  return result;
}

void History::export_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& s : snapshots) {
    json line{{"epoch", s.epoch},
              {"elbo", s.elbo},
              {"mi", s.mi},
              {"entropy", s.entropy},
              {"objective", s.objective}};
    if (s.mcc) line["mcc"] = *s.mcc;
    if (s.target_metric) line["target_metric"] = *s.target_metric;
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

namespace {

json history_to_json(const History& h) {
  json snaps = json::array();
  for (const auto& s : h.snapshots) {
    json line{{"epoch", s.epoch},
              {"elbo", s.elbo},
              {"mi", s.mi},
              {"entropy", s.entropy},
              {"objective", s.objective}};
    if (s.mcc) line["mcc"] = *s.mcc;
    if (s.target_metric) line["target_metric"] = *s.target_metric;
    snaps.push_back(std::move(line));
  }
  return json{{"snapshots", std::move(snaps)}, {"epoch_objective", h.epoch_objective}};
}

History history_from_json(const json& j) {
  History h;
  for (const auto& line : j.at("snapshots")) {
    Snapshot s;
    s.epoch = line.at("epoch").get<int>();
    s.elbo = line.at("elbo").get<double>();
    s.mi = line.at("mi").get<double>();
    s.entropy = line.at("entropy").get<double>();
    s.objective = line.at("objective").get<double>();
    if (line.contains("mcc")) s.mcc = line.at("mcc").get<double>();
    if (line.contains("target_metric"))
      s.target_metric = line.at("target_metric").get<double>();
    h.snapshots.push_back(s);
  }
  h.epoch_objective = j.at("epoch_objective").get<std::vector<double>>();
  return h;
}

}  // namespace

void save_train_checkpoint(const TrainResult& result, const std::string& path) {
  // Model parameters reuse the vae checkpoint format; Adam state and the
  // history ride alongside in the same document.
  const std::string model_path = path + ".model.json";
  vae::VaeParams params = result.params;
  vae::save_checkpoint(params, model_path);

  json doc;
  doc["format_version"] = 1;
  // Stored as a basename so checkpoints are relocatable and byte-identical
  // across output directories.
  doc["model_file"] = std::filesystem::path(model_path).filename().string();
  doc["epochs_done"] = result.epochs_done;
  doc["adam"] = {{"step_count", result.adam.step_count},
                 {"m", result.adam.m},
                 {"v", result.adam.v}};
  doc["history"] = history_to_json(result.history);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

TrainCheckpoint load_train_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError("malformed train checkpoint " + path + ": " + e.what());
  }
  TrainCheckpoint ck;
  const std::filesystem::path model_file = doc.at("model_file").get<std::string>();
  const auto model_path = model_file.is_absolute()
                              ? model_file
                              : std::filesystem::path(path).parent_path() / model_file;
  ck.params = vae::load_checkpoint(model_path.string());
  ck.epochs_done = doc.at("epochs_done").get<int>();
  ck.adam.step_count = doc.at("adam").at("step_count").get<long>();
  ck.adam.m = doc.at("adam").at("m").get<std::vector<std::vector<double>>>();
  ck.adam.v = doc.at("adam").at("v").get<std::vector<std::vector<double>>>();
  ck.history = history_from_json(doc.at("history"));
  return ck;
}

Tensor ErmModel::predict(const Tensor& x) {
  Tensor out = net.forward(x);
  if (config.task == vae::Task::kClassification) return softmax_rows(out);
  return add_const(scale(out, config.label_std), config.label_mean);
}

ErmModel train_erm(const scm::Dataset& ds, const TrainConfig& tc,
                   const vae::ModelConfig& mc) {
  tc.validate();
  const auto source_idx = labeled_indices(ds);
  if (source_idx.empty()) throw ConfigError("train_erm: no labeled source data");

  ErmModel model;
  model.config = mc;
  // The baseline regresses the raw targets; the label standardization above
  // is part of the variational objective's term balancing, not shared
  // preprocessing.
  model.config.label_mean = 0.0;
  model.config.label_std = 1.0;
  const int out_dim = mc.task == vae::Task::kClassification ? mc.num_classes : 1;
  {
    Rng rng(derive_seed(tc.seed, "erm_init"));
    const std::vector<int> dims = mc.preset == vae::Preset::kSynthetic
                                      ? std::vector<int>{mc.d_x, mc.hidden, mc.hidden, out_dim}
                                      : std::vector<int>{mc.d_x, mc.hidden, out_dim};
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      const int in = dims[i], out = dims[i + 1];
      std::vector<double> w(static_cast<std::size_t>(in) * out);
      const double s = 1.0 / std::sqrt(static_cast<double>(in));
      for (double& v : w) v = s * rng.normal();
      model.net.weights.push_back(Tensor::from({in, out}, std::move(w), true));
      model.net.biases.push_back(Tensor::zeros({out}, true));
    }
  }

  std::vector<Tensor> tensors;
  for (std::size_t i = 0; i < model.net.weights.size(); ++i) {
    tensors.push_back(model.net.weights[i]);
    tensors.push_back(model.net.biases[i]);
  }
  AdamConfig adam_cfg;
  adam_cfg.lr = tc.learning_rate;
  AdamState adam;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    auto batches = minibatch_indices(static_cast<int>(source_idx.size()), tc.batch_size,
                                     derive_seed(tc.seed, "erm"), epoch);
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
      std::vector<int> idx;
      for (int k : batch) idx.push_back(source_idx[k]);
      vae::Batch b = make_batch(ds, idx, model.config, true);
      Tensor out = model.net.forward(b.x);
      Tensor loss;
      if (mc.task == vae::Task::kClassification) {
        Tensor probs = softmax_rows(out);
        Tensor y1h = vae::one_hot(b.y_cls, mc.num_classes);
        loss = scale(sum(mul(log(add_const(probs, 1e-300)), y1h)),
                     -1.0 / static_cast<double>(b.rows()));
      } else {
        Tensor y = Tensor::from({b.rows(), 1}, b.y_reg);
        loss = scale(sum(square(sub(out, y))), 1.0 / static_cast<double>(b.rows()));
      }
      if (!std::isfinite(loss.item()))
        throw TensorError("NaN loss encountered in train_erm; aborting");
      loss_sum += loss.item();
      for (auto& t : tensors) t.zero_grad();
      backward(loss);
      adam_step(tensors, adam_cfg, adam);
    }
    model.source_loss_per_epoch.push_back(loss_sum / static_cast<double>(batches.size()));
  }
  return model;
}

}  // namespace lcs::train
