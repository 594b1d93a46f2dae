#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcs/adam.hpp"
#include "lcs/scm.hpp"
#include "lcs/vae.hpp"

namespace lcs::train {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  int eval_every = 20;

  void validate() const;
};

struct Snapshot {
  int epoch = 0;
  double elbo = 0.0;
  double mi = 0.0;
  double entropy = 0.0;
  double objective = 0.0;
  std::optional<double> mcc;
  std::optional<double> target_metric;  // R^2 or accuracy
};

struct History {
  std::vector<Snapshot> snapshots;
  // Mean training objective per epoch, recorded for every epoch.
  std::vector<double> epoch_objective;

  void export_jsonl(const std::string& path) const;
};

struct TrainResult {
  vae::VaeParams params;
  History history;
  AdamState adam;
  int epochs_done = 0;
};

// Deterministic index partition for one epoch, reshuffled per (seed, epoch).
// The final short batch is kept.
std::vector<std::vector<int>> minibatch_indices(int n, int batch_size,
                                                std::uint64_t seed, int epoch);

// Pooled-dataset batches (the partition contract; training itself draws
// separate source and target batches per step).
std::vector<vae::Batch> minibatches(const scm::Dataset& ds, int batch_size,
                                    std::uint64_t seed, int epoch);

vae::Batch make_batch(const scm::Dataset& ds, const std::vector<int>& indices,
                      const vae::ModelConfig& mc, bool with_labels);

TrainResult train(const scm::Dataset& ds, const TrainConfig& tc,
                  const vae::ModelConfig& mc);

// Continue from a checkpointed state; epochs in tc are counted from zero, so
// a resume at start_epoch e runs epochs [e, tc.epochs).
TrainResult train_resume(const scm::Dataset& ds, const TrainConfig& tc,
                         vae::VaeParams params, AdamState adam, int start_epoch,
                         History history);

// Trainer-side checkpoint: model params + Adam state + epoch cursor.
void save_train_checkpoint(const TrainResult& result, const std::string& path);
struct TrainCheckpoint {
  vae::VaeParams params;
  AdamState adam;
  int epochs_done = 0;
  History history;
};
TrainCheckpoint load_train_checkpoint(const std::string& path);

// Supervised baseline on pooled source data, same network family as the
// classifier but consuming raw x.
struct ErmModel {
  vae::ModelConfig config;
  vae::Mlp net;
  std::vector<double> source_loss_per_epoch;

  Tensor predict(const Tensor& x);  // probabilities or regression column
};

ErmModel train_erm(const scm::Dataset& ds, const TrainConfig& tc,
                   const vae::ModelConfig& mc);

}  // namespace lcs::train
