#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lcs/errors.hpp"
#include "lcs/tensor.hpp"

namespace lcs::vae {

enum class Task { kClassification, kRegression };
enum class Preset { kSynthetic, kFeature };

struct ModelConfig {
  int d_c = 1;
  int d_s = 1;
  int d_x = 2;
  int num_domains = 5;
  Task task = Task::kRegression;
  int num_classes = 1;  // classification only
  Preset preset = Preset::kSynthetic;
  int hidden = 30;
  double beta = 1.0;
  double lambda = 1e-2;
  double gamma = 0.0;
  // Ablation switch: apply the entropy term with the sign literally written
  // in the objective instead of as a penalty.
  bool entropy_literal_sign = false;
  // Regression labels are trained in standardized units; predict() maps back.
  double label_mean = 0.0;
  double label_std = 1.0;

  int latent_dim() const { return d_c + d_s; }
  void validate() const;
};

// Diagonal Gaussian over a latent block; both fields are batch matrices
// (rows x dim). log_variance is soft-clamped to [-8, 8].
struct GaussianParams {
  Tensor mean;
  Tensor log_variance;
  int dim() const { return mean.cols(); }
};

struct Mlp {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Tensor forward(const Tensor& x) const;  // tanh hidden layers, linear head
};

struct Batch {
  Tensor x;         // rows x d_x
  Tensor u_onehot;  // rows x M
  std::vector<double> y_reg;
  std::vector<int> y_cls;
  bool has_labels = false;
  int rows() const { return x.rows(); }
};

struct VaeParams {
  ModelConfig config;
  Mlp prior_net;       // one-hot -> 2*(d_c+d_s); zero-initialized head
  Mlp encoder_net;     // x ++ one-hot -> 2*(d_c+d_s)
  Mlp decoder_net;     // d_c+d_s -> d_x
  Mlp classifier_net;  // d_c -> C logits or scalar mean

  static VaeParams init(const ModelConfig& config, std::uint64_t seed);
  std::vector<Tensor> parameters();  // stable order
  std::vector<std::string> parameter_names() const;
};

std::pair<GaussianParams, GaussianParams> prior(VaeParams& params, const Tensor& u_onehot);
std::pair<GaussianParams, GaussianParams> encode(VaeParams& params, const Tensor& x,
                                                 const Tensor& u_onehot);

// mean + sqrt(variance) * draws; draws must match the block shape.
Tensor reparameterize(const GaussianParams& gp, const Tensor& draws);

// Closed-form diagonal-Gaussian KL, summed over dims and averaged over rows.
Tensor kl_gaussian(const GaussianParams& q, const GaussianParams& p);

// Mean over the batch of -1/2 ||x - x_hat||^2 - beta * (KL_c + KL_s).
Tensor loss_elbo(VaeParams& params, const Batch& batch, const Tensor& draws);

// E[log p(y | n_c)] on labeled rows (log-softmax pick or -1/2 squared error).
Tensor loss_mi(VaeParams& params, const Batch& source, const Tensor& draws);

// Mean Shannon entropy (nats) of target-domain predictive distributions.
Tensor loss_entropy(VaeParams& params, const Batch& target, const Tensor& draws);

// L_MI + lambda * L_ELBO - gamma * H (penalty sign by default).
Tensor total_objective(VaeParams& params, const Batch& source, const Batch& target,
                       const Tensor& source_draws, const Tensor& target_draws);

// Deterministic inference on the posterior mean of n_c. Classification
// returns per-row class probabilities; regression a single column.
Tensor predict(VaeParams& params, const Tensor& x, const Tensor& u_onehot);

// Posterior means of the content block (evaluation helper for MCC).
std::vector<std::vector<double>> posterior_content_mean(VaeParams& params,
                                                        const Tensor& x,
                                                        const Tensor& u_onehot);

// Single-JSON checkpoint with base64 little-endian float64 payloads.
// Round trips are bitwise exact.
void save_checkpoint(VaeParams& params, const std::string& path);
VaeParams load_checkpoint(const std::string& path);

Tensor one_hot(const std::vector<int>& ids, int width);

}  // namespace lcs::vae
