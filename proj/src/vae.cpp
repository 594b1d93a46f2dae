#include "lcs/vae.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lcs/rng.hpp"

namespace lcs::vae {

namespace {

using nlohmann::json;

constexpr double kLogVarBound = 8.0;
constexpr double kLogFloor = 1e-300;  // makes 0 * log(0) evaluate to 0

Tensor clamp_log_variance(const Tensor& raw) {
  // Smooth clamp into (-8, 8): 8 * tanh(x / 8). Near-identity for |x| < 4.
  return scale(tanh(scale(raw, 1.0 / kLogVarBound)), kLogVarBound);
}

void check_one_hot(const Tensor& u, int width) {
  if (u.cols() != width)
    throw ConfigError("one-hot width " + std::to_string(u.cols()) + " != domain count " +
                      std::to_string(width));
  const auto& d = u.data();
  for (int r = 0; r < u.rows(); ++r) {
    int ones = 0;
    for (int c = 0; c < width; ++c) {
      const double v = d[r * width + c];
      if (v != 0.0 && v != 1.0)
        throw ConfigError("malformed one-hot: entry not in {0,1}");
      if (v == 1.0) ++ones;
    }
    if (ones != 1) throw ConfigError("malformed one-hot: row must contain exactly one 1");
  }
}

// Splits a 2l-wide head output into content/style Gaussian blocks.
std::pair<GaussianParams, GaussianParams> split_heads(const Tensor& out, int d_c, int d_s) {
  const int l = d_c + d_s;
  Tensor mean = slice_cols(out, 0, l);
  Tensor log_var = clamp_log_variance(slice_cols(out, l, 2 * l));
  GaussianParams content{slice_cols(mean, 0, d_c), slice_cols(log_var, 0, d_c)};
  GaussianParams style{slice_cols(mean, d_c, l), slice_cols(log_var, d_c, l)};
  return {content, style};
}

Mlp init_mlp(Rng& rng, const std::vector<int>& dims, bool zero_head) {
  Mlp net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i], out = dims[i + 1];
    const bool head = i + 2 == dims.size();
    std::vector<double> w(static_cast<std::size_t>(in) * out, 0.0);
    if (!(head && zero_head)) {
      const double s = 1.0 / std::sqrt(static_cast<double>(in));
      for (double& v : w) v = s * rng.normal();
    }
    net.weights.push_back(Tensor::from({in, out}, std::move(w), true));
    net.biases.push_back(Tensor::zeros({out}, true));
  }
  return net;
}

Tensor column(const std::vector<double>& v) {
  return Tensor::from({static_cast<int>(v.size()), 1}, v);
}

}  // namespace

void ModelConfig::validate() const {
  if (d_c < 1 || d_s < 1 || d_x < 1) throw ConfigError("ModelConfig: dims must be >= 1");
  if (num_domains < 2) throw ConfigError("ModelConfig: need at least 2 domains");
  if (hidden < 1) throw ConfigError("ModelConfig: hidden must be >= 1");
  if (beta < 0.0 || lambda < 0.0 || gamma < 0.0)
    throw ConfigError("ModelConfig: beta/lambda/gamma must be non-negative");
  if (task == Task::kClassification && num_classes < 2)
    throw ConfigError("ModelConfig: classification needs num_classes >= 2");
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    h = add(matmul(h, weights[i]), biases[i]);
    if (i + 1 < weights.size()) h = tanh(h);
  }
  return h;
}

VaeParams VaeParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  VaeParams p;
  p.config = config;
  const int l = config.latent_dim();
  const int out_y = config.task == Task::kClassification ? config.num_classes : 1;
  const int h = config.hidden;

  auto dims = [&](int in, int out) {
    return config.preset == Preset::kSynthetic ? std::vector<int>{in, h, h, out}
                                               : std::vector<int>{in, h, out};
  };
  Rng prior_rng(derive_seed(seed, "prior_net"));
  Rng enc_rng(derive_seed(seed, "encoder_net"));
  Rng dec_rng(derive_seed(seed, "decoder_net"));
  Rng cls_rng(derive_seed(seed, "classifier_net"));
  // Zero head on the prior: every domain starts as a standard normal.
  p.prior_net = init_mlp(prior_rng, dims(config.num_domains, 2 * l), true);
  p.encoder_net = init_mlp(enc_rng, dims(config.d_x + config.num_domains, 2 * l), false);
  p.decoder_net = init_mlp(dec_rng, dims(l, config.d_x), false);
  p.classifier_net = init_mlp(cls_rng, dims(config.d_c, out_y), false);
  return p;
}

std::vector<Tensor> VaeParams::parameters() {
  std::vector<Tensor> all;
  for (Mlp* net : {&prior_net, &encoder_net, &decoder_net, &classifier_net})
    for (std::size_t i = 0; i < net->weights.size(); ++i) {
      all.push_back(net->weights[i]);
      all.push_back(net->biases[i]);
    }
  return all;
}

std::vector<std::string> VaeParams::parameter_names() const {
  std::vector<std::string> names;
  const char* prefixes[] = {"prior_net", "encoder_net", "decoder_net", "classifier_net"};
  const Mlp* nets[] = {&prior_net, &encoder_net, &decoder_net, &classifier_net};
  for (int k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < nets[k]->weights.size(); ++i) {
      names.push_back(std::string(prefixes[k]) + ".w" + std::to_string(i));
      names.push_back(std::string(prefixes[k]) + ".b" + std::to_string(i));
    }
  return names;
}

std::pair<GaussianParams, GaussianParams> prior(VaeParams& params, const Tensor& u_onehot) {
  check_one_hot(u_onehot, params.config.num_domains);
  return split_heads(params.prior_net.forward(u_onehot), params.config.d_c,
                     params.config.d_s);
}

std::pair<GaussianParams, GaussianParams> encode(VaeParams& params, const Tensor& x,
                                                 const Tensor& u_onehot) {
  check_one_hot(u_onehot, params.config.num_domains);
  if (x.cols() != params.config.d_x)
    throw ConfigError("encode: x has " + std::to_string(x.cols()) + " columns, expected " +
                      std::to_string(params.config.d_x));
  if (x.rows() != u_onehot.rows()) throw ConfigError("encode: x/u row counts differ");
  return split_heads(params.encoder_net.forward(concat_cols(x, u_onehot)),
                     params.config.d_c, params.config.d_s);
}

Tensor reparameterize(const GaussianParams& gp, const Tensor& draws) {
  if (draws.shape() != gp.mean.shape())
    throw ConfigError("reparameterize: draws shape must match the Gaussian block");
  return add(gp.mean, mul(exp(scale(gp.log_variance, 0.5)), draws));
}

Tensor kl_gaussian(const GaussianParams& q, const GaussianParams& p) {
  if (q.mean.shape() != p.mean.shape())
    throw ConfigError("kl_gaussian: dimension mismatch");
  const int rows = q.mean.rows();
  Tensor diff = sub(q.mean, p.mean);
  Tensor ratio = mul(add(exp(q.log_variance), square(diff)),
                     exp(scale(p.log_variance, -1.0)));
  Tensor per_elem = add_const(
      add(scale(sub(p.log_variance, q.log_variance), 0.5), scale(ratio, 0.5)), -0.5);
  return scale(sum(per_elem), 1.0 / static_cast<double>(rows));
}

namespace {

struct LatentDraw {
  Tensor n_c, n_s;
  std::pair<GaussianParams, GaussianParams> posterior;
};

LatentDraw sample_posterior(VaeParams& params, const Batch& batch, const Tensor& draws) {
  if (batch.rows() == 0) throw ConfigError("empty batch");
  if (draws.rows() != batch.rows() || draws.cols() != params.config.latent_dim())
    throw ConfigError("draws must be rows x (d_c + d_s)");
  LatentDraw out;
  out.posterior = encode(params, batch.x, batch.u_onehot);
  out.n_c = reparameterize(out.posterior.first,
                           slice_cols(draws, 0, params.config.d_c));
  out.n_s = reparameterize(out.posterior.second,
                           slice_cols(draws, params.config.d_c, params.config.latent_dim()));
  return out;
}

}  // namespace

Tensor loss_elbo(VaeParams& params, const Batch& batch, const Tensor& draws) {
  LatentDraw lat = sample_posterior(params, batch, draws);
  auto prior_blocks = prior(params, batch.u_onehot);
  Tensor x_hat = params.decoder_net.forward(concat_cols(lat.n_c, lat.n_s));
  Tensor recon = scale(sum(square(sub(batch.x, x_hat))),
                       -0.5 / static_cast<double>(batch.rows()));
  Tensor kl = add(kl_gaussian(lat.posterior.first, prior_blocks.first),
                  kl_gaussian(lat.posterior.second, prior_blocks.second));
  return sub(recon, scale(kl, params.config.beta));
}

Tensor loss_mi(VaeParams& params, const Batch& source, const Tensor& draws) {
  if (!source.has_labels) throw ConfigError("loss_mi: batch has no labels");
  LatentDraw lat = sample_posterior(params, source, draws);
  Tensor out = params.classifier_net.forward(lat.n_c);
  const int rows = source.rows();
  if (params.config.task == Task::kClassification) {
    if (static_cast<int>(source.y_cls.size()) != rows)
      throw ConfigError("loss_mi: class labels missing");
    Tensor probs = softmax_rows(out);
    Tensor y1h = one_hot(source.y_cls, params.config.num_classes);
    Tensor picked = mul(log(add_const(probs, kLogFloor)), y1h);
    return scale(sum(picked), 1.0 / static_cast<double>(rows));
  }
  if (static_cast<int>(source.y_reg.size()) != rows)
    throw ConfigError("loss_mi: regression labels missing");
  Tensor y = column(source.y_reg);
  return scale(sum(square(sub(out, y))), -0.5 / static_cast<double>(rows));
}

Tensor loss_entropy(VaeParams& params, const Batch& target, const Tensor& draws) {
  if (params.config.task != Task::kClassification)
    throw ConfigError("loss_entropy: undefined for regression (gamma is forced to 0)");
  LatentDraw lat = sample_posterior(params, target, draws);
  Tensor probs = softmax_rows(params.classifier_net.forward(lat.n_c));
  Tensor plogp = mul(probs, log(add_const(probs, kLogFloor)));
  return scale(sum(plogp), -1.0 / static_cast<double>(target.rows()));
}

Tensor total_objective(VaeParams& params, const Batch& source, const Batch& target,
                       const Tensor& source_draws, const Tensor& target_draws) {
  Tensor total = loss_mi(params, source, source_draws);
  if (params.config.lambda > 0.0) {
    Tensor elbo = scale(add(loss_elbo(params, source, source_draws),
                            loss_elbo(params, target, target_draws)),
                        0.5);
    total = add(total, scale(elbo, params.config.lambda));
  }
  if (params.config.gamma > 0.0 && params.config.task == Task::kClassification) {
    Tensor ent = loss_entropy(params, target, target_draws);
    total = params.config.entropy_literal_sign
                ? add(total, scale(ent, params.config.gamma))
                : sub(total, scale(ent, params.config.gamma));
  }
  return total;
}

Tensor predict(VaeParams& params, const Tensor& x, const Tensor& u_onehot) {
  auto posterior = encode(params, x, u_onehot);
  Tensor out = params.classifier_net.forward(posterior.first.mean);
  if (params.config.task == Task::kClassification) return softmax_rows(out);
  return add_const(scale(out, params.config.label_std), params.config.label_mean);
}

std::vector<std::vector<double>> posterior_content_mean(VaeParams& params,
                                                        const Tensor& x,
                                                        const Tensor& u_onehot) {
  auto posterior = encode(params, x, u_onehot);
  const Tensor& m = posterior.first.mean;
  std::vector<std::vector<double>> cols(params.config.d_c);
  for (int c = 0; c < params.config.d_c; ++c) {
    cols[c].resize(m.rows());
    for (int r = 0; r < m.rows(); ++r) cols[c][r] = m.data()[r * m.cols() + c];
  }
  return cols;
}

Tensor one_hot(const std::vector<int>& ids, int width) {
  const int rows = static_cast<int>(ids.size());
  std::vector<double> data(static_cast<std::size_t>(rows) * width, 0.0);
  for (int r = 0; r < rows; ++r) {
    if (ids[r] < 0 || ids[r] >= width)
      throw ConfigError("one_hot: index " + std::to_string(ids[r]) + " out of range");
    data[r * width + ids[r]] = 1.0;
  }
  return Tensor::from({rows, width}, std::move(data));
}

// ---------------------------------------------------------------------------
// Checkpoint serialization

namespace {

const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<double>& values) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t chunk = bytes[i] << 16;
    if (i + 1 < bytes.size()) chunk |= bytes[i + 1] << 8;
    if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
    out.push_back(kB64[(chunk >> 18) & 63]);
    out.push_back(kB64[(chunk >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kB64[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kB64[chunk & 63] : '=');
  }
  return out;
}

std::vector<double> base64_decode(const std::string& text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64[i])] = i;
  std::vector<std::uint8_t> bytes;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = lut[static_cast<unsigned char>(c)];
    if (v < 0) throw IoError("invalid base64 payload");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      bytes.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  if (bytes.size() % 8 != 0) throw IoError("base64 payload is not a float64 array");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t b = 0;
    for (int j = 0; j < 8; ++j) b |= static_cast<std::uint64_t>(bytes[i * 8 + j]) << (8 * j);
    std::memcpy(&values[i], &b, 8);
  }
  return values;
}

json config_to_json(const ModelConfig& c) {
  return json{{"d_c", c.d_c},
              {"d_s", c.d_s},
              {"d_x", c.d_x},
              {"num_domains", c.num_domains},
              {"task", c.task == Task::kClassification ? "classification" : "regression"},
              {"num_classes", c.num_classes},
              {"preset", c.preset == Preset::kSynthetic ? "synthetic" : "feature"},
              {"hidden", c.hidden},
              {"beta", c.beta},
              {"lambda", c.lambda},
              {"gamma", c.gamma},
              {"entropy_literal_sign", c.entropy_literal_sign},
              {"label_mean", c.label_mean},
              {"label_std", c.label_std}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_c = j.at("d_c").get<int>();
  c.d_s = j.at("d_s").get<int>();
  c.d_x = j.at("d_x").get<int>();
  c.num_domains = j.at("num_domains").get<int>();
  c.task = j.at("task").get<std::string>() == "classification" ? Task::kClassification
                                                               : Task::kRegression;
  c.num_classes = j.at("num_classes").get<int>();
  c.preset = j.at("preset").get<std::string>() == "synthetic" ? Preset::kSynthetic
                                                              : Preset::kFeature;
  c.hidden = j.at("hidden").get<int>();
  c.beta = j.at("beta").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.entropy_literal_sign = j.at("entropy_literal_sign").get<bool>();
  c.label_mean = j.value("label_mean", 0.0);
  c.label_std = j.value("label_std", 1.0);
  return c;
}

}  // namespace

void save_checkpoint(VaeParams& params, const std::string& path) {
  json doc;
  doc["format_version"] = 1;
  doc["config"] = config_to_json(params.config);
  json entries = json::array();
  auto tensors = params.parameters();
  auto names = params.parameter_names();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    entries.push_back(json{{"name", names[i]},
                           {"shape", tensors[i].shape()},
                           {"data", base64_encode(tensors[i].data())}});
  }
  doc["parameters"] = std::move(entries);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

VaeParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + path + ": " + e.what());
  }
  if (doc.at("format_version").get<int>() != 1)
    throw IoError("unsupported checkpoint format_version");
  VaeParams params = VaeParams::init(config_from_json(doc.at("config")), 0);
  auto tensors = params.parameters();
  auto names = params.parameter_names();
  for (const auto& entry : doc.at("parameters")) {
    const std::string name = entry.at("name").get<std::string>();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw IoError("checkpoint names unknown parameter " + name);
    Tensor& t = tensors[static_cast<std::size_t>(it - names.begin())];
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape != t.shape()) throw IoError("checkpoint shape mismatch for " + name);
    auto values = base64_decode(entry.at("data").get<std::string>());
    if (values.size() != t.size()) throw IoError("checkpoint size mismatch for " + name);
    t.data() = std::move(values);
  }
  return params;
}

}  // namespace lcs::vae
