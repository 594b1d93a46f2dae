#include "lcs/adam.hpp"

#include <cmath>
#include <string>

namespace lcs {

void adam_step(std::vector<Tensor>& params, const AdamConfig& cfg, AdamState& state) {
  if (cfg.lr <= 0.0) throw TensorError("adam_step: lr must be positive");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), 0.0);
      state.v[i].assign(params[i].size(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw TensorError("adam_step: state tracks " + std::to_string(state.m.size()) +
                      " params, got " + std::to_string(params.size()));

  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data();
    if (state.m[i].size() != p.size())
      throw TensorError("adam_step: shape mismatch for param " + std::to_string(i));
    const auto& g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = j < g.size() ? g[j] : 0.0;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  std::vector<Tensor>& params, double eps) {
  if (eps <= 0.0 || eps > 1e-2) throw TensorError("grad_check: eps must be in (0, 1e-2]");

  for (auto& p : params) p.zero_grad();
  Tensor out = f(params);
  if (!std::isfinite(out.item()))
    throw TensorError("grad_check: f is non-finite at the evaluation point");
  backward(out);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    auto g = p.grad();
    g.resize(p.size(), 0.0);
    analytic.push_back(std::move(g));
  }

  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& data = params[i].data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + eps;
      const double fp = f(params).item();
      data[j] = saved - eps;
      const double fm = f(params).item();
      data[j] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw TensorError("grad_check: f is non-finite at a perturbed point");
      const double fd = (fp - fm) / (2.0 * eps);
      const double a = analytic[i][j];
      const double rel = std::abs(a - fd) / std::max(1.0, std::abs(a));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace lcs
