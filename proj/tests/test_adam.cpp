#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lcs/adam.hpp"
#include "lcs/tensor.hpp"

using namespace lcs;

TEST_CASE("zero gradients leave parameters unchanged") {
  std::vector<Tensor> params = {Tensor::from({2}, {1.5, -2.5}, true)};
  AdamConfig cfg;
  AdamState state;
  adam_step(params, cfg, state);
  CHECK(params[0].data() == std::vector<double>{1.5, -2.5});
  CHECK(state.step_count == 1);
}

TEST_CASE("first step magnitude is approximately lr for nonzero gradient") {
  Tensor x = Tensor::from({1}, {1.0}, true);
  backward(sum(square(x)));  // grad 2
  std::vector<Tensor> params = {x};
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamState state;
  adam_step(params, cfg, state);
  // Bias-corrected first step: lr * g / (|g| + eps') ~= lr.
  CHECK(std::abs(1.0 - params[0].data()[0]) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("two steps on f(x)=x^2 match the hand-executed recurrence") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double x_ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = 2.0 * x_ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    x_ref -= lr * mhat / (std::sqrt(vhat) + eps);
  }

  Tensor x = Tensor::from({1}, {1.0}, true);
  std::vector<Tensor> params = {x};
  AdamConfig cfg;
  cfg.lr = lr;
  AdamState state;
  for (int t = 0; t < 2; ++t) {
    x.zero_grad();
    backward(sum(square(x)));
    adam_step(params, cfg, state);
  }
  CHECK(std::abs(x.data()[0] - x_ref) < 1e-12);
}

TEST_CASE("adam state second moments stay non-negative") {
  Tensor x = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  std::vector<Tensor> params = {x};
  AdamConfig cfg;
  AdamState state;
  for (int t = 0; t < 5; ++t) {
    x.zero_grad();
    backward(sum(square(x)));
    adam_step(params, cfg, state);
  }
  for (double v : state.v[0]) CHECK(v >= 0.0);
}

TEST_CASE("grad_check on x^2 at x=3") {
  std::vector<Tensor> params = {Tensor::from({1}, {3.0}, true)};
  auto f = [](const std::vector<Tensor>& p) { return sum(square(p[0])); };
  CHECK(grad_check(f, params, 1e-5) < 1e-8);
}

TEST_CASE("grad_check rejects eps outside (0, 1e-2]") {
  std::vector<Tensor> params = {Tensor::from({1}, {3.0}, true)};
  auto f = [](const std::vector<Tensor>& p) { return sum(square(p[0])); };
  CHECK_THROWS_AS(grad_check(f, params, 0.5), TensorError);
}

TEST_CASE("grad_check surfaces a non-finite f as an error, not a crash") {
  std::vector<Tensor> params = {Tensor::from({1}, {3.0}, true)};
  auto f = [](const std::vector<Tensor>&) {
    return Tensor::scalar(std::nan(""));
  };
  CHECK_THROWS_AS(grad_check(f, params, 1e-5), TensorError);
}
