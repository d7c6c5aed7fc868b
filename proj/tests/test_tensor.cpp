// Copyright 2026 The lsttts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lsttts/gradcheck.hpp"
#include "lsttts/optim.hpp"
#include "lsttts/tensor.hpp"
#include "support.hpp"

using lsttts::backward;
using lsttts::Rng;
using lsttts::Shape;
using lsttts::TensorD;
using lsttts::TensorT;

namespace {

TensorD randn(Shape shape, Rng& rng, double sd = 1.0) {
  return TensorD::randn(std::move(shape), rng, sd);
}

}  // namespace

TEST_CASE("matmul identity and small products") {
  auto eye = TensorD::from_data({2, 2}, {1, 0, 0, 1});
  auto a = TensorD::from_data({2, 2}, {1, 2, 3, 4});
  auto out = lsttts::matmul(eye, a);
  CHECK(out.values() == std::vector<double>{1, 2, 3, 4});

  auto row = TensorD::from_data({1, 2}, {1, 2});
  auto col = TensorD::from_data({2, 1}, {3, 4});
  CHECK(lsttts::matmul(row, col).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul rejects mismatched shapes with both shapes in the message") {
  auto a = TensorD::zeros({3, 4});
  auto b = TensorD::zeros({5, 2});
  try {
    lsttts::matmul(a, b);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3,4]") != std::string::npos);
    CHECK(msg.find("[5,2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches central finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto a = randn({3, 4}, rng);
    auto b = randn({4, 2}, rng);
    auto report = lsttts::grad_check<double>(
        [&] { return lsttts::sum_all(lsttts::matmul(a, b)); }, {a, b});
    CHECK(report.max_rel_error < 1e-4);
    CHECK(report.checked == 20);
  }
}

TEST_CASE("batched matmul broadcasts a leading batch dim of 1") {
  Rng rng(7);
  auto a = randn({3, 2, 4}, rng);
  auto b = randn({1, 4, 2}, rng);
  auto out = lsttts::matmul(a, b);
  CHECK(out.shape() == Shape{3, 2, 2});
  auto report = lsttts::grad_check<double>(
      [&] { return lsttts::sum_all(lsttts::mul(lsttts::matmul(a, b), lsttts::matmul(a, b))); },
      {a, b});
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("pointwise basics") {
  auto x = TensorD::from_data({3}, {-1, 0, 2});
  CHECK(lsttts::relu(x).values() == std::vector<double>{0, 0, 2});
  CHECK(lsttts::sigmoid(TensorD::scalar(0)).item() == doctest::Approx(0.5));
  CHECK(lsttts::tanh_op(TensorD::scalar(0)).item() == doctest::Approx(0.0));
}

TEST_CASE("log rejects nonpositive input") {
  CHECK_THROWS_AS(lsttts::log_op(TensorD::from_data({2}, {1.0, 0.0})), std::invalid_argument);
  CHECK_THROWS_AS(lsttts::log_op(TensorD::from_data({1}, {-2.0})), std::invalid_argument);
}

TEST_CASE("broadcast add backward sums over the broadcast axis") {
  Rng rng(3);
  auto small = randn({3, 1, 4}, rng);
  auto big = randn({3, 5, 4}, rng);
  auto out = lsttts::add(small, big);
  CHECK(out.shape() == Shape{3, 5, 4});
  small.set_requires_grad(true);
  auto loss = lsttts::sum_all(lsttts::add(small, big));
  backward(loss);
  // d(sum)/d(small[i,0,k]) = number of broadcast copies = 5
  for (double g : small.grad()) CHECK(g == doctest::Approx(5.0));

  // and the same through the finite-difference oracle on a nonlinear head
  auto report = lsttts::grad_check<double>(
      [&] {
        auto z = lsttts::mul(lsttts::add(small, big), lsttts::add(small, big));
        return lsttts::sum_all(z);
      },
      {small});
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("pointwise ops match finite differences over 5 seeds") {
  for (std::uint64_t seed = 11; seed <= 15; ++seed) {
    Rng rng(seed);
    auto a = randn({4, 3}, rng);
    auto b = randn({4, 3}, rng);
    auto c = randn({3}, rng);  // broadcast operand
    auto report = lsttts::grad_check<double>(
        [&] {
          auto t = lsttts::mul(lsttts::sigmoid(a), lsttts::tanh_op(b));
          t = lsttts::add(t, c);
          t = lsttts::sub(t, lsttts::scale(b, 0.5));
          t = lsttts::mul(t, t);
          return lsttts::mean_all(t);
        },
        {a, b, c});
    CHECK(report.max_rel_error < 1e-4);
  }
  // exp/log path on positive inputs
  for (std::uint64_t seed = 21; seed <= 25; ++seed) {
    Rng rng(seed);
    auto a = TensorD::rand_uniform({5}, rng, 0.5, 2.0);
    auto report = lsttts::grad_check<double>(
        [&] { return lsttts::sum_all(lsttts::log_op(lsttts::exp_op(lsttts::mul(a, a)))); }, {a});
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("softmax of uniform logits and extreme logits") {
  auto u = lsttts::softmax(TensorD::from_data({3}, {0, 0, 0}), 0);
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0));

  auto big = lsttts::softmax(TensorD::from_data({2}, {1000, 0}), 0);
  CHECK(big.values()[0] == doctest::Approx(1.0));
  CHECK(big.values()[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(big.values()[0]));
}

TEST_CASE("softmax rows sum to 1 and are nonnegative") {
  Rng rng(5);
  auto x = randn({4, 7}, rng, 3.0);
  auto y = lsttts::softmax(x, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(y.at({r, c}) >= 0.0);
      sum += y.at({r, c});
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("softmax jacobian-vector product matches finite differences") {
  for (std::uint64_t seed = 31; seed <= 35; ++seed) {
    Rng rng(seed);
    auto x = randn({5}, rng);
    auto r = randn({5}, rng);  // random probe direction, constant
    auto report = lsttts::grad_check<double>(
        [&] { return lsttts::sum_all(lsttts::mul(lsttts::softmax(x, 0), r)); }, {x});
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("layer_norm collapses constant rows and honors the affine") {
  auto x = TensorD::from_data({1, 3}, {5, 5, 5});
  auto gamma = TensorD::from_data({3}, {1, 1, 1});
  auto beta = TensorD::zeros({3});
  auto y = lsttts::layer_norm(x, gamma, beta);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.0));

  auto gamma0 = TensorD::zeros({3});
  auto beta_b = TensorD::from_data({3}, {2.5, -1.0, 0.25});
  Rng rng(9);
  auto x2 = randn({4, 3}, rng);
  auto y2 = lsttts::layer_norm(x2, gamma0, beta_b);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(y2.at({r, c}) == doctest::Approx(beta_b.values()[c]));
}

TEST_CASE("layer_norm gradient wrt x, gamma, beta matches finite differences") {
  for (std::uint64_t seed = 41; seed <= 45; ++seed) {
    Rng rng(seed);
    auto x = randn({3, 4}, rng);
    auto gamma = randn({4}, rng, 0.5);
    auto beta = randn({4}, rng, 0.5);
    auto probe = randn({3, 4}, rng);
    auto report = lsttts::grad_check<double>(
        [&] {
          return lsttts::sum_all(lsttts::mul(lsttts::layer_norm(x, gamma, beta), probe));
        },
        {x, gamma, beta});
    CHECK(report.max_rel_error < 1e-4);
  }
  CHECK_THROWS_AS(
      lsttts::layer_norm(TensorD::zeros({2, 3}), TensorD::zeros({4}), TensorD::zeros({4})),
      std::invalid_argument);
}

TEST_CASE("reductions") {
  auto x = TensorD::from_data({2, 2}, {1, 3, 3, 5});
  auto m = lsttts::mean_axis(x, 0);
  CHECK(m.values() == std::vector<double>{2, 4});

  auto a = TensorD::from_data({4}, {1, 2, 3, 4});
  a.set_requires_grad(true);
  backward(lsttts::sum_all(a));
  for (double g : a.grad()) CHECK(g == doctest::Approx(1.0));
  a.clear_grad();
  backward(lsttts::mean_all(a));
  for (double g : a.grad()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("l1 loss values and masking oracle") {
  auto p = TensorD::from_data({2}, {1, 2});
  auto t = TensorD::from_data({2}, {0, 0});
  CHECK(lsttts::l1_loss(p, t).item() == doctest::Approx(1.5));
  CHECK(lsttts::l1_loss(t, t).item() == doctest::Approx(0.0));

  // masked loss equals the unmasked loss recomputed on the kept frames only
  Rng rng(17);
  auto pred = randn({6, 3}, rng);
  auto target = randn({6, 3}, rng);
  auto mask = TensorD::from_data({6, 1}, {1, 1, 1, 0, 0, 0});
  const double masked = lsttts::l1_loss(pred, target, &mask).item();
  double manual = 0;
  for (std::size_t i = 0; i < 9; ++i)
    manual += std::abs(pred.values()[i] - target.values()[i]);
  CHECK(masked == doctest::Approx(manual / 9.0));

  auto zero_mask = TensorD::zeros({6, 1});
  CHECK_THROWS_AS(lsttts::l1_loss(pred, target, &zero_mask), std::runtime_error);
}

TEST_CASE("l1 loss gradient away from ties") {
  for (std::uint64_t seed = 51; seed <= 55; ++seed) {
    Rng rng(seed);
    auto p = randn({5}, rng);
    auto t = randn({5}, rng);
    auto report = lsttts::grad_check<double>([&] { return lsttts::l1_loss(p, t); }, {p});
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("bce with logits: exact values and pos_weight scaling") {
  auto z = TensorD::scalar(0);
  auto one = TensorD::scalar(1);
  CHECK(lsttts::bce_with_logits(z, one, 1.0).item() == doctest::Approx(std::log(2.0)));

  auto sat = TensorD::scalar(20);
  CHECK(lsttts::bce_with_logits(sat, one, 1.0).item() == doctest::Approx(0.0).epsilon(1e-6));

  // pos_weight scales the target-1 term exactly (direct recomputation)
  Rng rng(23);
  auto logits = randn({8}, rng);
  auto targets = TensorD::from_data({8}, {1, 0, 1, 0, 1, 1, 0, 0});
  const double w = 6.0;
  const double got = lsttts::bce_with_logits(logits, targets, w).item();
  double manual = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double x = logits.values()[i], y = targets.values()[i];
    const double sp_neg = x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
    const double sp_pos = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    manual += w * y * sp_neg + (1 - y) * sp_pos;
  }
  CHECK(got == doctest::Approx(manual / 8.0));

  auto zero_mask = TensorD::zeros({8});
  CHECK_THROWS_AS(lsttts::bce_with_logits(logits, targets, 1.0, &zero_mask), std::runtime_error);
}

TEST_CASE("bce with logits gradient matches finite differences") {
  for (std::uint64_t seed = 61; seed <= 65; ++seed) {
    Rng rng(seed);
    auto logits = randn({6}, rng);
    auto targets = TensorD::from_data({6}, {1, 0, 0, 1, 1, 0});
    auto mask = TensorD::from_data({6}, {1, 1, 1, 1, 0, 1});
    auto report = lsttts::grad_check<double>(
        [&] { return lsttts::bce_with_logits(logits, targets, 6.0, &mask); }, {logits});
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("backward on linear graphs and fan-out accumulation") {
  auto x = TensorD::scalar(3);
  x.set_requires_grad(true);
  backward(lsttts::scale(x, 2.0));
  CHECK(x.grad()[0] == doctest::Approx(2.0));

  x.clear_grad();
  backward(lsttts::add(x, x));
  CHECK(x.grad()[0] == doctest::Approx(2.0));

  // fan-out n times equals the sum of n single-use grads
  for (int n : {2, 3}) {
    Rng rng(70 + std::uint64_t(n));
    auto v = randn({4}, rng);
    v.set_requires_grad(true);

    auto single = lsttts::sum_all(lsttts::mul(v, v));
    v.clear_grad();
    backward(single);
    auto base = v.grad();

    v.clear_grad();
    auto acc = lsttts::sum_all(lsttts::mul(v, v));
    for (int i = 1; i < n; ++i) acc = lsttts::add(acc, lsttts::sum_all(lsttts::mul(v, v)));
    backward(acc);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(v.grad()[i] == doctest::Approx(double(n) * base[i]));
  }
}

TEST_CASE("backward rejects non-scalar losses") {
  auto x = TensorD::zeros({2, 2});
  x.set_requires_grad(true);
  CHECK_THROWS_AS(backward(lsttts::add(x, x)), std::invalid_argument);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  lsttts::ParamSetT<double> params;
  auto theta = TensorD::from_data({3}, {1.0, -2.0, 0.5});
  theta.set_requires_grad(true);
  params.add("theta", theta);
  lsttts::AdamT<double> adam(params, {});
  theta.node()->ensure_grad();  // populated, all zeros
  adam.step(params);
  CHECK(theta.values() == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("adam: bias-corrected first step moves by about lr") {
  lsttts::ParamSetT<double> params;
  auto theta = TensorD::scalar(1.0);
  theta.set_requires_grad(true);
  params.add("theta", theta);
  lsttts::AdamConfigT<double> cfg;
  cfg.lr = 2e-4;
  cfg.clip_norm = 0;  // keep the raw g = 1
  lsttts::AdamT<double> adam(params, cfg);
  theta.node()->ensure_grad();
  theta.node()->grad[0] = 1.0;
  adam.step(params);
  CHECK(theta.item() == doctest::Approx(1.0 - 2e-4).epsilon(1e-6));
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam: 10 steps on theta^2 strictly decrease the objective") {
  lsttts::ParamSetT<double> params;
  auto theta = TensorD::scalar(1.0);
  theta.set_requires_grad(true);
  params.add("theta", theta);
  lsttts::AdamConfigT<double> cfg;
  cfg.lr = 0.05;
  lsttts::AdamT<double> adam(params, cfg);
  double prev = 1.0;
  for (int i = 0; i < 10; ++i) {
    auto loss = lsttts::mul(theta, theta);
    backward(loss);
    adam.step(params);
    const double f = theta.item() * theta.item();
    CHECK(f < prev);
    prev = f;
  }
}

TEST_CASE("adam: missing gradient is an error naming the parameter") {
  lsttts::ParamSetT<double> params;
  auto a = TensorD::scalar(1.0);
  a.set_requires_grad(true);
  params.add("left.weight", a);
  lsttts::AdamT<double> adam(params, {});
  try {
    adam.step(params);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("left.weight") != std::string::npos);
  }
}

TEST_CASE("grad_check: exact on linear functions, reports ties as excluded") {
  Rng rng(99);
  auto x = randn({6}, rng);
  auto report = lsttts::grad_check<double>([&] { return lsttts::sum_all(x); }, {x});
  CHECK(report.max_rel_error < 1e-10);
  CHECK(report.excluded.empty());

  // l1 at an exact tie: the tied coordinate is excluded, not failed
  auto p = TensorD::from_data({3}, {1.0, 2.0, 3.0});
  auto t = TensorD::from_data({3}, {1.0, 0.0, 0.0});
  auto rep2 = lsttts::grad_check<double>([&] { return lsttts::l1_loss(p, t); }, {p});
  CHECK(rep2.excluded.size() == 1);
  CHECK(rep2.excluded[0].second == 0);
  CHECK(rep2.max_rel_error < 1e-4);
}

TEST_CASE("engine determinism: same seed, bitwise-identical results") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = TensorT<float>::randn({8, 8}, rng);
    auto b = TensorT<float>::randn({8, 8}, rng);
    auto z = lsttts::softmax(lsttts::matmul(a, b), 1);
    return z.values();
  };
  CHECK(run(123) == run(123));
}

TEST_CASE("shape bookkeeping invariants") {
  auto t = TensorD::zeros({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(lsttts::numel(t.shape()) == t.size());
  CHECK(t.node_id() > 0);
  auto u = TensorD::zeros({2});
  CHECK(u.node_id() != t.node_id());

  // grad buffer mirrors the value shape once populated
  auto x = TensorD::zeros({3, 2});
  x.set_requires_grad(true);
  backward(lsttts::sum_all(x));
  CHECK(x.grad().size() == x.size());
}
