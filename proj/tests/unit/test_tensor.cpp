// Copyright 2026 The patchasd Authors.
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

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "patchasd/autodiff.hpp"
#include "test_util.hpp"

using namespace patchasd;
using patchasd::testing::random_tensor;

namespace {

// sum(op(x) * w) with a fixed random weighting, so no output direction is
// left unchecked (plain sum of a softmax would be constant).
double check_unary(const std::function<Var(Var)>& op, Tensor x, Rng& rng, double h = 1e-6) {
  Tape probe;
  const Shape out_shape = op(probe.constant(x)).shape();
  const Tensor w = random_tensor(out_shape, rng);
  ScalarFn f = [&](Tape& tape, std::span<const Var> p) {
    return ad::sum(ad::mul(op(p[0]), tape.constant(w)));
  };
  std::vector<Tensor> params{std::move(x)};
  const auto vg = value_and_grad(f, params);
  const auto fd = finite_diff_grad(f, params, h);
  return max_relative_error(vg.grads, fd);
}

double check_binary(const std::function<Var(Var, Var)>& op, Tensor a, Tensor b, Rng& rng) {
  Tape probe;
  const Shape out_shape = op(probe.constant(a), probe.constant(b)).shape();
  const Tensor w = random_tensor(out_shape, rng);
  ScalarFn f = [&](Tape& tape, std::span<const Var> p) {
    return ad::sum(ad::mul(op(p[0], p[1]), tape.constant(w)));
  };
  std::vector<Tensor> params{std::move(a), std::move(b)};
  const auto vg = value_and_grad(f, params);
  const auto fd = finite_diff_grad(f, params, 1e-6);
  return max_relative_error(vg.grads, fd);
}

Tensor positive(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = uniform(rng, 0.5, 2.0);
  return t;
}

}  // namespace

TEST_CASE("value_and_grad of sum") {
  ScalarFn f = [](Tape&, std::span<const Var> p) { return ad::sum(p[0]); };
  std::vector<Tensor> x{Tensor::vector({1, 2, 3})};
  const auto vg = value_and_grad(f, x);
  CHECK(vg.value == 6.0);
  CHECK(vg.grads[0] == Tensor::vector({1, 1, 1}));
}

TEST_CASE("value_and_grad of x.x at zero") {
  ScalarFn f = [](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(p[0], p[0])); };
  std::vector<Tensor> x{Tensor::vector({0})};
  const auto vg = value_and_grad(f, x);
  CHECK(vg.value == 0.0);
  CHECK(vg.grads[0] == Tensor::vector({0}));
}

TEST_CASE("three-layer MLP gradient matches finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor input = random_tensor({4, 5}, rng);
    std::vector<Tensor> params{
        random_tensor({5, 6}, rng, 0.5), random_tensor({6}, rng, 0.1),
        random_tensor({6, 6}, rng, 0.5), random_tensor({6}, rng, 0.1),
        random_tensor({6, 1}, rng, 0.5), random_tensor({1}, rng, 0.1)};
    ScalarFn f = [&](Tape& tape, std::span<const Var> p) {
      Var h = tape.constant(input);
      h = ad::tanh(ad::add_row(ad::matmul(h, p[0]), p[1]));
      h = ad::gelu(ad::add_row(ad::matmul(h, p[2]), p[3]));
      h = ad::add_row(ad::matmul(h, p[4]), p[5]);
      return ad::sum(ad::square(h));
    };
    const auto vg = value_and_grad(f, params);
    const auto fd = finite_diff_grad(f, params, 1e-6);
    CHECK(max_relative_error(vg.grads, fd) < 1e-4);
    CHECK(vg.value == evaluate(f, params));
  }
}

TEST_CASE("finite_diff_grad examples") {
  ScalarFn sq = [](Tape&, std::span<const Var> p) { return ad::sum(ad::square(p[0])); };
  std::vector<Tensor> x{Tensor::vector({2.0})};
  CHECK(std::abs(finite_diff_grad(sq, x, 1e-6)[0][0] - 4.0) < 1e-6);

  ScalarFn s = [](Tape&, std::span<const Var> p) { return ad::sum(p[0]); };
  Rng rng(1);
  std::vector<Tensor> y{random_tensor({3, 4}, rng, 10.0)};
  const auto gy = finite_diff_grad(s, y, 1e-6);
  for (double g : gy[0].data()) CHECK(g == doctest::Approx(1.0).epsilon(1e-8));

  CHECK_THROWS_AS(finite_diff_grad(s, y, 0.0), Error);
  CHECK_THROWS_AS(finite_diff_grad(s, y, -1e-3), Error);

  ScalarFn lg = [](Tape&, std::span<const Var> p) { return ad::sum(ad::log(p[0])); };
  std::vector<Tensor> z{Tensor::vector({0.0})};
  CHECK_THROWS_AS(finite_diff_grad(lg, z, 1e-6), Error);
}

TEST_CASE("every primitive matches finite differences") {
  Rng rng(2024);
  const auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
  for (int trial = 0; trial < 3; ++trial) {
    CHECK(check_binary(ad::matmul, r({3, 4}), r({4, 2}), rng) < 1e-4);
    CHECK(check_unary(ad::transpose, r({3, 4}), rng) < 1e-4);
    CHECK(check_binary(ad::add, r({3, 4}), r({3, 4}), rng) < 1e-4);
    CHECK(check_binary(ad::sub, r({3, 4}), r({3, 4}), rng) < 1e-4);
    CHECK(check_binary(ad::mul, r({3, 4}), r({3, 4}), rng) < 1e-4);
    CHECK(check_binary(ad::add_row, r({3, 4}), r({4}), rng) < 1e-4);
    CHECK(check_binary(ad::mul_row, r({3, 4}), r({4}), rng) < 1e-4);
    CHECK(check_binary(ad::mul_col, r({3, 4}), r({3}), rng) < 1e-4);
    CHECK(check_unary([](Var a) { return ad::scale(a, -2.5); }, r({5}), rng) < 1e-4);
    CHECK(check_unary([](Var a) { return ad::add_scalar(a, 3.0); }, r({5}), rng) < 1e-4);
    CHECK(check_unary(ad::reciprocal, positive({5}, rng), rng) < 1e-4);
    CHECK(check_unary(ad::square, r({5}), rng) < 1e-4);
    CHECK(check_unary(ad::sqrt, positive({5}, rng), rng) < 1e-4);
    CHECK(check_unary(ad::exp, r({5}), rng) < 1e-4);
    CHECK(check_unary(ad::log, positive({5}, rng), rng) < 1e-4);
    CHECK(check_unary(ad::tanh, r({5}), rng) < 1e-4);
    CHECK(check_unary(ad::gelu, r({3, 5}), rng) < 1e-4);
    CHECK(check_unary([](Var a) { return ad::clamp(a, -0.7, 0.7); }, r({6}), rng) < 1e-4);
    Tensor c({6});
    for (auto& v : c.data()) v = uniform(rng, -0.95, 0.95);
    CHECK(check_unary(ad::arccos_clamped, c, rng) < 1e-4);
    CHECK(check_unary([](Var a) { return ad::softmax(a, 0); }, r({4, 3}), rng) < 1e-4);
    CHECK(check_unary([](Var a) { return ad::softmax(a, 1); }, r({4, 3}), rng) < 1e-4);
    CHECK(check_unary(ad::logsumexp_rows, r({4, 3}), rng) < 1e-4);
    {
      const Tensor g = r({5}), b = r({5});
      CHECK(check_unary([&](Var a) {
              Tape& t = a.tape();
              return ad::layer_norm(a, t.constant(g), t.constant(b));
            }, r({3, 5}), rng) < 1e-4);
      CHECK(check_binary([&](Var gamma, Var beta) {
              return ad::layer_norm(gamma.tape().constant(Tensor::matrix(2, 5, {1, 2, 3, 4, 6, -1, 0, 2, 1, 5})),
                                    gamma, beta);
            }, g, b, rng) < 1e-4);
    }
    CHECK(check_unary(ad::sum, r({3, 2}), rng) < 1e-4);
    CHECK(check_unary(ad::mean, r({3, 2}), rng) < 1e-4);
    CHECK(check_unary(ad::sum_rows, r({3, 2}), rng) < 1e-4);
    CHECK(check_unary(ad::sum_cols, r({3, 2}), rng) < 1e-4);
    CHECK(check_unary([](Var a) { return ad::slice_cols(a, 1, 2); }, r({3, 5}), rng) < 1e-4);
    CHECK(check_binary([](Var a, Var b) {
            const std::vector<Var> parts{a, b};
            return ad::concat_cols(parts);
          }, r({3, 2}), r({3, 4}), rng) < 1e-4);
    CHECK(check_binary([](Var a, Var b) {
            const std::vector<Var> parts{a, b};
            return ad::concat_rows(parts);
          }, r({2, 3}), r({4, 3}), rng) < 1e-4);
    CHECK(check_unary([](Var a) { return ad::reshape(a, {3, 4}); }, r({2, 6}), rng) < 1e-4);
    CHECK(check_unary([](Var a) { return ad::gather_rows(a, {2, 0, 2, 1}); }, r({3, 4}), rng) < 1e-4);
    const std::vector<std::size_t> cols{1, 0, 3};
    CHECK(check_unary([&](Var a) { return ad::pick(a, cols); }, r({3, 4}), rng) < 1e-4);
    CHECK(check_unary([&](Var a) { return ad::scatter_onehot(a, cols, 5); }, r({3}), rng) < 1e-4);
    {
      const Tensor k = r({5, 4}), v = r({5, 4});
      CHECK(check_unary([&](Var q) {
              Tape& t = q.tape();
              return ad::multi_head_attention(q, t.constant(k), t.constant(v), 2);
            }, r({5, 4}), rng) < 1e-4);
    }
  }
}

TEST_CASE("multi_head_attention agrees with the composed primitive route") {
  Rng rng(99);
  for (std::size_t heads : {1u, 2u, 4u}) {
    const std::size_t n = 7, d = 8, dh = d / heads;
    std::vector<Tensor> params{random_tensor({n, d}, rng), random_tensor({n, d}, rng),
                               random_tensor({n, d}, rng)};
    const Tensor w = random_tensor({n, d}, rng);
    ScalarFn fused = [&](Tape& tape, std::span<const Var> p) {
      return ad::sum(ad::mul(ad::multi_head_attention(p[0], p[1], p[2], heads), tape.constant(w)));
    };
    ScalarFn composed = [&](Tape& tape, std::span<const Var> p) {
      std::vector<Var> outs;
      for (std::size_t h = 0; h < heads; ++h) {
        Var q = ad::slice_cols(p[0], h * dh, dh);
        Var k = ad::slice_cols(p[1], h * dh, dh);
        Var v = ad::slice_cols(p[2], h * dh, dh);
        Var logits = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(double(dh)));
        outs.push_back(ad::matmul(ad::softmax(logits, 1), v));
      }
      return ad::sum(ad::mul(ad::concat_cols(outs), tape.constant(w)));
    };
    const auto a = value_and_grad(fused, params);
    const auto b = value_and_grad(composed, params);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
    CHECK(max_relative_error(a.grads, b.grads) < 1e-12);
  }
}

TEST_CASE("shape errors name the op and the shapes") {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({2, 3}));
  try {
    ad::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::add(a, tape.constant(Tensor::zeros({3, 2}))), ShapeError);
  CHECK_THROWS_AS(ad::add_row(a, tape.constant(Tensor::zeros({2}))), ShapeError);
  CHECK_THROWS_AS(ad::multi_head_attention(a, a, a, 2), Error);
  CHECK_THROWS_AS(ad::reshape(a, {4, 2}), ShapeError);
}

TEST_CASE("gradient shapes match parameters and the forward is deterministic") {
  Rng rng(3);
  std::vector<Tensor> params{random_tensor({4, 3}, rng), random_tensor({3}, rng)};
  ScalarFn f = [](Tape&, std::span<const Var> p) {
    return ad::mean(ad::gelu(ad::add_row(p[0], p[1])));
  };
  const auto a = value_and_grad(f, params);
  const auto b = value_and_grad(f, params);
  REQUIRE(a.grads.size() == 2);
  CHECK(a.grads[0].shape() == params[0].shape());
  CHECK(a.grads[1].shape() == params[1].shape());
  CHECK(a.value == b.value);
  CHECK(a.grads[0] == b.grads[0]);
  CHECK(a.grads[1] == b.grads[1]);
}

TEST_CASE("arccos is clamped away from the endpoints") {
  Tape tape;
  Var x = tape.parameter(Tensor::vector({1.0, -1.0, 0.0}));
  Var y = ad::arccos_clamped(x);
  Var s = ad::sum(y);
  tape.backward(s);
  const Tensor g = tape.grad(x);
  CHECK(g.all_finite());
  CHECK(y.value()[0] == doctest::Approx(std::acos(1.0 - ad::kArccosClamp)).epsilon(1e-15));
  CHECK(y.value()[2] == doctest::Approx(M_PI / 2));
}

TEST_CASE("tapes are single use") {
  Tape tape;
  Var x = tape.parameter(Tensor::vector({1.0}));
  Var s = ad::sum(x);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), Error);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
  t[1] = std::nan("");
  CHECK_FALSE(t.all_finite());
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS_AS(Tensor::vector({1, 2}).item(), Error);
}
