// Copyright 2026 The claip-emo Authors. All Rights Reserved.
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
#include <limits>
#include <random>
#include <vector>

#include <doctest.h>

#include "claip/autodiff.hpp"
#include "claip/error.hpp"
#include "claip/ops.hpp"
#include "oracles.hpp"

using namespace claip;
using T64 = Tensor<double>;

namespace {

T64 random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  T64 t(std::move(shape));
  fill_normal(t, scale, rng);
  return t;
}

// Checks d/dx sum(w * f(x)) against central differences for every entry of every input.
void check_op_gradient(std::vector<T64> inputs, const std::function<Var<double>(std::vector<Var<double>>&)>& f,
                       double tol, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  for (auto& t : inputs) t.set_requires_grad(true);
  T64 weights;
  auto loss_value = [&](bool keep) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (auto& t : inputs) vars.push_back(tape.parameter(t));
    Var<double> y = f(vars);
    if (weights.empty()) weights = random_tensor(y.shape(), rng);
    Var<double> loss = ops::sum(ops::mul(y, tape.constant(weights)));
    if (keep) tape.backward(loss);
    return loss.value().item();
  };
  loss_value(true);
  for (auto& t : inputs) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double analytic = t.grad()[i];
      const double numeric = oracle::central_difference([&] { return loss_value(false); }, t[i]);
      CHECK(oracle::rel_error(analytic, numeric) < tol);
    }
  }
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("tensor shape invariants") {
    Tensor<float> t(Shape{2, 3, 4});
    CHECK(t.size() == numel(t.shape()));
    CHECK_THROWS_AS(t.reshaped(Shape{5, 5}), ShapeError);
    CHECK_THROWS_AS(t.ensure_grad(), StateError);
    t.set_requires_grad(true);
    CHECK(t.ensure_grad().size() == t.size());
    t.set_requires_grad(false);
    CHECK_FALSE(t.has_grad());
  }

  TEST_CASE("matmul by identity and by hand") {
    Tape<double> tape;
    auto eye = tape.constant(T64(Shape{2, 2}, {1, 0, 0, 1}));
    auto m = tape.constant(T64(Shape{2, 2}, {3, 0, 0, 1}));
    CHECK(bitwise_equal(ops::matmul(eye, m).value(), T64(Shape{2, 2}, {3, 0, 0, 1})));
    auto row = tape.constant(T64(Shape{1, 2}, {1, 2}));
    auto col = tape.constant(T64(Shape{2, 1}, {3, 4}));
    const auto prod = ops::matmul(row, col).value();
    CHECK(prod.shape() == Shape{1, 1});
    CHECK(prod[0] == 11.0);
  }

  TEST_CASE("matmul shape mismatch names both shapes") {
    Tape<double> tape;
    auto a = tape.constant(T64(Shape{2, 3}));
    auto b = tape.constant(T64(Shape{2, 3}));
    try {
      ops::matmul(a, b);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.rfind("[2x3]") != msg.find("[2x3]"));
    }
  }

  TEST_CASE("matmul gradient against central differences") {
    std::mt19937_64 rng(11);
    T64 a = random_tensor({3, 3}, rng), b = random_tensor({3, 3}, rng);
    a.set_requires_grad(true);
    Tape<double> tape;
    auto av = tape.parameter(a);
    auto bv = tape.constant(b);
    tape.backward(ops::sum(ops::matmul(av, bv)));
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto f = [&] {
        Tape<double> t2;
        return ops::sum(ops::matmul(t2.constant(a), t2.constant(b))).value().item();
      };
      const double numeric = oracle::central_difference(f, a[i]);
      CHECK(oracle::rel_error(a.grad()[i], numeric) < 1e-6);
    }
  }

  TEST_CASE("softmax of uniform logits and row normalization") {
    Tape<double> tape;
    const auto p = ops::softmax(tape.constant(T64(Shape{1, 7})), 1).value();
    for (std::size_t i = 0; i < 7; ++i) CHECK(p[i] == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    std::mt19937_64 rng(5);
    const auto q = ops::softmax(tape.constant(random_tensor({4, 9}, rng, 10.0)), 1).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 9; ++c) s += q.at(r, c);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(ops::softmax(tape.constant(T64(Shape{2, 2})), 2), AxisError);
  }

  TEST_CASE("layer norm of a constant vector is zero") {
    Tape<double> tape;
    const auto y = ops::layer_norm(tape.constant(T64(Shape{1, 6}, 3.5))).value();
    for (double v : y.data()) CHECK(v == 0.0);
  }

  TEST_CASE("mean over rows") {
    Tape<double> tape;
    const auto m = ops::mean(tape.constant(T64(Shape{2, 2}, {1, 0, 0, 1})), 0).value();
    CHECK(m.shape() == Shape{2});
    CHECK(m[0] == 0.5);
    CHECK(m[1] == 0.5);
    CHECK_THROWS_AS(ops::mean(tape.constant(T64(Shape{2, 2})), 2), AxisError);
  }

  TEST_CASE("dropout is identity in eval and inverted in training") {
    std::mt19937_64 rng(1);
    Tape<double> tape;
    T64 x(Shape{1000}, 1.0);
    const auto eval = ops::dropout(tape.constant(x), 0.25, false, rng).value();
    CHECK(bitwise_equal(eval, x));
    const auto tr = ops::dropout(tape.constant(x), 0.25, true, rng).value();
    std::size_t kept = 0;
    for (double v : tr.data()) {
      CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12));
      kept += v != 0.0;
    }
    CHECK(kept > 650);
    CHECK(kept < 850);
    CHECK_THROWS_AS(ops::dropout(tape.constant(x), 1.0, true, rng), ConfigError);
  }

  TEST_CASE("NaN propagates through every op") {
    Tape<double> tape;
    T64 x(Shape{1, 3}, {1.0, std::numeric_limits<double>::quiet_NaN(), 2.0});
    auto v = tape.constant(x);
    CHECK(std::isnan(ops::gelu(v).value()[1]));
    CHECK(std::isnan(ops::sigmoid(v).value()[1]));
    CHECK(std::isnan(ops::softmax(v, 1).value()[0]));
    CHECK(std::isnan(ops::layer_norm(v).value()[0]));
    CHECK(std::isnan(ops::mean(v, 1).value()[0]));
  }

  TEST_CASE("backward of simple sums") {
    T64 x(Shape{3}, {0.5, -1.0, 2.0});
    x.set_requires_grad(true);
    Tape<double> tape;
    tape.backward(ops::sum(tape.parameter(x)));
    for (double g : x.grad()) CHECK(g == 1.0);

    T64 y(Shape{2}, {1.0, 2.0});
    y.set_requires_grad(true);
    Tape<double> t2;
    auto yv = t2.parameter(y);
    t2.backward(ops::sum(ops::mul(yv, yv)));
    CHECK(y.grad()[0] == 2.0);
    CHECK(y.grad()[1] == 4.0);
  }

  TEST_CASE("backward rejects non-scalar losses and a second call") {
    T64 x(Shape{3}, 1.0);
    x.set_requires_grad(true);
    Tape<double> tape;
    auto xv = tape.parameter(x);
    CHECK_THROWS_AS(tape.backward(ops::scale(xv, 2.0)), ShapeError);
    auto loss = ops::sum(xv);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), StateError);
  }

  TEST_CASE("frozen tensors never receive a gradient buffer") {
    T64 w(Shape{2, 2}, {1, 2, 3, 4});
    T64 x(Shape{2, 2}, {1, 1, 1, 1});
    x.set_requires_grad(true);
    Tape<double> tape;
    tape.backward(ops::sum(ops::matmul(tape.parameter(x), tape.parameter(w))));
    CHECK(x.has_grad());
    CHECK_FALSE(w.has_grad());
  }

  TEST_CASE("replayed adjoints equal a fresh rebuild") {
    std::mt19937_64 rng(7);
    T64 a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    auto run = [&] {
      a.clear_grad();
      b.clear_grad();
      Tape<double> tape;
      auto h = ops::gelu(ops::matmul(tape.parameter(a), tape.parameter(b)));
      tape.backward(ops::sum(ops::softmax(ops::layer_norm(h), 1)));
      return std::make_pair(std::vector<double>(a.grad().begin(), a.grad().end()),
                            std::vector<double>(b.grad().begin(), b.grad().end()));
    };
    const auto first = run();
    const auto second = run();
    for (std::size_t i = 0; i < first.first.size(); ++i) CHECK(std::abs(first.first[i] - second.first[i]) <= 1e-12);
    for (std::size_t i = 0; i < first.second.size(); ++i)
      CHECK(std::abs(first.second[i] - second.second[i]) <= 1e-12);
  }

  TEST_CASE("forward is bitwise deterministic") {
    std::mt19937_64 r1(9), r2(9);
    const T64 a = random_tensor({3, 8}, r1), b = random_tensor({3, 8}, r2);
    CHECK(bitwise_equal(a, b));
    Tape<double> t1, t2;
    CHECK(bitwise_equal(ops::gelu(ops::layer_norm(t1.constant(a))).value(),
                        ops::gelu(ops::layer_norm(t2.constant(b))).value()));
  }

  TEST_CASE("elementwise suite gradients match central differences") {
    std::mt19937_64 rng(21);
    using Vars = std::vector<Var<double>>;
    SUBCASE("add, sub, mul, scale") {
      check_op_gradient({random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}, [](Vars& v) {
        return ops::scale(ops::mul(ops::add(v[0], v[1]), ops::sub(v[0], v[1])), 0.7);
      }, 1e-7);
    }
    SUBCASE("gelu and sigmoid") {
      check_op_gradient({random_tensor({3, 4}, rng)},
                        [](Vars& v) { return ops::add(ops::gelu(v[0]), ops::sigmoid(v[0])); }, 1e-7);
    }
    SUBCASE("affine layer norm") {
      check_op_gradient({random_tensor({3, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)},
                        [](Vars& v) { return ops::layer_norm(v[0], v[1], v[2]); }, 1e-6);
    }
    SUBCASE("softmax over both axes") {
      check_op_gradient({random_tensor({3, 4}, rng)},
                        [](Vars& v) { return ops::add(ops::softmax(v[0], 0), ops::softmax(v[0], 1)); }, 1e-7);
    }
    SUBCASE("mean, concat, transpose, slice") {
      check_op_gradient({random_tensor({3, 4}, rng), random_tensor({3, 2}, rng)}, [](Vars& v) {
        std::vector<Var<double>> parts{v[0], v[1]};
        auto c = ops::concat(std::span<const Var<double>>(parts), 1);
        auto s = ops::slice(ops::transpose(c), 0, 1, 5);
        return ops::mean(s, 1);
      }, 1e-7);
    }
    SUBCASE("embedding_add and linear") {
      check_op_gradient({random_tensor({2, 3, 4}, rng), random_tensor({3, 4}, rng), random_tensor({5, 4}, rng),
                         random_tensor({5}, rng)},
                        [](Vars& v) { return ops::linear(ops::embedding_add(v[0], v[1]), v[2], v[3]); }, 1e-7);
    }
    SUBCASE("multi-head attention") {
      check_op_gradient({random_tensor({6, 4}, rng), random_tensor({6, 4}, rng), random_tensor({6, 4}, rng)},
                        [](Vars& v) { return ops::attention(v[0], v[1], v[2], 3, 2); }, 1e-6);
    }
    SUBCASE("cross entropy with logits") {
      check_op_gradient({random_tensor({3, 5}, rng)}, [](Vars& v) {
        const std::vector<int> labels{0, 4, 2};
        return ops::cross_entropy_with_logits(v[0], labels);
      }, 1e-7);
    }
  }
}
