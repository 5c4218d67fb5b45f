// Copyright 2026 The mmsret Authors
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
#include <numbers>

#include "doctest.h"
#include "mmsret/gradcheck.hpp"
#include "mmsret/graph.hpp"
#include "mmsret/rng.hpp"
#include "oracles.hpp"

using namespace mmsret;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t = Tensor::matrix(r, c, 0.0);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Builds a scalar graph exercising one op on inputs a (r x c) and, for binary
// ops, b. Returns the bindings.
NamedTensors one_op_graph(Graph& g, int op, Rng& rng) {
  const std::size_t r = 1 + static_cast<std::size_t>(rng.uniform_int(0, 3));
  const std::size_t c = 1 + static_cast<std::size_t>(rng.uniform_int(0, 3));
  NamedTensors in{{"a", random_matrix(rng, r, c)}};
  const NodeId a = g.input("a");
  NodeId y = 0;
  switch (op) {
    case 0: {
      const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform_int(0, 3));
      in["b"] = random_matrix(rng, c, k);
      y = g.matmul(a, g.input("b"));
      break;
    }
    case 1: {
      in["b"] = random_matrix(rng, r, c);
      y = g.add(a, g.input("b"));
      break;
    }
    case 2: {
      in["b"] = random_matrix(rng, r, c);
      y = g.sub(a, g.input("b"));
      break;
    }
    case 3: {
      in["b"] = random_matrix(rng, r, c);
      y = g.mul(a, g.input("b"));
      break;
    }
    case 4: y = g.scale(a, rng.uniform(-3, 3)); break;
    case 5: y = g.add_scalar(a, rng.uniform(-3, 3)); break;
    case 6: {
      in["b"] = Tensor::vector(std::vector<double>(c));
      for (double& v : in["b"].values()) v = rng.uniform(-2, 2);
      y = g.add_row(a, g.input("b"));
      break;
    }
    case 7: y = g.tanh(a); break;
    case 8: y = g.relu(a); break;
    case 9:
      y = g.map(a, {[](double x) { return std::sin(x); },
                    [](double x) { return std::cos(x); }, "sin"});
      break;
    case 10: y = g.mean(a); break;
    case 11: {
      in["a"] = random_matrix(rng, r, r);
      y = g.diag(a);
      break;
    }
    case 12: y = g.gather(a, {{0, 0}, {r - 1, c - 1}, {0, c - 1}}); break;
    case 13: {
      Tensor include = Tensor::matrix(r, c, 1.0);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          if (j != i % c && rng.uniform() < 0.4) include(i, j) = 0.0;
        }
      }
      y = g.masked_logsumexp(a, include, Axis::kRows);
      break;
    }
    case 14: {
      Tensor include = Tensor::matrix(r, c, 1.0);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          if (i != j % r && rng.uniform() < 0.4) include(i, j) = 0.0;
        }
      }
      y = g.masked_logsumexp(a, include, Axis::kCols);
      break;
    }
    case 15: {
      in["b"] = random_matrix(rng, r, c);
      y = g.matmul(g.transpose(a), g.input("b"));
      break;
    }
    default: {
      in["b"] = random_matrix(rng, r, c);
      y = g.matmul(a, g.input("b"), false, true);
      break;
    }
  }
  // A nonlinear readout keeps per-element gradients distinct.
  g.set_output(g.sum(g.map(y, {[](double x) { return x * x * 0.5 + x; },
                               [](double x) { return x + 1.0; }, "poly"})));
  return in;
}

constexpr int kOpCount = 17;

}  // namespace

TEST_CASE("identity matmul returns the other operand") {
  Graph g;
  const NodeId a = g.input("a");
  const NodeId b = g.input("b");
  g.set_output(g.matmul(a, b));
  const Tensor b_val = Tensor::matrix(2, 2, {1.5, -2.0, 0.25, 7.0});
  CHECK(g.forward({{"a", Tensor::identity(2)}, {"b", b_val}}) == b_val);
}

TEST_CASE("log-sum-exp of two zeros is ln 2") {
  Graph g;
  const NodeId a = g.input("a");
  g.masked_logsumexp(a, Tensor::matrix(1, 2, 1.0), Axis::kRows);
  const Tensor out = g.forward({{"a", Tensor::matrix(1, 2, 0.0)}});
  CHECK(out[0] == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
}

TEST_CASE("log-sum-exp is stable for large entries") {
  Graph g;
  const NodeId a = g.input("a");
  g.masked_logsumexp(a, Tensor::matrix(1, 2, 1.0), Axis::kRows);
  const Tensor out = g.forward({{"a", Tensor::matrix(1, 2, {1000.0, 1000.0})}});
  CHECK(out[0] == doctest::Approx(1000.0 + std::numbers::ln2));
}

TEST_CASE("small composition matches scalar evaluation") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    const NodeId a = g.input("a");
    const NodeId b = g.input("b");
    g.sum(g.tanh(g.add(g.mul(a, b), g.scale(a, 0.5))));
    const Tensor av = random_matrix(rng, 2, 3);
    const Tensor bv = random_matrix(rng, 2, 3);
    double expected = 0.0;
    for (std::size_t i = 0; i < 6; ++i) expected += std::tanh(av[i] * bv[i] + 0.5 * av[i]);
    CHECK(std::abs(g.forward({{"a", av}, {"b", bv}}).item() - expected) <= 1e-12);
  }
}

TEST_CASE("gradient of x*x at 3 is 6") {
  Graph g;
  const NodeId x = g.input("x");
  g.sum(g.mul(x, x));
  g.forward({{"x", Tensor::scalar(3.0)}});
  const NamedTensors grads = g.backward(Tensor::scalar(1.0));
  CHECK(grads.at("x").item() == 6.0);
}

TEST_CASE("inputs without a path to the output get exactly zero gradient") {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId unused = g.input("unused");
  (void)unused;
  g.set_output(g.sum(g.constant(Tensor::matrix(2, 2, 3.0))));
  g.forward({{"x", Tensor::matrix(2, 2, 1.0)}, {"unused", Tensor::vector({1, 2, 3})}});
  const NamedTensors grads = g.backward(Tensor::scalar(1.0));
  for (double v : grads.at("x").values()) CHECK(v == 0.0);
  for (double v : grads.at("unused").values()) CHECK(v == 0.0);
  CHECK(grads.at("unused").shape() == std::vector<std::size_t>{3});
  (void)x;
}

TEST_CASE("non-trainable inputs are not reported") {
  Graph g;
  const NodeId x = g.input("x");
  const NodeId c = g.input("data", false);
  g.sum(g.mul(x, c));
  g.forward({{"x", Tensor::scalar(2.0)}, {"data", Tensor::scalar(5.0)}});
  const NamedTensors grads = g.backward(Tensor::scalar(1.0));
  CHECK(grads.size() == 1);
  CHECK(grads.at("x").item() == 5.0);
}

TEST_CASE("every op kind agrees with central differences") {
  Rng rng(11);
  GradcheckOptions opts;
  for (int op = 0; op < kOpCount; ++op) {
    CAPTURE(op);
    for (int trial = 0; trial < 100; ++trial) {
      Graph g;
      const NamedTensors in = one_op_graph(g, op, rng);
      const GradcheckReport report = gradcheck(g, in, opts);
      REQUIRE(report.passed);
    }
  }
}

TEST_CASE("library backward agrees with an independent finite-difference oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g;
    const NodeId w = g.input("w");
    const NodeId x = g.input("x", false);
    g.sum(g.tanh(g.matmul(x, w)));
    const Tensor xv = random_matrix(rng, 3, 4);
    const Tensor wv = random_matrix(rng, 4, 2);
    g.forward({{"w", wv}, {"x", xv}});
    const Tensor analytic = g.backward(Tensor::scalar(1.0)).at("w");
    const Tensor numeric = oracle::numeric_gradient(
        [&](const Tensor& wp) {
          double s = 0.0;
          for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
              double acc = 0.0;
              for (std::size_t k = 0; k < 4; ++k) acc += xv(i, k) * wp(k, j);
              s += std::tanh(acc);
            }
          }
          return s;
        },
        wv, 1e-5);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      CHECK(relative_error(analytic[i], numeric[i], 1e-3) < 1e-6);
    }
  }
}

TEST_CASE("gradcheck passes a linear function at 1e-10") {
  Graph g;
  const NodeId a = g.input("a");
  g.sum(g.scale(a, 2.5));
  Rng rng(5);
  const GradcheckReport r =
      gradcheck(g, {{"a", random_matrix(rng, 3, 3)}}, {.tolerance = 1e-10});
  CHECK(r.passed);
  CHECK(r.max_relative_error < 1e-10);
}

TEST_CASE("gradcheck catches a wrong derivative rule") {
  Graph g;
  const NodeId a = g.input("a");
  g.sum(g.map(a, {[](double x) { return x * x * x; },
                  [](double x) { return 2.0 * x * x; }, "bad_cube"}));
  Rng rng(9);
  const GradcheckReport r = gradcheck(g, {{"a", random_matrix(rng, 2, 2, 0.5, 1.5)}});
  CHECK_FALSE(r.passed);
  REQUIRE(r.parameters.size() == 1);
  CHECK(r.parameters[0].name == "a");
  CHECK_FALSE(r.parameters[0].passed);
}

TEST_CASE("gradcheck rejects non-scalar outputs") {
  Graph g;
  g.tanh(g.input("a"));
  CHECK_THROWS_AS(gradcheck(g, {{"a", Tensor::matrix(2, 2, 0.1)}}), GraphError);
}

TEST_CASE("backward before forward fails") {
  Graph g;
  g.sum(g.input("a"));
  CHECK_THROWS_AS(g.backward(Tensor::scalar(1.0)), GraphError);
}

TEST_CASE("backward checks the seed shape") {
  Graph g;
  g.tanh(g.input("a"));
  g.forward({{"a", Tensor::matrix(2, 2, 0.1)}});
  CHECK_THROWS_AS(g.backward(Tensor::scalar(1.0)), GraphError);
}

TEST_CASE("shape mismatch names the offending node") {
  Graph g;
  const NodeId a = g.input("a");
  const NodeId b = g.input("b");
  const NodeId m = g.matmul(a, b);
  try {
    g.forward({{"a", Tensor::matrix(2, 3, 1.0)}, {"b", Tensor::matrix(2, 3, 1.0)}});
    FAIL("expected a shape error");
  } catch (const GraphError& e) {
    const std::string what = e.what();
    CHECK(what.find("node " + std::to_string(m)) != std::string::npos);
    CHECK(what.find("matmul") != std::string::npos);
  }
}

TEST_CASE("non-finite intermediates name the node") {
  Graph g;
  const NodeId a = g.input("a");
  const NodeId l = g.map(a, {[](double x) { return std::log(x); },
                             [](double x) { return 1.0 / x; }, "log"});
  try {
    g.forward({{"a", Tensor::vector({1.0, -1.0})}});
    FAIL("expected a non-finite error");
  } catch (const GraphError& e) {
    CHECK(std::string(e.what()).find("node " + std::to_string(l)) != std::string::npos);
  }
}

TEST_CASE("unbound and unknown inputs are rejected") {
  Graph g;
  g.sum(g.input("a"));
  CHECK_THROWS_AS(g.forward({}), GraphError);
  CHECK_THROWS_AS(g.forward({{"a", Tensor::scalar(1)}, {"zzz", Tensor::scalar(1)}}),
                  GraphError);
}

TEST_CASE("operations cannot refer to future nodes") {
  Graph g;
  CHECK_THROWS_AS(g.tanh(5), GraphError);
}

TEST_CASE("forward is referentially transparent") {
  Rng rng(21);
  Graph g;
  const NodeId a = g.input("a");
  g.masked_logsumexp(g.tanh(g.matmul(a, a, false, true)), Tensor::matrix(3, 3, 1.0),
                     Axis::kCols);
  const NamedTensors in{{"a", random_matrix(rng, 3, 4)}};
  const Tensor first = g.forward(in);
  for (int i = 0; i < 5; ++i) CHECK(g.forward(in) == first);
}

TEST_CASE("gradient of a sum is the sum of gradients") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const NamedTensors in{{"a", random_matrix(rng, 3, 3)}};
    auto grad_of = [&](int which) {
      Graph g;
      const NodeId a = g.input("a");
      const NodeId f = g.sum(g.tanh(g.matmul(a, a)));
      const NodeId h = g.sum(g.mul(a, a));
      if (which == 0) g.set_output(f);
      if (which == 1) g.set_output(h);
      if (which == 2) g.set_output(g.add(f, h));
      g.forward(in);
      return g.backward(Tensor::scalar(1.0)).at("a");
    };
    const Tensor gf = grad_of(0), gh = grad_of(1), gs = grad_of(2);
    for (std::size_t i = 0; i < gs.size(); ++i) {
      CHECK(std::abs(gs[i] - (gf[i] + gh[i])) <= 1e-12);
    }
  }
}
