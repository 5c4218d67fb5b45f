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

#include "doctest.h"
#include "mmsret/encoder.hpp"
#include "mmsret/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mmsret;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t = Tensor::matrix(r, c, 0.0);
  for (double& v : t.storage()) v = rng.uniform(-1, 1);
  return t;
}

TowerParams single_layer(Tensor w) {
  TowerParams t;
  t.layers.push_back({w, Tensor::vector(std::vector<double>(w.cols(), 0.0))});
  return t;
}

}  // namespace

TEST_CASE("zero weights map every input to the bias") {
  TowerParams t = single_layer(Tensor::matrix(3, 2, 0.0));
  t.layers[0].bias = Tensor::vector({0.5, -1.0});
  EncoderParams p{t, t};
  CHECK(encode(p, Tower::kAudio, std::vector<double>{4, 5, 6}) == std::vector<double>{0.5, -1.0});
}

TEST_CASE("identity layer passes inputs through") {
  EncoderParams p{single_layer(Tensor::identity(3)), single_layer(Tensor::identity(3))};
  const std::vector<double> x{0.25, -3, 8};
  CHECK(encode(p, Tower::kVisual, x) == x);
}

TEST_CASE("two linear layers compose to their product") {
  Rng rng(1);
  const Tensor a = random_matrix(rng, 4, 3);
  const Tensor b = random_matrix(rng, 3, 2);
  TowerParams t;
  t.activation = Activation::kNone;
  t.layers.push_back({a, Tensor::vector({0, 0, 0})});
  t.layers.push_back({b, Tensor::vector({0, 0})});
  EncoderParams p{t, t};
  const std::vector<double> x{1, -2, 0.5, 3};
  const auto out = encode(p, Tower::kAudio, x);
  for (std::size_t j = 0; j < 2; ++j) {
    double expected = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      double h = 0.0;
      for (std::size_t i = 0; i < 4; ++i) h += x[i] * a(i, k);
      expected += h * b(k, j);
    }
    CHECK(out[j] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("tanh is applied between layers only") {
  TowerParams t;
  t.layers.push_back({Tensor::matrix(1, 1, {2.0}), Tensor::vector({0.0})});
  t.layers.push_back({Tensor::matrix(1, 1, {3.0}), Tensor::vector({0.0})});
  EncoderParams p{t, t};
  CHECK(encode(p, Tower::kAudio, std::vector<double>{0.4})[0] ==
        doctest::Approx(3.0 * std::tanh(0.8)));
}

TEST_CASE("standardization shifts and scales inputs") {
  TowerParams t = single_layer(Tensor::identity(2));
  t.input_shift = {1.0, -1.0};
  t.input_scale = {2.0, 0.5};
  EncoderParams p{t, t};
  CHECK(encode(p, Tower::kAudio, std::vector<double>{3, 3}) == std::vector<double>{4, 2});
}

TEST_CASE("initialization is seeded, bounded and has zero biases") {
  const EncoderConfig cfg;
  const EncoderParams a = init_params(cfg, 5);
  CHECK(a == init_params(cfg, 5));
  CHECK_FALSE(a == init_params(cfg, 6));
  CHECK(a.latent_dim() == 32);
  CHECK(a.audio.input_dim() == 128);
  CHECK(a.visual.input_dim() == 48);
  for (const TowerParams* t : {&a.audio, &a.visual}) {
    for (const Layer& l : t->layers) {
      const double bound = std::sqrt(3.0 / static_cast<double>(l.weight.rows()));
      for (double v : l.weight.values()) CHECK(std::abs(v) <= bound);
      for (double v : l.bias.values()) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("similarity examples") {
  const Tensor x = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor y = Tensor::matrix(2, 2, {3, 4, -1, 2});
  CHECK(similarity_matrix(x, y) == Tensor::matrix(2, 2, {3, -1, 4, 2}));
  CHECK_THROWS_AS(similarity_matrix(x, Tensor::matrix(2, 3, 0.0)), std::invalid_argument);
}

TEST_CASE("similarity matches the loop definition and ignores rotations") {
  Rng rng(2);
  const Tensor x = random_matrix(rng, 6, 4);
  const Tensor y = random_matrix(rng, 6, 4);
  const Tensor z = similarity_matrix(x, y);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += x(i, k) * y(j, k);
      CHECK(z(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  }
  // Rotate both embeddings by the same Givens rotation in the (0, 2) plane.
  const double c = std::cos(0.7), s = std::sin(0.7);
  auto rotate = [&](Tensor t) {
    for (std::size_t r = 0; r < 6; ++r) {
      const double a = t(r, 0), b = t(r, 2);
      t(r, 0) = c * a - s * b;
      t(r, 2) = s * a + c * b;
    }
    return t;
  };
  const Tensor zr = similarity_matrix(rotate(x), rotate(y));
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(zr[i] - z[i]) < 1e-12);

  Graph graph;
  const NodeId a = graph.input("x", false);
  const NodeId b = graph.input("y", false);
  graph.set_output(similarity_matrix(graph, a, b));
  const Tensor zg = graph.forward({{"x", x}, {"y", y}});
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(zg[i] - z[i]) < 1e-14);
}

TEST_CASE("mask examples") {
  const std::vector<GroupId> g{7, 7, 9};
  const MaskMatrix m = build_mask(g, g);
  CHECK(m.tensor() == Tensor::matrix(3, 3, {0, 0, 1, 0, 0, 1, 1, 1, 0}));
  CHECK(m.aligned());
  const std::vector<GroupId> distinct{1, 2, 3, 4};
  const MaskMatrix d = build_mask(distinct, distinct);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(d.negative(i, j) == (i != j));
  }
  CHECK_THROWS_AS(build_mask(g, distinct), std::invalid_argument);
  CHECK_THROWS_AS(MaskMatrix(Tensor::matrix(2, 2, 0.5)), std::invalid_argument);
}

TEST_CASE("mask properties over random group lists") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t b = static_cast<std::size_t>(rng.uniform_int(1, 16));
    std::vector<GroupId> g(b);
    for (auto& v : g) v = static_cast<GroupId>(rng.uniform_int(0, 5));
    const MaskMatrix m = build_mask(g, g);
    CHECK(m.tensor() == oracle::mask_from_groups(g, g));
    CHECK(m.aligned());
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) CHECK(m.negative(i, j) == m.negative(j, i));
    }
  }
}

TEST_CASE("checkpoints round-trip exactly") {
  test::TempDir dir;
  EncoderParams p = init_params(EncoderConfig{}, 9);
  p.audio.input_shift.assign(128, 0.125);
  p.audio.input_scale.assign(128, 3.0);
  save_params(dir.path() / "a.ckpt", p);
  CHECK(load_params(dir.path() / "a.ckpt") == p);
}

TEST_CASE("corrupt checkpoints are rejected") {
  test::TempDir dir;
  save_params(dir.path() / "a.ckpt", init_params(EncoderConfig{}, 9));
  auto bytes = read_file_bytes(dir.path() / "a.ckpt");
  auto truncated = bytes;
  truncated.resize(bytes.size() / 2);
  write_file_bytes(dir.path() / "t.ckpt", truncated);
  CHECK_THROWS_AS(load_params(dir.path() / "t.ckpt"), FormatError);
  auto bad = bytes;
  bad[0] = 'Z';
  write_file_bytes(dir.path() / "b.ckpt", bad);
  CHECK_THROWS_AS(load_params(dir.path() / "b.ckpt"), FormatError);
  CHECK_THROWS(load_params(dir.path() / "missing.ckpt"));
}

TEST_CASE("named parameters reject shape mismatches") {
  EncoderParams p = init_params(EncoderConfig{}, 1);
  NamedTensors named = to_named(p);
  CHECK(named.count("audio.w0") == 1);
  CHECK(named.count("visual.b1") == 1);
  named.at("audio.w0") = Tensor::matrix(2, 2, 0.0);
  try {
    assign_named(p, named);
    FAIL("expected a failure");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("audio.w0") != std::string::npos);
  }
  CHECK_THROWS_AS(encode(p, Tower::kAudio, std::vector<double>(7, 0.0)), std::invalid_argument);
}
