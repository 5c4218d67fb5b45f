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

#include <fstream>

#include "doctest.h"
#include "mmsret/config.hpp"
#include "test_util.hpp"

using namespace mmsret;

namespace {

std::vector<std::string> problems_of(const ConfigSources& src) {
  try {
    resolve_config(src);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
  for (const auto& p : problems) {
    if (p.find(needle) != std::string::npos) return true;
  }
  return false;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("defaults reproduce the library defaults") {
  const RunConfig c;
  CHECK(c.uint("seed") == 1);
  CHECK(c.uint("train.batch_size") == 16);
  CHECK(c.text("train.loss") == "mms");
  CHECK(c.real("adam.lr") == 0.001);
  CHECK(c.flag("adam.decoupled"));
  CHECK(c.uint_list("eval.ks") == std::vector<std::size_t>{1, 5, 10, 50, 100});

  CHECK(dataset_config(c) == DatasetConfig{});
  const TrainConfig tc = train_config(c, 48);
  const TrainConfig def;
  CHECK(tc.batch_size == def.batch_size);
  CHECK(tc.max_steps == def.max_steps);
  CHECK(tc.crop_frames == def.crop_frames);
  CHECK(tc.margin.initial == def.margin.initial);
  CHECK(tc.margin.factor == def.margin.factor);
  CHECK(tc.margin.interval == def.margin.interval);
  CHECK(tc.adam.weight_decay == def.adam.weight_decay);
  CHECK(tc.augment.freq_mask_param == def.augment.freq_mask_param);
  CHECK(tc.augment.time_mask_param == def.augment.time_mask_param);
  CHECK(tc.encoder.audio_hidden == def.encoder.audio_hidden);
  CHECK(tc.encoder.latent_dim == def.encoder.latent_dim);
  const GradcheckOptions g = gradcheck_options(c);
  CHECK(g.tolerance == 1e-4);
  CHECK(g.denominator_floor == 1e-3);
}

TEST_CASE("unknown keys are rejected") {
  ConfigSources src;
  src.assignments = {"train.batchsize=8"};
  const auto p = problems_of(src);
  REQUIRE(p.size() == 1);
  CHECK(mentions(p, "train.batchsize"));
}

TEST_CASE("every problem is reported in one pass") {
  test::TempDir dir;
  write(dir.path() / "run.cfg",
        "# comment\n"
        "train.batch_size = 8\n"
        "bogus.key = 1\n"
        "no equals sign here\n"
        "train.batch_size = 9\n");
  ConfigSources src;
  src.file = dir.path() / "run.cfg";
  src.assignments = {"adam.lr=fast", "train.loss=hinge", "adam.decoupled=yes",
                     "train.max_steps=-3", "eval.ks=", "missing_equals"};
  src.required = {"paths.data"};
  const auto p = problems_of(src);
  CHECK(mentions(p, "bogus.key"));
  CHECK(mentions(p, "run.cfg:4"));
  CHECK(mentions(p, "train.batch_size"));
  CHECK(mentions(p, "adam.lr"));
  CHECK(mentions(p, "train.loss"));
  CHECK(mentions(p, "adam.decoupled"));
  CHECK(mentions(p, "train.max_steps"));
  CHECK(mentions(p, "eval.ks"));
  CHECK(mentions(p, "missing_equals"));
  CHECK(mentions(p, "paths.data"));
  CHECK(p.size() >= 10);
}

TEST_CASE("cross-key constraints are checked") {
  ConfigSources src;
  src.assignments = {"audio.n_coeffs=200", "data.val_fraction=1", "train.warm_start=audio"};
  const auto p = problems_of(src);
  CHECK(mentions(p, "audio.n_coeffs"));
  CHECK(mentions(p, "data.val_fraction"));
  CHECK(mentions(p, "paths.checkpoint"));
}

TEST_CASE("flags override assignments which override the file") {
  test::TempDir dir;
  write(dir.path() / "run.cfg", "seed = 5\ntrain.batch_size = 8\ntrain.max_steps = 10\n");
  ConfigSources src;
  src.file = dir.path() / "run.cfg";
  src.assignments = {"train.batch_size=12", "seed=6", "train.batch_size=24"};
  const RunConfig a = resolve_config(src);
  CHECK(a.uint("seed") == 6);
  CHECK(a.uint("train.batch_size") == 24);
  CHECK(a.uint("train.max_steps") == 10);
  src.seed = 9;
  src.out = "/tmp/somewhere";
  const RunConfig b = resolve_config(src);
  CHECK(b.uint("seed") == 9);
  CHECK(b.text("paths.out") == "/tmp/somewhere");
}

TEST_CASE("a missing config file is an error") {
  ConfigSources src;
  src.file = "/nonexistent/run.cfg";
  CHECK_THROWS_AS(resolve_config(src), ConfigError);
}

TEST_CASE("rendered configurations resolve to themselves") {
  test::TempDir dir;
  ConfigSources src;
  src.assignments = {"train.loss=triplet", "model.audio_hidden=32,16", "adam.lr=0.0025",
                     "paths.out=" + dir.path().string()};
  const RunConfig a = resolve_config(src);
  write(dir.path() / "again.cfg", a.render());
  ConfigSources again;
  again.file = dir.path() / "again.cfg";
  const RunConfig b = resolve_config(again);
  CHECK(b.values() == a.values());
  CHECK(b.render() == a.render());
  CHECK(encoder_config(b, 48).audio_hidden == std::vector<std::size_t>{32, 16});
}

TEST_CASE("help lists every key") {
  const std::string help = config_help();
  for (const KeyInfo& k : config_keys()) {
    CHECK_MESSAGE(help.find(k.key) != std::string::npos, k.key);
    CHECK(RunConfig().values().count(k.key) == 1);
  }
  CHECK(config_keys().size() == RunConfig().values().size());
}

TEST_CASE("empty hidden lists give single-layer towers") {
  ConfigSources src;
  src.assignments = {"model.audio_hidden=", "audio.dct=false", "audio.n_mels=40"};
  const RunConfig c = resolve_config(src);
  const EncoderConfig e = encoder_config(c, 48);
  CHECK(e.audio_hidden.empty());
  CHECK(e.audio_input_dim == 40);
}
