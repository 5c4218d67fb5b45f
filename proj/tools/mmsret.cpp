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

// mmsret: dataset generation, featurization, training and evaluation of
// masked-margin-softmax dual encoders.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmsret/audio_io.hpp"
#include "mmsret/config.hpp"
#include "mmsret/datagen.hpp"
#include "mmsret/retrieval.hpp"
#include "mmsret/trainer.hpp"

namespace fs = std::filesystem;
using namespace mmsret;

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "configuration file (key = value lines)");
  cmd->add_option("--set", flags.sets, "override one key, KEY=VALUE (repeatable)")
      ->allow_extra_args(false);
  cmd->add_option("--seed", flags.seed, "root seed (overrides key 'seed')");
  cmd->add_option("--out", flags.out, "output directory (overrides key 'paths.out')");
  cmd->footer(config_help());
}

RunConfig resolve(const CommonFlags& flags, std::vector<std::string> required) {
  ConfigSources src;
  if (flags.config) src.file = *flags.config;
  src.assignments = flags.sets;
  src.seed = flags.seed;
  src.out = flags.out;
  src.required = std::move(required);
  RunConfig config = resolve_config(src);
  std::cerr << "# resolved configuration\n" << config.render();
  if (!config.text("paths.out").empty()) {
    const fs::path out = config.text("paths.out");
    fs::create_directories(out);
    std::ofstream f(out / "config.resolved", std::ios::trunc);
    f << config.render();
    if (!f) throw std::runtime_error("cannot write " + (out / "config.resolved").string());
  }
  return config;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

// Dataset features, read from paths.features when set, else computed.
Corpus load_corpus(const RunConfig& config, const PlantedDataset& data) {
  const std::string features = config.text("paths.features");
  if (features.empty()) {
    MfccConfig mfcc = mfcc_config(config);
    mfcc.sample_rate = data.config.sample_rate;
    return featurize(data, mfcc, static_cast<unsigned>(config.uint("threads")));
  }
  Corpus corpus;
  corpus.visual = data.visual;
  for (const AudioItem& a : data.audio) {
    corpus.audio.push_back({a.id, a.group, a.validation,
                            read_features(fs::path(features) /
                                          (std::to_string(a.id) + ".feat"))});
  }
  return corpus;
}

std::size_t visual_dim(const PlantedDataset& data) {
  if (data.visual.empty()) throw std::runtime_error("dataset has no visual items");
  return data.visual.front().vector.size();
}

int cmd_datagen(const CommonFlags& flags) {
  const RunConfig config = resolve(flags, {"paths.out"});
  const PlantedDataset data = generate_dataset(dataset_config(config));
  save_dataset(config.text("paths.out"), data);
  std::printf("wrote %zu visual and %zu audio items to %s (oracle R@1 %.6f)\n",
              data.visual.size(), data.audio.size(),
              config.text("paths.out").c_str(), data.oracle_r1);
  return 0;
}

int cmd_featurize(const CommonFlags& flags) {
  RunConfig config = resolve(flags, {"paths.data", "paths.out"});
  const PlantedDataset data = load_dataset(config.text("paths.data"));
  std::vector<std::string> ignored;
  config.set("paths.features", "", "featurize", ignored);
  const Corpus corpus = load_corpus(config, data);
  const fs::path out = config.text("paths.out");
  for (const FeaturizedAudio& a : corpus.audio) {
    write_features(out / (std::to_string(a.id) + ".feat"), a.features);
  }
  std::printf("wrote %zu feature files to %s\n", corpus.audio.size(),
              out.string().c_str());
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  const RunConfig config = resolve(flags, {"paths.data", "paths.out"});
  const PlantedDataset data = load_dataset(config.text("paths.data"));
  const Corpus corpus = load_corpus(config, data);
  TrainConfig tc = train_config(config, visual_dim(data));
  tc.encoder.audio_input_dim = corpus.audio.front().features.coeffs;

  std::optional<EncoderParams> initial;
  const WarmStart which = parse_warm_start(config.text("train.warm_start"));
  if (which != WarmStart::kNone) {
    const auto [checkpoint, ignored] = load_checkpoint(config.text("paths.checkpoint"));
    initial = warm_start(checkpoint, which, tc.encoder, tc.seed);
  }
  const TrainResult result =
      train(tc, corpus, initial, TrainOutputs{config.text("paths.out")});
  if (!result.validation.empty()) {
    const ValidationRecord& v = result.validation.back();
    const std::vector<RecallReport> reports{v.speech_to_image, v.image_to_speech};
    std::fputs(format_reports(reports).c_str(), stdout);
  }
  std::printf("trained %zu steps; final checkpoint %s\n", result.log.size(),
              (fs::path(config.text("paths.out")) / "final.ckpt").string().c_str());
  return 0;
}

int cmd_eval(const CommonFlags& flags) {
  const RunConfig config = resolve(flags, {"paths.data", "paths.checkpoint", "paths.out"});
  const PlantedDataset data = load_dataset(config.text("paths.data"));
  const Corpus corpus = load_corpus(config, data);
  const auto [params, ignored] = load_checkpoint(config.text("paths.checkpoint"));
  const bool validation = config.text("eval.split") == "validation";
  const std::size_t crop = config.uint("train.crop_frames");
  const fs::path out = config.text("paths.out");

  save_index(out / "index.lidx", build_index(params, corpus, crop, validation));
  const auto ks = config.uint_list("eval.ks");
  auto [s2i, i2s] = evaluate(params, corpus, crop, validation, ks,
                             parse_credit_mode(config.text("eval.credit")));
  const std::vector<RecallReport> reports{s2i, i2s};
  const std::string text = format_reports(reports);
  write_text(out / "report.tsv", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_human_eval(const CommonFlags& flags) {
  const RunConfig config = resolve(flags, {"paths.judgments", "paths.out"});
  const auto judgments = read_judgments(config.text("paths.judgments"));
  const Direction direction = config.text("human.direction") == "speech_to_image"
                                  ? Direction::kSpeechToImage
                                  : Direction::kImageToSpeech;
  const std::vector<RecallReport> reports{
      human_recall(judgments, config.uint_list("human.ks"), direction)};
  const std::string text = format_reports(reports);
  write_text(fs::path(config.text("paths.out")) / "human_report.tsv", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_gradcheck(const CommonFlags& flags) {
  const RunConfig config = resolve(flags, {});
  const GradcheckOptions options = gradcheck_options(config);
  TrainConfig tc = train_config(config, config.uint("data.visual_dim"));
  std::vector<LossKind> losses;
  const std::string which = config.text("gradcheck.loss");
  if (which != "triplet") losses.push_back(LossKind::kMms);
  if (which != "mms") losses.push_back(LossKind::kTriplet);

  std::string report;
  double worst = 0.0;
  bool passed = true;
  for (LossKind loss : losses) {
    tc.loss = loss;
    const GradcheckReport r = gradcheck_training_graph(
        tc, config.uint("gradcheck.batch_size"), config.uint("seed"), options);
    for (const ParameterCheck& p : r.parameters) {
      char line[256];
      std::snprintf(line, sizeof line, "%s\t%s\t%.3e\t%s\n", loss_kind_name(loss),
                    p.name.c_str(), p.max_relative_error, p.passed ? "ok" : "FAIL");
      report += line;
    }
    worst = std::max(worst, r.max_relative_error);
    passed = passed && r.passed;
  }
  char summary[128];
  std::snprintf(summary, sizeof summary, "max rel err %.3e %s %g\n", worst,
                passed ? "<" : ">=", options.tolerance);
  report += summary;
  if (!config.text("paths.out").empty()) {
    write_text(fs::path(config.text("paths.out")) / "gradcheck.tsv", report);
  }
  std::fputs(report.c_str(), stdout);
  return passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked margin softmax dual-encoder retrieval toolkit"};
  app.require_subcommand(1);
  app.footer(config_help());

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const CommonFlags&);
  };
  const Command commands[] = {
      {"datagen", "generate a planted paired dataset", cmd_datagen},
      {"featurize", "write MFCC feature files for a dataset", cmd_featurize},
      {"train", "train a dual encoder", cmd_train},
      {"eval", "build a latent index and recall report from a checkpoint", cmd_eval},
      {"human-eval", "majority-vote recall from a judgments file", cmd_human_eval},
      {"gradcheck", "finite-difference check of the training graph", cmd_gradcheck},
  };
  CommonFlags flags;
  int (*selected)(const CommonFlags&) = nullptr;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, flags);
    sub->callback([&selected, run = c.run] { selected = run; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return selected(flags);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
