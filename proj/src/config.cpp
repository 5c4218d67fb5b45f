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

#include "mmsret/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mmsret {

namespace {

KeyInfo uint_key(std::string key, std::string def, std::string help,
                 bool positive = false) {
  return {std::move(key), KeyType::kUInt, std::move(def), std::move(help), {},
          positive};
}

KeyInfo real_key(std::string key, std::string def, std::string help,
                 bool positive = false) {
  return {std::move(key), KeyType::kReal, std::move(def), std::move(help), {},
          positive};
}

KeyInfo bool_key(std::string key, std::string def, std::string help) {
  return {std::move(key), KeyType::kBool, std::move(def), std::move(help), {},
          false};
}

KeyInfo text_key(std::string key, std::string help) {
  return {std::move(key), KeyType::kText, "", std::move(help), {}, false};
}

KeyInfo choice_key(std::string key, std::string def,
                   std::vector<std::string> choices, std::string help) {
  return {std::move(key), KeyType::kChoice, std::move(def), std::move(help),
          std::move(choices), false};
}

KeyInfo list_key(std::string key, std::string def, std::string help,
                 bool positive = false) {
  return {std::move(key), KeyType::kUIntList, std::move(def), std::move(help),
          {}, positive};
}

std::vector<KeyInfo> make_keys() {
  return {
      uint_key("seed", "1", "root seed of every random stream in the run"),
      uint_key("threads", "1", "worker threads for featurization", true),
      text_key("paths.out", "output directory (also --out)"),
      text_key("paths.data", "dataset directory written by datagen"),
      text_key("paths.features",
               "feature directory written by featurize; empty computes features in memory"),
      text_key("paths.checkpoint", "checkpoint read by eval and by warm starts"),
      text_key("paths.judgments", "judgments TSV read by human-eval"),

      uint_key("data.groups", "200", "number of concepts (one visual item each)", true),
      uint_key("data.captions", "5", "spoken captions per concept", true),
      real_key("data.noise", "0.1", "latent noise standard deviation"),
      uint_key("data.world_seed", "1", "seed of the fixed mixing maps"),
      uint_key("data.id_offset", "0", "offset added to group and item ids"),
      uint_key("data.concept_dim", "16", "concept dimension", true),
      uint_key("data.visual_dim", "48", "visual vector dimension", true),
      uint_key("data.bands", "24", "spectral envelope anchors driven by the concept", true),
      real_key("data.f0_hz", "120", "fundamental frequency of the captions", true),
      real_key("data.clip_seconds", "1.0", "caption length before rate change", true),
      real_key("data.val_fraction", "0.1", "fraction of groups held out for validation"),
      uint_key("data.sample_rate", "16000", "audio sample rate in Hz", true),

      real_key("audio.window_ms", "20", "analysis window length", true),
      real_key("audio.hop_ms", "10", "analysis hop", true),
      uint_key("audio.n_mels", "128", "mel filters", true),
      uint_key("audio.n_coeffs", "128", "cepstral coefficients kept", true),
      uint_key("audio.n_fft", "1024", "DFT length", true),
      real_key("audio.log_floor", "1e-10", "floor applied before the log", true),
      bool_key("audio.dct", "true", "apply the cosine transform (false: log-mel)"),

      bool_key("augment.enabled", "true", "SpecAugment during training"),
      uint_key("augment.freq_mask", "20", "maximum frequency mask width F"),
      uint_key("augment.time_mask", "10", "maximum time mask width T"),
      uint_key("augment.num_masks", "1", "masks of each kind"),

      uint_key("train.batch_size", "16", "batch size B", true),
      choice_key("train.loss", "mms", {"mms", "triplet"}, "training loss"),
      uint_key("train.crop_frames", "100", "frames after crop or pad", true),
      uint_key("train.max_steps", "2000", "optimizer steps"),
      uint_key("train.checkpoint_every", "0", "checkpoint cadence in steps (0: final only)"),
      uint_key("train.eval_every", "0", "validation cadence in steps (0: end only)"),
      uint_key("train.watchdog_steps", "0",
               "fail when the loss has not improved for this many steps (0: off)"),
      choice_key("train.warm_start", "none", {"none", "audio", "visual", "all"},
                 "towers copied from paths.checkpoint before training"),

      real_key("margin.initial", "0.001", "MMS margin at step 0"),
      real_key("margin.factor", "1.002", "MMS margin growth factor", true),
      uint_key("margin.interval", "1000", "steps between margin increases", true),
      real_key("triplet.margin", "1.0", "fixed triplet margin"),

      real_key("adam.lr", "0.001", "initial learning rate", true),
      real_key("adam.lr_decay", "0.999", "learning rate decay factor", true),
      uint_key("adam.lr_decay_steps", "1000", "steps between decays", true),
      real_key("adam.beta1", "0.9", "first moment decay"),
      real_key("adam.beta2", "0.999", "second moment decay"),
      real_key("adam.epsilon", "1e-8", "denominator epsilon", true),
      real_key("adam.weight_decay", "4e-5", "weight decay"),
      bool_key("adam.decoupled", "true", "decoupled (true) or gradient (false) weight decay"),
      bool_key("adam.decay_biases", "true", "apply weight decay to biases"),

      list_key("model.audio_hidden", "64", "audio tower hidden widths (comma list, may be empty)", true),
      list_key("model.visual_hidden", "64", "visual tower hidden widths (comma list, may be empty)", true),
      uint_key("model.latent_dim", "32", "shared latent dimension", true),
      choice_key("model.activation", "tanh", {"tanh", "relu", "none"},
                 "activation between layers"),

      list_key("eval.ks", "1,5,10,50,100", "recall cutoffs", true),
      choice_key("eval.credit", "multi", {"multi", "exact"},
                 "credit any same-group item or only the paired item"),
      choice_key("eval.split", "validation", {"validation", "train"},
                 "split evaluated by eval"),
      choice_key("human.direction", "speech_to_image",
                 {"speech_to_image", "image_to_speech"},
                 "direction label of the human-eval report"),
      list_key("human.ks", "1,5", "human-eval recall cutoffs", true),

      choice_key("gradcheck.loss", "both", {"both", "mms", "triplet"},
                 "loss graphs checked by gradcheck"),
      uint_key("gradcheck.batch_size", "4", "batch size of the checked graph", true),
      real_key("gradcheck.tolerance", "1e-4", "maximum relative error", true),
      real_key("gradcheck.step", "1e-5", "central difference step", true),
      real_key("gradcheck.floor", "1e-3", "relative error denominator floor", true),
  };
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<std::uint64_t> to_uint(std::string_view s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) return {};
  return v;
}

std::optional<double> to_real(std::string_view s) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() ||
      !std::isfinite(v)) {
    return {};
  }
  return v;
}

std::optional<std::vector<std::size_t>> to_list(std::string_view s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  std::string_view rest = s;
  while (true) {
    const auto comma = rest.find(',');
    const auto v = to_uint(trim(rest.substr(0, comma)));
    if (!v) return {};
    out.push_back(*v);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

const KeyInfo* find_key(const std::string& key) {
  for (const KeyInfo& k : config_keys()) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

// Empty when valid, else the reason.
std::string check_value(const KeyInfo& info, const std::string& value) {
  switch (info.type) {
    case KeyType::kUInt: {
      const auto v = to_uint(value);
      if (!v) return "expected a non-negative integer";
      if (info.positive && *v == 0) return "must be positive";
      return {};
    }
    case KeyType::kReal: {
      const auto v = to_real(value);
      if (!v) return "expected a finite number";
      if (info.positive && *v <= 0) return "must be positive";
      return {};
    }
    case KeyType::kBool:
      if (value == "true" || value == "false") return {};
      return "expected true or false";
    case KeyType::kText:
      return {};
    case KeyType::kChoice: {
      if (std::find(info.choices.begin(), info.choices.end(), value) !=
          info.choices.end()) {
        return {};
      }
      std::string msg = "expected one of";
      for (const auto& c : info.choices) msg += " " + c;
      return msg;
    }
    case KeyType::kUIntList: {
      const auto v = to_list(value);
      if (!v) return "expected a comma-separated list of integers";
      if (info.positive && std::count(v->begin(), v->end(), 0u) > 0) {
        return "entries must be positive";
      }
      return {};
    }
  }
  return "unsupported key type";
}

const char* type_label(KeyType t) {
  switch (t) {
    case KeyType::kUInt: return "int";
    case KeyType::kReal: return "real";
    case KeyType::kBool: return "bool";
    case KeyType::kText: return "path";
    case KeyType::kChoice: return "choice";
    case KeyType::kUIntList: return "list";
  }
  return "?";
}

}  // namespace

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = make_keys();
  return keys;
}

std::string config_help() {
  std::ostringstream os;
  os << "Configuration keys (config file lines `key = value`, or --set key=value):\n";
  for (const KeyInfo& k : config_keys()) {
    os << "  " << k.key << " (" << type_label(k.type);
    if (k.type == KeyType::kChoice) {
      os << ":";
      for (std::size_t i = 0; i < k.choices.size(); ++i) {
        os << (i ? "|" : " ") << k.choices[i];
      }
    }
    os << ", default '" << k.default_value << "')\n      " << k.help << "\n";
  }
  return os.str();
}

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

RunConfig::RunConfig() {
  for (const KeyInfo& k : config_keys()) values_[k.key] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value,
                    const std::string& origin, std::vector<std::string>& errors) {
  const KeyInfo* info = find_key(key);
  if (!info) {
    errors.push_back(origin + ": unknown key '" + key + "'");
    return;
  }
  const std::string problem = check_value(*info, value);
  if (!problem.empty()) {
    errors.push_back(origin + ": " + key + " = '" + value + "': " + problem);
    return;
  }
  values_[key] = value;
}

const std::string& RunConfig::text(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::out_of_range("no config key " + key);
  return it->second;
}

std::uint64_t RunConfig::uint(const std::string& key) const {
  return *to_uint(text(key));
}

double RunConfig::real(const std::string& key) const {
  return *to_real(text(key));
}

bool RunConfig::flag(const std::string& key) const { return text(key) == "true"; }

std::vector<std::size_t> RunConfig::uint_list(const std::string& key) const {
  return *to_list(text(key));
}

std::string RunConfig::render() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

std::vector<std::pair<std::string, std::string>> parse_config_text(
    const std::string& text, const std::string& origin,
    std::vector<std::string>& errors) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + ": expected 'key = value'");
      continue;
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) {
      errors.push_back(where + ": missing key");
      continue;
    }
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh) {
      errors.push_back(where + ": key '" + key + "' already set on line " +
                       std::to_string(it->second));
      continue;
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

RunConfig resolve_config(const ConfigSources& sources) {
  RunConfig config;
  std::vector<std::string> errors;
  if (sources.file) {
    std::ifstream in(*sources.file);
    if (!in) {
      errors.push_back("cannot open config file " + sources.file->string());
    } else {
      std::stringstream ss;
      ss << in.rdbuf();
      const std::string origin = sources.file->string();
      std::vector<std::pair<std::string, std::string>> entries =
          parse_config_text(ss.str(), origin, errors);
      for (const auto& [k, v] : entries) config.set(k, v, origin, errors);
    }
  }
  for (const std::string& a : sources.assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) {
      errors.push_back("--set '" + a + "': expected KEY=VALUE");
      continue;
    }
    config.set(trim(std::string_view(a).substr(0, eq)),
               trim(std::string_view(a).substr(eq + 1)), "--set", errors);
  }
  if (sources.seed) config.set("seed", std::to_string(*sources.seed), "--seed", errors);
  if (sources.out) config.set("paths.out", *sources.out, "--out", errors);
  for (const std::string& key : sources.required) {
    if (config.text(key).empty()) {
      errors.push_back("missing required key '" + key + "'" +
                       (key == "paths.out" ? " (or --out)" : ""));
    }
  }
  if (config.real("data.val_fraction") < 0 || config.real("data.val_fraction") >= 1) {
    errors.push_back("data.val_fraction must be in [0, 1)");
  }
  if (config.flag("audio.dct") && config.uint("audio.n_coeffs") > config.uint("audio.n_mels")) {
    errors.push_back("audio.n_coeffs must not exceed audio.n_mels");
  }
  if (config.real("audio.hop_ms") > config.real("audio.window_ms")) {
    errors.push_back("audio.hop_ms must not exceed audio.window_ms");
  }
  if (config.uint_list("eval.ks").empty()) errors.push_back("eval.ks is empty");
  if (config.uint_list("human.ks").empty()) errors.push_back("human.ks is empty");
  for (const char* beta : {"adam.beta1", "adam.beta2"}) {
    const double b = config.real(beta);
    if (b < 0 || b >= 1) errors.push_back(std::string(beta) + " must be in [0, 1)");
  }
  if (config.text("train.warm_start") != "none" &&
      config.text("paths.checkpoint").empty()) {
    errors.push_back("train.warm_start requires paths.checkpoint");
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return config;
}

DatasetConfig dataset_config(const RunConfig& c) {
  DatasetConfig d;
  d.groups = c.uint("data.groups");
  d.captions_per_group = c.uint("data.captions");
  d.noise = c.real("data.noise");
  d.seed = c.uint("seed");
  d.world_seed = c.uint("data.world_seed");
  d.id_offset = c.uint("data.id_offset");
  d.concept_dim = c.uint("data.concept_dim");
  d.visual_dim = c.uint("data.visual_dim");
  d.bands = c.uint("data.bands");
  d.f0_hz = c.real("data.f0_hz");
  d.clip_seconds = c.real("data.clip_seconds");
  d.val_fraction = c.real("data.val_fraction");
  d.sample_rate = static_cast<int>(c.uint("data.sample_rate"));
  return d;
}

MfccConfig mfcc_config(const RunConfig& c) {
  MfccConfig m;
  m.sample_rate = static_cast<int>(c.uint("data.sample_rate"));
  m.window_ms = c.real("audio.window_ms");
  m.hop_ms = c.real("audio.hop_ms");
  m.n_mels = c.uint("audio.n_mels");
  m.n_coeffs = c.uint("audio.n_coeffs");
  m.n_fft = c.uint("audio.n_fft");
  m.log_floor = c.real("audio.log_floor");
  m.apply_dct = c.flag("audio.dct");
  return m;
}

EncoderConfig encoder_config(const RunConfig& c, std::size_t visual_input_dim) {
  EncoderConfig e;
  e.audio_input_dim = c.flag("audio.dct") ? c.uint("audio.n_coeffs")
                                          : c.uint("audio.n_mels");
  e.visual_input_dim = visual_input_dim;
  e.audio_hidden = c.uint_list("model.audio_hidden");
  e.visual_hidden = c.uint_list("model.visual_hidden");
  e.latent_dim = c.uint("model.latent_dim");
  e.activation = parse_activation(c.text("model.activation"));
  return e;
}

TrainConfig train_config(const RunConfig& c, std::size_t visual_input_dim) {
  TrainConfig t;
  t.batch_size = c.uint("train.batch_size");
  t.loss = parse_loss_kind(c.text("train.loss"));
  t.margin.initial = c.real("margin.initial");
  t.margin.factor = c.real("margin.factor");
  t.margin.interval = c.uint("margin.interval");
  t.triplet_margin = c.real("triplet.margin");
  t.crop_frames = c.uint("train.crop_frames");
  t.augment_enabled = c.flag("augment.enabled");
  t.augment.freq_mask_param = static_cast<int>(c.uint("augment.freq_mask"));
  t.augment.time_mask_param = static_cast<int>(c.uint("augment.time_mask"));
  t.augment.num_masks = static_cast<int>(c.uint("augment.num_masks"));
  t.seed = c.uint("seed");
  t.max_steps = c.uint("train.max_steps");
  t.checkpoint_every = c.uint("train.checkpoint_every");
  t.eval_every = c.uint("train.eval_every");
  t.watchdog_steps = c.uint("train.watchdog_steps");
  t.adam.lr = c.real("adam.lr");
  t.adam.lr_decay = c.real("adam.lr_decay");
  t.adam.lr_decay_steps = c.uint("adam.lr_decay_steps");
  t.adam.beta1 = c.real("adam.beta1");
  t.adam.beta2 = c.real("adam.beta2");
  t.adam.epsilon = c.real("adam.epsilon");
  t.adam.weight_decay = c.real("adam.weight_decay");
  t.adam.decoupled_weight_decay = c.flag("adam.decoupled");
  t.adam.decay_biases = c.flag("adam.decay_biases");
  t.encoder = encoder_config(c, visual_input_dim);
  t.eval_ks = c.uint_list("eval.ks");
  t.credit = parse_credit_mode(c.text("eval.credit"));
  return t;
}

GradcheckOptions gradcheck_options(const RunConfig& c) {
  return {.tolerance = c.real("gradcheck.tolerance"),
          .step = c.real("gradcheck.step"),
          .denominator_floor = c.real("gradcheck.floor")};
}

}  // namespace mmsret
