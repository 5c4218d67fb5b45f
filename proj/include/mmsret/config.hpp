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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmsret/audio.hpp"
#include "mmsret/datagen.hpp"
#include "mmsret/gradcheck.hpp"
#include "mmsret/retrieval.hpp"
#include "mmsret/trainer.hpp"

namespace mmsret {

enum class KeyType { kUInt, kReal, kBool, kText, kChoice, kUIntList };

struct KeyInfo {
  std::string key;
  KeyType type;
  std::string default_value;
  std::string help;
  std::vector<std::string> choices;  // kChoice only
  bool positive = false;             // numeric keys: value must be > 0
};

/// Every accepted key, in documentation order.
const std::vector<KeyInfo>& config_keys();

/// Human-readable key reference for --help.
std::string config_help();

/// Thrown with every problem found while resolving a configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Fully resolved key/value configuration. Values are kept as the text that
/// was validated so the resolved form can be logged verbatim.
class RunConfig {
 public:
  RunConfig();  // all defaults

  /// Sets `key` from text. Problems are appended to `errors` prefixed with
  /// `origin`; the stored value is left unchanged on error.
  void set(const std::string& key, const std::string& value,
           const std::string& origin, std::vector<std::string>& errors);

  const std::string& text(const std::string& key) const;
  std::uint64_t uint(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::size_t> uint_list(const std::string& key) const;

  /// `key = value` lines in key order.
  std::string render() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct ConfigSources {
  std::optional<std::filesystem::path> file;
  std::vector<std::string> assignments;  // KEY=VALUE, applied in order
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> required;  // keys that must be non-empty
};

/// Defaults, then the file, then assignments, then --seed/--out. Throws
/// ConfigError listing every unknown key, malformed line, bad value and
/// missing required key at once.
RunConfig resolve_config(const ConfigSources& sources);

/// Parses `key = value` lines ('#' starts a comment).
std::vector<std::pair<std::string, std::string>> parse_config_text(
    const std::string& text, const std::string& origin,
    std::vector<std::string>& errors);

DatasetConfig dataset_config(const RunConfig& c);
MfccConfig mfcc_config(const RunConfig& c);
EncoderConfig encoder_config(const RunConfig& c, std::size_t visual_input_dim);
TrainConfig train_config(const RunConfig& c, std::size_t visual_input_dim);
GradcheckOptions gradcheck_options(const RunConfig& c);

}  // namespace mmsret
