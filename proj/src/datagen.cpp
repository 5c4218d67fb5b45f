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

#include "mmsret/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mmsret/audio_io.hpp"

namespace mmsret {

double clip_two_sigma(double raw, double mean, double sd) {
  return std::clamp(raw, mean - 2.0 * sd, mean + 2.0 * sd);
}

TtsPerturbation sample_tts_params(Rng& rng) {
  TtsPerturbation p;
  p.voice_id = static_cast<int>(rng.uniform_int(0, kVoiceCount - 1));
  p.speaking_rate = clip_two_sigma(kRateMean + kRateSd * rng.normal(), kRateMean, kRateSd);
  p.pitch = clip_two_sigma(kPitchMean + kPitchSd * rng.normal(), kPitchMean, kPitchSd);
  p.volume_gain = clip_two_sigma(kGainMean + kGainSd * rng.normal(), kGainMean, kGainSd);
  return p;
}

namespace {

// Linear interpolation of the envelope in log frequency; zero outside it.
double envelope_at(const ToneConcept& tone, double hz) {
  const auto& f = tone.envelope_hz;
  if (hz < f.front() || hz > f.back()) return 0.0;
  const auto hi = std::lower_bound(f.begin(), f.end(), hz);
  if (hi == f.begin()) return tone.envelope_gain.front();
  const auto i = static_cast<std::size_t>(hi - f.begin());
  const double u = std::log(hz / f[i - 1]) / std::log(f[i] / f[i - 1]);
  return (1.0 - u) * tone.envelope_gain[i - 1] + u * tone.envelope_gain[i];
}

}  // namespace

AudioClip synth_tone_clip(const TtsPerturbation& perturbation,
                          const ToneConcept& tone) {
  if (tone.envelope_hz.empty() || tone.envelope_hz.size() != tone.envelope_gain.size()) {
    throw std::invalid_argument("tone concept: envelope frequency/gain mismatch");
  }
  if (!std::is_sorted(tone.envelope_hz.begin(), tone.envelope_hz.end()) ||
      !(tone.envelope_hz.front() > 0.0)) {
    throw std::invalid_argument("tone concept: envelope frequencies must ascend from > 0");
  }
  if (!(tone.f0_hz > 0.0)) throw std::invalid_argument("tone concept: f0 must be positive");
  if (!(perturbation.speaking_rate > 0.0)) {
    throw std::invalid_argument("speaking rate must be positive");
  }
  AudioClip clip;
  clip.sample_rate = tone.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(
      tone.duration_s * tone.sample_rate / perturbation.speaking_rate));
  clip.samples.assign(n, 0.0);
  const double f0 = tone.f0_hz * std::pow(2.0, perturbation.pitch / 12.0);
  const double gain = std::pow(10.0, perturbation.volume_gain / 20.0);
  const double top = std::min(tone.envelope_hz.back(), 0.5 * tone.sample_rate);
  const auto harmonics = static_cast<std::size_t>(std::floor(top / f0));
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t h = 1; h <= harmonics; ++h) {
    const double hz = f0 * static_cast<double>(h);
    const double a = gain * envelope_at(tone, hz);
    if (a == 0.0) continue;
    const double w = two_pi * hz / tone.sample_rate;
    // Schroeder phases keep the crest factor low; voices add a fixed
    // per-harmonic offset.
    const double hd = static_cast<double>(h);
    double phase = std::numbers::pi * hd * (hd - 1.0) / static_cast<double>(harmonics);
    if (perturbation.voice_id != 0) {
      phase += two_pi * std::fmod(0.6180339887498949 * perturbation.voice_id * hd, 1.0);
    }
    // Phasor rotation; resynchronized every 1024 samples to bound drift.
    const double cw = std::cos(w), sw = std::sin(w);
    double x = 0.0, y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 1024 == 0) {
        const double arg = w * static_cast<double>(i) + phase;
        x = std::cos(arg);
        y = std::sin(arg);
      }
      clip.samples[i] += a * y;
      const double nx = x * cw - y * sw;
      y = x * sw + y * cw;
      x = nx;
    }
  }
  return clip;
}

void DatasetConfig::validate() const {
  if (groups < 2) throw std::invalid_argument("dataset needs at least 2 groups");
  if (captions_per_group < 1) {
    throw std::invalid_argument("captions_per_group must be >= 1");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("noise must be >= 0");
  if (concept_dim == 0 || visual_dim == 0 || bands == 0 || !(f0_hz > 0.0)) {
    throw std::invalid_argument("dataset dimensions must be positive");
  }
  if (!(clip_seconds > 0.0)) throw std::invalid_argument("clip_seconds must be > 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("val_fraction must be in [0, 1)");
  }
  if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be > 0");
}

namespace {

constexpr double kAmplitudeBudget = 0.5;
constexpr double kLowAnchorHz = 150.0;
constexpr double kHighAnchorHz = 6000.0;

struct World {
  std::vector<double> audio_mix;   // bands x concept_dim
  std::vector<double> visual_mix;  // visual_dim x concept_dim
  std::vector<double> anchors;
};

World make_world(const DatasetConfig& c) {
  World w;
  Rng rng(c.world_seed, "datagen.world");
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.concept_dim));
  w.audio_mix.resize(c.bands * c.concept_dim);
  for (double& v : w.audio_mix) v = 2.0 * scale * rng.normal();
  w.visual_mix.resize(c.visual_dim * c.concept_dim);
  for (double& v : w.visual_mix) v = scale * rng.normal();
  // Log-spaced envelope anchors.
  for (std::size_t t = 0; t < c.bands; ++t) {
    const double frac =
        c.bands == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(c.bands - 1);
    w.anchors.push_back(kLowAnchorHz * std::pow(kHighAnchorHz / kLowAnchorHz, frac));
  }
  return w;
}

std::vector<double> mix(const std::vector<double>& matrix, std::size_t rows,
                        const std::vector<double>& x) {
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < x.size(); ++k) out[r] += matrix[r * x.size() + k] * x[k];
  }
  return out;
}

std::vector<double> noisy(const std::vector<double>& base, double noise, Rng& rng) {
  std::vector<double> out = base;
  for (double& v : out) v += noise * rng.normal();
  return out;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

// Snap to the 16-bit PCM grid so clips survive a WAV round trip exactly.
void quantize_pcm16(AudioClip& clip) {
  for (double& s : clip.samples) {
    s = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0) / 32768.0;
  }
}

}  // namespace

PlantedDataset generate_dataset(const DatasetConfig& config) {
  config.validate();
  const World world = make_world(config);
  PlantedDataset data;
  data.config = config;

  const std::size_t g_count = config.groups;
  std::vector<std::vector<double>> concepts(g_count);
  for (std::size_t g = 0; g < g_count; ++g) {
    Rng rng(config.seed, "datagen.concept", g);
    concepts[g].resize(config.concept_dim);
    for (double& v : concepts[g]) v = rng.normal();
  }

  std::vector<bool> is_val(g_count, false);
  {
    std::vector<std::size_t> order(g_count);
    for (std::size_t g = 0; g < g_count; ++g) order[g] = g;
    Rng rng(config.seed, "datagen.split");
    for (std::size_t i = g_count; i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    auto n_val = static_cast<std::size_t>(
        std::llround(config.val_fraction * static_cast<double>(g_count)));
    if (config.val_fraction > 0.0) n_val = std::clamp<std::size_t>(n_val, 1, g_count - 1);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
  }

  const std::size_t c = config.captions_per_group;
  std::size_t oracle_hits = 0;
  for (std::size_t g = 0; g < g_count; ++g) {
    const GroupId group = config.id_offset + g;
    const std::uint64_t base_id = config.id_offset * (c + 1) + g * (c + 1);

    Rng vrng(config.seed, "datagen.visual", g);
    VisualItem v{.id = base_id, .group = group, .validation = is_val[g], .vector = {}};
    v.vector = mix(world.visual_mix, config.visual_dim,
                   noisy(concepts[g], config.noise, vrng));
    // Stored as float32 on disk.
    for (double& x : v.vector) x = static_cast<double>(static_cast<float>(x));
    data.visual.push_back(std::move(v));

    for (std::size_t j = 0; j < c; ++j) {
      Rng arng(config.seed, "datagen.caption", g * c + j);
      const std::vector<double> latent = noisy(concepts[g], config.noise, arng);

      std::size_t nearest = 0;
      for (std::size_t h = 1; h < g_count; ++h) {
        if (squared_distance(latent, concepts[h]) <
            squared_distance(latent, concepts[nearest])) {
          nearest = h;
        }
      }
      oracle_hits += nearest == g ? 1 : 0;

      ToneConcept tone;
      tone.f0_hz = config.f0_hz;
      tone.envelope_hz = world.anchors;
      tone.duration_s = config.clip_seconds;
      tone.sample_rate = config.sample_rate;
      // Spread the budget over the harmonics present at the base pitch.
      const double per_harmonic =
          kAmplitudeBudget /
          std::max(1.0, std::floor(world.anchors.back() / config.f0_hz));
      for (double d : mix(world.audio_mix, config.bands, latent)) {
        tone.envelope_gain.push_back(per_harmonic / (1.0 + std::exp(-d)));
      }
      AudioItem item{.id = base_id + 1 + j, .group = group, .validation = is_val[g], .perturbation = {}, .clip = {}};
      item.perturbation = sample_tts_params(arng);
      item.clip = synth_tone_clip(item.perturbation, tone);
      quantize_pcm16(item.clip);
      data.audio.push_back(std::move(item));
    }
  }
  data.oracle_r1 =
      static_cast<double>(oracle_hits) / static_cast<double>(g_count * c);
  return data;
}

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path.string() + ": malformed line '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const PlantedDataset& data) {
  std::filesystem::create_directories(dir / "audio");
  std::filesystem::create_directories(dir / "visual");
  const DatasetConfig& c = data.config;
  {
    std::ofstream meta(dir / "dataset.meta", std::ios::trunc);
    meta << "groups=" << c.groups << '\n'
         << "captions_per_group=" << c.captions_per_group << '\n'
         << "noise=" << exact(c.noise) << '\n'
         << "seed=" << c.seed << '\n'
         << "world_seed=" << c.world_seed << '\n'
         << "id_offset=" << c.id_offset << '\n'
         << "concept_dim=" << c.concept_dim << '\n'
         << "visual_dim=" << c.visual_dim << '\n'
         << "bands=" << c.bands << '\n'
         << "f0_hz=" << exact(c.f0_hz) << '\n'
         << "clip_seconds=" << exact(c.clip_seconds) << '\n'
         << "val_fraction=" << exact(c.val_fraction) << '\n'
         << "sample_rate=" << c.sample_rate << '\n'
         << "oracle_r1=" << exact(data.oracle_r1) << '\n';
    if (!meta) throw std::runtime_error("cannot write dataset.meta");
  }
  std::ofstream manifest(dir / "manifest.tsv", std::ios::trunc);
  manifest << "id\tgroup\tmodality\tsplit\tpath\tvoice\trate\tpitch\tgain\n";
  for (const VisualItem& v : data.visual) {
    const std::string rel = "visual/" + std::to_string(v.id) + ".feat";
    FeatureMatrix m(1, v.vector.size());
    m.values = v.vector;
    write_features(dir / rel, m);
    manifest << v.id << '\t' << v.group << "\tvisual\t"
             << (v.validation ? "val" : "train") << '\t' << rel
             << "\t-\t-\t-\t-\n";
  }
  for (const AudioItem& a : data.audio) {
    const std::string rel = "audio/" + std::to_string(a.id) + ".wav";
    write_wav(dir / rel, a.clip);
    const TtsPerturbation& p = a.perturbation;
    manifest << a.id << '\t' << a.group << "\taudio\t"
             << (a.validation ? "val" : "train") << '\t' << rel << '\t'
             << p.voice_id << '\t' << exact(p.speaking_rate) << '\t'
             << exact(p.pitch) << '\t' << exact(p.volume_gain) << '\n';
  }
  if (!manifest) throw std::runtime_error("cannot write manifest.tsv");
}

PlantedDataset load_dataset(const std::filesystem::path& dir) {
  PlantedDataset data;
  const auto kv = read_key_values(dir / "dataset.meta");
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw std::runtime_error("dataset.meta: missing key '" + std::string(key) + "'");
    }
    return it->second;
  };
  DatasetConfig& c = data.config;
  c.groups = std::stoull(get("groups"));
  c.captions_per_group = std::stoull(get("captions_per_group"));
  c.noise = std::stod(get("noise"));
  c.seed = std::stoull(get("seed"));
  c.world_seed = std::stoull(get("world_seed"));
  c.id_offset = std::stoull(get("id_offset"));
  c.concept_dim = std::stoull(get("concept_dim"));
  c.visual_dim = std::stoull(get("visual_dim"));
  c.bands = std::stoull(get("bands"));
  c.f0_hz = std::stod(get("f0_hz"));
  c.clip_seconds = std::stod(get("clip_seconds"));
  c.val_fraction = std::stod(get("val_fraction"));
  c.sample_rate = std::stoi(get("sample_rate"));
  data.oracle_r1 = std::stod(get("oracle_r1"));

  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw std::runtime_error("cannot open manifest.tsv in " + dir.string());
  std::string line;
  std::getline(manifest, line);  // header
  std::size_t lineno = 1;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '\t')) f.push_back(field);
    if (f.size() != 9) {
      throw std::runtime_error("manifest.tsv line " + std::to_string(lineno) +
                               ": expected 9 fields");
    }
    const std::uint64_t id = std::stoull(f[0]);
    const GroupId group = std::stoull(f[1]);
    const bool val = f[3] == "val";
    if (f[2] == "visual") {
      const FeatureMatrix m = read_features(dir / f[4]);
      data.visual.push_back({id, group, val, m.values});
    } else if (f[2] == "audio") {
      AudioItem a{.id = id, .group = group, .validation = val, .perturbation = {}, .clip = {}};
      a.clip = read_wav(dir / f[4]);
      a.perturbation = {std::stoi(f[5]), std::stod(f[6]), std::stod(f[7]),
                        std::stod(f[8])};
      data.audio.push_back(std::move(a));
    } else {
      throw std::runtime_error("manifest.tsv line " + std::to_string(lineno) +
                               ": unknown modality '" + f[2] + "'");
    }
  }
  return data;
}

}  // namespace mmsret
