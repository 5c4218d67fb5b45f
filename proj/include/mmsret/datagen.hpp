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
#include <vector>

#include "mmsret/audio.hpp"
#include "mmsret/encoder.hpp"
#include "mmsret/rng.hpp"

namespace mmsret {

/// Synthesis controls of one spoken caption. Every field is clipped to
/// mean +/- 2 sigma of its sampling distribution.
struct TtsPerturbation {
  int voice_id = 0;            // [0, 6)
  double speaking_rate = 1.0;  // N(1.0, 0.1^2) -> [0.8, 1.2]
  double pitch = 0.0;          // semitones, N(0, 1) -> [-2, 2]
  double volume_gain = 0.0;    // dB, N(0, 2^2) -> [-4, 4]

  friend bool operator==(const TtsPerturbation&, const TtsPerturbation&) = default;
};

inline constexpr int kVoiceCount = 6;
inline constexpr double kRateMean = 1.0, kRateSd = 0.1;
inline constexpr double kPitchMean = 0.0, kPitchSd = 1.0;
inline constexpr double kGainMean = 0.0, kGainSd = 2.0;

/// Clamps `raw` to [mean - 2 sd, mean + 2 sd].
double clip_two_sigma(double raw, double mean, double sd);

TtsPerturbation sample_tts_params(Rng& rng);

/// Source-filter stand-in for one spoken caption: harmonics of f0_hz shaped
/// by a spectral envelope that carries the concept.
struct ToneConcept {
  double f0_hz = 120.0;
  std::vector<double> envelope_hz;    // ascending anchor frequencies
  std::vector<double> envelope_gain;  // linear amplitude at each anchor
  double duration_s = 1.0;
  int sample_rate = 16000;
};

/// Renders duration / rate seconds of the harmonics of f0 * 2^(pitch / 12)
/// below the last anchor (and Nyquist), each weighted by the envelope
/// (interpolated in log frequency) and by 10^(gain / 20). Voices change the
/// harmonic phases.
AudioClip synth_tone_clip(const TtsPerturbation& perturbation,
                          const ToneConcept& tone);

struct DatasetConfig {
  std::size_t groups = 200;
  std::size_t captions_per_group = 5;
  double noise = 0.1;
  std::uint64_t seed = 1;
  // Seeds the fixed mixing maps; datasets sharing it come from the same
  // generative process and differ only in their concepts.
  std::uint64_t world_seed = 1;
  // Added to every group id and item id so datasets can be combined.
  std::uint64_t id_offset = 0;
  std::size_t concept_dim = 16;
  std::size_t visual_dim = 48;
  std::size_t bands = 24;  // envelope anchors driven by the concept
  double f0_hz = 120.0;
  double clip_seconds = 1.0;
  double val_fraction = 0.1;
  int sample_rate = 16000;

  void validate() const;
  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct AudioItem {
  std::uint64_t id = 0;
  GroupId group = 0;
  bool validation = false;
  TtsPerturbation perturbation;
  AudioClip clip;

  friend bool operator==(const AudioItem& a, const AudioItem& b) {
    return a.id == b.id && a.group == b.group && a.validation == b.validation &&
           a.perturbation == b.perturbation && a.clip.samples == b.clip.samples &&
           a.clip.sample_rate == b.clip.sample_rate;
  }
};

struct VisualItem {
  std::uint64_t id = 0;
  GroupId group = 0;
  bool validation = false;
  std::vector<double> vector;

  friend bool operator==(const VisualItem&, const VisualItem&) = default;
};

/// Paired corpus with known group structure. Each group has one visual item
/// and captions_per_group audio items.
struct PlantedDataset {
  DatasetConfig config;
  std::vector<AudioItem> audio;
  std::vector<VisualItem> visual;
  // R@1 of the nearest-concept classifier over every audio item, measured on
  // the noisy latents at generation time.
  double oracle_r1 = 0.0;

  friend bool operator==(const PlantedDataset&, const PlantedDataset&) = default;
};

PlantedDataset generate_dataset(const DatasetConfig& config);

/// Writes manifest.tsv, dataset.meta, audio/<id>.wav and visual/<id>.feat.
void save_dataset(const std::filesystem::path& dir, const PlantedDataset& data);
PlantedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace mmsret
