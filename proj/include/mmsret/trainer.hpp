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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmsret/adam.hpp"
#include "mmsret/audio.hpp"
#include "mmsret/datagen.hpp"
#include "mmsret/encoder.hpp"
#include "mmsret/gradcheck.hpp"
#include "mmsret/graph.hpp"
#include "mmsret/loss.hpp"
#include "mmsret/retrieval.hpp"

namespace mmsret {

/// Audio items as feature matrices, ready for cropping and augmentation.
struct FeaturizedAudio {
  std::uint64_t id = 0;
  GroupId group = 0;
  bool validation = false;
  FeatureMatrix features;
};

struct Corpus {
  std::vector<FeaturizedAudio> audio;
  std::vector<VisualItem> visual;
};

/// Runs the MFCC front end over every audio item (in parallel when
/// `threads` > 1; the result does not depend on the thread count).
Corpus featurize(const PlantedDataset& data, const MfccConfig& mfcc,
                 unsigned threads = 1);

/// Training pair: audio item index and its group's visual item index.
struct PairRef {
  std::size_t audio;
  std::size_t visual;
};

/// Aligned (audio, visual) pairs of one split.
std::vector<PairRef> paired_examples(const Corpus& corpus, bool validation);

/// Seeded epoch shuffles cut into batches of `batch_size`; the short final
/// batch of each epoch is dropped.
class BatchStream {
 public:
  BatchStream(std::size_t examples, std::size_t batch_size, std::uint64_t seed);

  std::size_t batches_per_epoch() const { return examples_ / batch_size_; }
  /// Example indices of global batch number `step`.
  std::vector<std::size_t> batch(std::uint64_t step);
  std::vector<std::size_t> next() { return batch(cursor_++); }

 private:
  std::size_t examples_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t cursor_ = 0;
  std::uint64_t cached_epoch_ = UINT64_MAX;
  std::vector<std::size_t> order_;
};

struct Batch {
  Tensor audio_inputs;   // B x audio features (pooled)
  Tensor visual_inputs;  // B x visual features
  std::vector<GroupId> groups_x;
  std::vector<GroupId> groups_y;

  std::size_t size() const { return groups_x.size(); }
};

/// Batches for steps [first_step, first_step + count), assembled exactly as
/// the training loop does (train-mode crop, then augmentation if given, then
/// temporal mean pooling).
std::vector<Batch> make_batches(const Corpus& corpus,
                                const std::vector<PairRef>& pairs,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t count, std::size_t crop_frames,
                                const AugmentSpec* augment = nullptr,
                                std::uint64_t first_step = 0);

enum class WarmStart { kNone, kAudio, kVisual, kAll };

WarmStart parse_warm_start(const std::string& name);

struct TrainConfig {
  std::size_t batch_size = 16;
  LossKind loss = LossKind::kMms;
  MarginSchedule margin;
  double triplet_margin = 1.0;
  std::size_t crop_frames = 100;
  bool augment_enabled = true;
  AugmentSpec augment{.freq_mask_param = 20, .time_mask_param = 10, .num_masks = 1};
  std::uint64_t seed = 1;
  std::uint64_t max_steps = 2000;
  std::uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::uint64_t eval_every = 0;        // 0: evaluate at the end only
  std::uint64_t watchdog_steps = 0;    // 0: off
  AdamConfig adam;
  EncoderConfig encoder;
  std::vector<std::size_t> eval_ks = kDefaultKs;
  CreditMode credit = CreditMode::kMultiPositive;

  void validate() const;
};

struct StepRecord {
  std::uint64_t step;
  double loss;
  double lr;
  double delta;
};

struct ValidationRecord {
  std::uint64_t step;
  RecallReport speech_to_image;
  RecallReport image_to_speech;
};

struct TrainResult {
  EncoderParams params;
  OptimizerState optimizer;
  std::vector<StepRecord> log;
  std::vector<ValidationRecord> validation;
};

/// Pooled (cropped, optionally augmented) audio input of one item.
std::vector<double> pooled_audio(const FeatureMatrix& features,
                                 std::size_t crop_frames, CropMode mode,
                                 const AugmentSpec* augment, Rng& rng);

/// Sets each tower's input standardization from the training split when the
/// tower has none yet.
void fit_standardization(EncoderParams& params, const Corpus& corpus,
                         std::size_t crop_frames);

/// Recall in both directions over one split of the corpus.
std::pair<RecallReport, RecallReport> evaluate(const EncoderParams& params,
                                               const Corpus& corpus,
                                               std::size_t crop_frames,
                                               bool validation_split,
                                               std::span<const std::size_t> ks,
                                               CreditMode credit);

/// Index of one split: visual then audio items.
LatentIndex build_index(const EncoderParams& params, const Corpus& corpus,
                        std::size_t crop_frames, bool validation_split);

/// Fresh parameters from `config`/`seed`, with the selected towers copied
/// from `checkpoint`. Throws std::invalid_argument listing mismatched layers.
EncoderParams warm_start(const EncoderParams& checkpoint, WarmStart which,
                         const EncoderConfig& config, std::uint64_t seed);

/// Towers, similarity matrix and loss of one training step. The standardized
/// batch binds to inputs "audio_in" and "visual_in"; the loss becomes the
/// graph output.
NodeId build_training_graph(Graph& graph, const EncoderParams& params,
                            std::span<const GroupId> groups_x,
                            std::span<const GroupId> groups_y,
                            const TrainConfig& config, std::uint64_t step);

/// Finite-difference check of build_training_graph on a random batch with
/// freshly initialized parameters.
GradcheckReport gradcheck_training_graph(const TrainConfig& config,
                                         std::size_t batch_size,
                                         std::uint64_t seed,
                                         const GradcheckOptions& options);

struct TrainOutputs {
  std::filesystem::path dir;  // empty: keep everything in memory
};

/// featurize -> crop/augment -> encode -> loss -> backward -> Adam, with batch
/// preparation running one thread ahead of the update (queue depth 2).
/// `initial` replaces the seeded initialization when given.
TrainResult train(const TrainConfig& config, const Corpus& corpus,
                  const std::optional<EncoderParams>& initial = std::nullopt,
                  const TrainOutputs& outputs = {});

void save_checkpoint(const std::filesystem::path& path,
                     const EncoderParams& params, const OptimizerState& optimizer);
std::pair<EncoderParams, std::optional<OptimizerState>> load_checkpoint(
    const std::filesystem::path& path);

/// step, loss, lr, delta (tab-separated, shortest exact decimal form).
std::string format_step_record(const StepRecord& r);

}  // namespace mmsret
