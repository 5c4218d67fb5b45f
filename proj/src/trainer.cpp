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

#include "mmsret/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "mmsret/binary_io.hpp"

namespace mmsret {

Corpus featurize(const PlantedDataset& data, const MfccConfig& mfcc,
                 unsigned threads) {
  const MfccExtractor extractor(mfcc);
  Corpus corpus;
  corpus.visual = data.visual;
  corpus.audio.resize(data.audio.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const AudioItem& a = data.audio[i];
      corpus.audio[i] = {a.id, a.group, a.validation, extractor.compute(a.clip)};
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    work(0, data.audio.size());
    return corpus;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (data.audio.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t b = std::min(data.audio.size(), t * chunk);
    const std::size_t e = std::min(data.audio.size(), b + chunk);
    pool.emplace_back([&, t, b, e] {
      try {
        work(b, e);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return corpus;
}

std::vector<PairRef> paired_examples(const Corpus& corpus, bool validation) {
  std::map<GroupId, std::size_t> visual_of;
  for (std::size_t v = 0; v < corpus.visual.size(); ++v) {
    if (corpus.visual[v].validation == validation) {
      visual_of[corpus.visual[v].group] = v;
    }
  }
  std::vector<PairRef> pairs;
  for (std::size_t a = 0; a < corpus.audio.size(); ++a) {
    if (corpus.audio[a].validation != validation) continue;
    auto it = visual_of.find(corpus.audio[a].group);
    if (it == visual_of.end()) {
      throw std::invalid_argument("audio item " + std::to_string(corpus.audio[a].id) +
                                  " has no visual item in its group");
    }
    pairs.push_back({a, it->second});
  }
  return pairs;
}

BatchStream::BatchStream(std::size_t examples, std::size_t batch_size,
                         std::uint64_t seed)
    : examples_(examples), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (examples == 0) throw std::invalid_argument("dataset is empty");
  if (examples < batch_size) {
    throw std::invalid_argument("dataset has " + std::to_string(examples) +
                                " examples, fewer than batch size " +
                                std::to_string(batch_size));
  }
}

std::vector<std::size_t> BatchStream::batch(std::uint64_t step) {
  const std::uint64_t epoch = step / batches_per_epoch();
  const std::uint64_t slot = step % batches_per_epoch();
  if (epoch != cached_epoch_) {
    order_.resize(examples_);
    for (std::size_t i = 0; i < examples_; ++i) order_[i] = i;
    Rng rng(seed_, "batch.shuffle", epoch);
    for (std::size_t i = examples_; i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order_[i - 1], order_[j]);
    }
    cached_epoch_ = epoch;
  }
  const auto first = order_.begin() + static_cast<std::ptrdiff_t>(slot * batch_size_);
  return {first, first + static_cast<std::ptrdiff_t>(batch_size_)};
}

std::vector<double> pooled_audio(const FeatureMatrix& features,
                                 std::size_t crop_frames, CropMode mode,
                                 const AugmentSpec* augment, Rng& rng) {
  FeatureMatrix m = crop_or_pad(features, crop_frames, mode, rng);
  if (augment != nullptr) m = spec_augment(m, *augment, rng);
  return temporal_mean(m);
}

namespace {

Batch assemble(const Corpus& corpus, const std::vector<PairRef>& pairs,
               const std::vector<std::size_t>& picks, std::uint64_t step,
               std::uint64_t seed, std::size_t crop_frames,
               const AugmentSpec* augment) {
  const std::size_t b = picks.size();
  const std::size_t da = corpus.audio[pairs[picks[0]].audio].features.coeffs;
  const std::size_t dv = corpus.visual[pairs[picks[0]].visual].vector.size();
  Batch batch{Tensor::matrix(b, da, 0.0), Tensor::matrix(b, dv, 0.0), {}, {}};
  for (std::size_t i = 0; i < b; ++i) {
    const PairRef& p = pairs[picks[i]];
    const FeaturizedAudio& a = corpus.audio[p.audio];
    const VisualItem& v = corpus.visual[p.visual];
    Rng rng(seed, "batch.augment", step * b + i);
    const auto row = pooled_audio(a.features, crop_frames, CropMode::kTrain,
                                  augment, rng);
    std::copy(row.begin(), row.end(), batch.audio_inputs.values().begin() +
                                          static_cast<std::ptrdiff_t>(i * da));
    std::copy(v.vector.begin(), v.vector.end(),
              batch.visual_inputs.values().begin() +
                  static_cast<std::ptrdiff_t>(i * dv));
    batch.groups_x.push_back(a.group);
    batch.groups_y.push_back(v.group);
  }
  return batch;
}

// Fixed-capacity FIFO between the batch producer and the update loop.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
};

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<Batch> make_batches(const Corpus& corpus,
                                const std::vector<PairRef>& pairs,
                                std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t count, std::size_t crop_frames,
                                const AugmentSpec* augment,
                                std::uint64_t first_step) {
  BatchStream stream(pairs.size(), batch_size, seed);
  std::vector<Batch> out;
  for (std::uint64_t s = first_step; s < first_step + count; ++s) {
    out.push_back(assemble(corpus, pairs, stream.batch(s), s, seed, crop_frames,
                           augment));
  }
  return out;
}

WarmStart parse_warm_start(const std::string& name) {
  if (name == "none") return WarmStart::kNone;
  if (name == "audio") return WarmStart::kAudio;
  if (name == "visual") return WarmStart::kVisual;
  if (name == "all") return WarmStart::kAll;
  throw std::invalid_argument("unknown warm start '" + name +
                              "' (audio|visual|all|none)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (crop_frames < 1) throw std::invalid_argument("crop_frames must be >= 1");
  if (!(triplet_margin >= 0.0)) {
    throw std::invalid_argument("triplet margin must be >= 0");
  }
  margin.validate();
  adam.validate();
  augment.validate();
  if (encoder.latent_dim == 0) throw std::invalid_argument("latent_dim must be > 0");
  if (eval_ks.empty()) throw std::invalid_argument("eval ks must not be empty");
}

void fit_standardization(EncoderParams& params, const Corpus& corpus,
                         std::size_t crop_frames) {
  auto fit = [](TowerParams& tower, const std::vector<std::vector<double>>& rows) {
    if (!tower.input_shift.empty() || rows.empty()) return;
    const std::size_t d = rows.front().size();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const auto& r : rows) {
      for (std::size_t k = 0; k < d; ++k) mean[k] += r[k];
    }
    for (double& m : mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows) {
      for (std::size_t k = 0; k < d; ++k) var[k] += (r[k] - mean[k]) * (r[k] - mean[k]);
    }
    tower.input_shift = mean;
    tower.input_scale.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
      const double sd = std::sqrt(var[k] / static_cast<double>(rows.size()));
      tower.input_scale[k] = sd > 1e-8 ? 1.0 / sd : 1.0;
    }
  };
  std::vector<std::vector<double>> audio_rows, visual_rows;
  Rng unused(0);
  for (const FeaturizedAudio& a : corpus.audio) {
    if (!a.validation) {
      audio_rows.push_back(
          pooled_audio(a.features, crop_frames, CropMode::kEval, nullptr, unused));
    }
  }
  for (const VisualItem& v : corpus.visual) {
    if (!v.validation) visual_rows.push_back(v.vector);
  }
  fit(params.audio, audio_rows);
  fit(params.visual, visual_rows);
}

LatentIndex build_index(const EncoderParams& params, const Corpus& corpus,
                        std::size_t crop_frames, bool validation_split) {
  std::vector<const VisualItem*> visual;
  for (const VisualItem& v : corpus.visual) {
    if (v.validation == validation_split) visual.push_back(&v);
  }
  std::vector<const FeaturizedAudio*> audio;
  for (const FeaturizedAudio& a : corpus.audio) {
    if (a.validation == validation_split) audio.push_back(&a);
  }
  if (visual.empty() || audio.empty()) {
    throw std::invalid_argument("split has no items to index");
  }
  const std::size_t dv = visual.front()->vector.size();
  const std::size_t da = audio.front()->features.coeffs;
  Tensor vin = Tensor::matrix(visual.size(), dv, 0.0);
  for (std::size_t i = 0; i < visual.size(); ++i) {
    std::copy(visual[i]->vector.begin(), visual[i]->vector.end(),
              vin.values().begin() + static_cast<std::ptrdiff_t>(i * dv));
  }
  Tensor ain = Tensor::matrix(audio.size(), da, 0.0);
  Rng unused(0);
  for (std::size_t i = 0; i < audio.size(); ++i) {
    const auto row = pooled_audio(audio[i]->features, crop_frames, CropMode::kEval,
                                  nullptr, unused);
    std::copy(row.begin(), row.end(),
              ain.values().begin() + static_cast<std::ptrdiff_t>(i * da));
  }
  const Tensor vemb = encode_batch(params, Tower::kVisual, vin);
  const Tensor aemb = encode_batch(params, Tower::kAudio, ain);
  const std::size_t d = vemb.shape()[1];
  LatentIndex index(d);
  for (std::size_t i = 0; i < visual.size(); ++i) {
    index.add(visual[i]->id, Modality::kVisual, visual[i]->group,
              {vemb.values().data() + i * d, d});
  }
  for (std::size_t i = 0; i < audio.size(); ++i) {
    index.add(audio[i]->id, Modality::kAudio, audio[i]->group,
              {aemb.values().data() + i * d, d});
  }
  return index;
}

std::pair<RecallReport, RecallReport> evaluate(const EncoderParams& params,
                                               const Corpus& corpus,
                                               std::size_t crop_frames,
                                               bool validation_split,
                                               std::span<const std::size_t> ks,
                                               CreditMode credit) {
  const LatentIndex index = build_index(params, corpus, crop_frames, validation_split);
  std::map<GroupId, std::uint64_t> visual_id, first_caption;
  for (std::size_t row = 0; row < index.size(); ++row) {
    if (index.modality(row) == Modality::kVisual) {
      visual_id[index.group(row)] = index.id(row);
    } else {
      auto [it, fresh] = first_caption.emplace(index.group(row), index.id(row));
      if (!fresh) it->second = std::min(it->second, index.id(row));
    }
  }
  std::vector<RecallQuery> s2i, i2s;
  for (std::size_t row = 0; row < index.size(); ++row) {
    const auto e = index.embedding(row);
    RecallQuery q{index.id(row), index.group(row), {e.begin(), e.end()}, std::nullopt};
    if (index.modality(row) == Modality::kAudio) {
      if (auto it = visual_id.find(q.group); it != visual_id.end()) q.paired_id = it->second;
      s2i.push_back(std::move(q));
    } else {
      if (auto it = first_caption.find(q.group); it != first_caption.end()) {
        q.paired_id = it->second;
      }
      i2s.push_back(std::move(q));
    }
  }
  return {recall_at_k(s2i, index, Modality::kVisual, ks, Direction::kSpeechToImage, credit),
          recall_at_k(i2s, index, Modality::kAudio, ks, Direction::kImageToSpeech, credit)};
}

EncoderParams warm_start(const EncoderParams& checkpoint, WarmStart which,
                         const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams fresh = init_params(config, seed);
  std::vector<Tower> towers;
  if (which == WarmStart::kAudio || which == WarmStart::kAll) towers.push_back(Tower::kAudio);
  if (which == WarmStart::kVisual || which == WarmStart::kAll) towers.push_back(Tower::kVisual);

  std::string mismatches;
  for (Tower t : towers) {
    const auto& want = fresh.tower(t).layers;
    const auto& have = checkpoint.tower(t).layers;
    if (want.size() != have.size()) {
      mismatches += std::string(" ") + tower_name(t) + ": " +
                    std::to_string(have.size()) + " layers vs " +
                    std::to_string(want.size()) + " configured;";
      continue;
    }
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (!want[i].weight.same_shape(have[i].weight)) {
        mismatches += std::string(" ") + tower_name(t) + " layer " + std::to_string(i) +
                      ": " + have[i].weight.shape_string() + " vs " +
                      want[i].weight.shape_string() + ";";
      }
    }
  }
  if (!mismatches.empty()) {
    throw std::invalid_argument("checkpoint incompatible with config:" + mismatches);
  }
  for (Tower t : towers) fresh.tower(t) = checkpoint.tower(t);
  fresh.validate();
  return fresh;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     const OptimizerState& optimizer) {
  ByteWriter w;
  write_params(w, params);
  write_optimizer(w, optimizer);
  write_file_bytes(path, w.bytes());
}

std::pair<EncoderParams, std::optional<OptimizerState>> load_checkpoint(
    const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, path.string());
  EncoderParams params = read_params(r);
  std::optional<OptimizerState> opt;
  if (r.remaining() > 0) {
    opt = read_optimizer(r);
    r.expect_end();
  }
  return {std::move(params), std::move(opt)};
}

std::string format_step_record(const StepRecord& r) {
  return std::to_string(r.step) + '\t' + exact(r.loss) + '\t' + exact(r.lr) + '\t' +
         exact(r.delta);
}

NodeId build_training_graph(Graph& graph, const EncoderParams& params,
                            std::span<const GroupId> groups_x,
                            std::span<const GroupId> groups_y,
                            const TrainConfig& config, std::uint64_t step) {
  const NodeId ain = graph.input("audio_in", false);
  const NodeId vin = graph.input("visual_in", false);
  const NodeId xa = build_tower(graph, params.audio, Tower::kAudio, ain);
  const NodeId yv = build_tower(graph, params.visual, Tower::kVisual, vin);
  const NodeId z = similarity_matrix(graph, xa, yv);
  const MaskMatrix mask = build_mask(groups_x, groups_y);
  NodeId loss;
  if (config.loss == LossKind::kMms) {
    loss = mms_loss(graph, z, mask, margin_at(config.margin, step));
  } else {
    Rng rng(config.seed, "triplet.negatives", step);
    loss = triplet_loss(graph, z, sample_triplet_negatives(mask, rng),
                        config.triplet_margin);
  }
  graph.set_output(loss);
  return loss;
}

GradcheckReport gradcheck_training_graph(const TrainConfig& config,
                                         std::size_t batch_size,
                                         std::uint64_t seed,
                                         const GradcheckOptions& options) {
  if (batch_size < 2) throw std::invalid_argument("gradcheck batch size must be >= 2");
  const EncoderParams params = init_params(config.encoder, seed);
  Rng rng(seed, "gradcheck.batch", 0);
  // Roughly half as many groups as rows, so sibling positives occur.
  std::vector<GroupId> groups(batch_size);
  for (GroupId& g : groups) {
    g = static_cast<GroupId>(rng.uniform_int(0, static_cast<std::int64_t>(batch_size / 2)));
  }
  auto random_matrix = [&](std::size_t cols) {
    Tensor t = Tensor::matrix(batch_size, cols, 0.0);
    for (double& v : t.values()) v = rng.normal();
    return t;
  };
  Graph graph;
  build_training_graph(graph, params, groups, groups, config, 0);
  NamedTensors bind = to_named(params);
  bind.emplace("audio_in", random_matrix(config.encoder.audio_input_dim));
  bind.emplace("visual_in", random_matrix(config.encoder.visual_input_dim));
  return gradcheck(graph, bind, options);
}

TrainResult train(const TrainConfig& config_in, const Corpus& corpus,
                  const std::optional<EncoderParams>& initial,
                  const TrainOutputs& outputs) {
  TrainConfig config = config_in;
  const std::vector<PairRef> pairs = paired_examples(corpus, false);
  if (pairs.empty()) throw std::invalid_argument("training split is empty");
  config.encoder.audio_input_dim = corpus.audio[pairs[0].audio].features.coeffs;
  config.encoder.visual_input_dim = corpus.visual[pairs[0].visual].vector.size();
  config.validate();

  TrainResult result;
  result.params = initial ? *initial : init_params(config.encoder, config.seed);
  fit_standardization(result.params, corpus, config.crop_frames);
  result.params.validate();
  if (result.params.audio.input_dim() != config.encoder.audio_input_dim ||
      result.params.visual.input_dim() != config.encoder.visual_input_dim) {
    throw std::invalid_argument("initial parameters do not match corpus dimensions");
  }

  const bool to_disk = !outputs.dir.empty();
  std::ofstream metrics, validation;
  if (to_disk) {
    std::filesystem::create_directories(outputs.dir / "checkpoints");
    metrics.open(outputs.dir / "metrics.tsv", std::ios::trunc);
    validation.open(outputs.dir / "validation.tsv", std::ios::trunc);
    if (!metrics || !validation) {
      throw std::runtime_error("cannot open logs in " + outputs.dir.string());
    }
  }
  const bool has_val = !paired_examples(corpus, true).empty();
  auto run_validation = [&](std::uint64_t step) {
    if (!has_val) return;
    auto [s2i, i2s] = evaluate(result.params, corpus, config.crop_frames, true,
                               config.eval_ks, config.credit);
    if (to_disk) {
      for (const RecallReport* r : {&s2i, &i2s}) {
        validation << step << '\t' << direction_name(r->direction);
        for (std::size_t i = 0; i < r->ks.size(); ++i) {
          validation << "\tR@" << r->ks[i] << '=' << exact(r->recall[i]);
        }
        validation << '\n';
      }
      validation.flush();
    }
    result.validation.push_back({step, std::move(s2i), std::move(i2s)});
  };

  // Batch preparation depends only on (seed, step), so running it on a
  // producer thread leaves the update sequence unchanged.
  BoundedQueue<Batch> queue(2);
  const AugmentSpec* augment = config.augment_enabled ? &config.augment : nullptr;
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      BatchStream stream(pairs.size(), config.batch_size, config.seed);
      for (std::uint64_t s = 0; s < config.max_steps; ++s) {
        if (!queue.push(assemble(corpus, pairs, stream.batch(s), s, config.seed,
                                 config.crop_frames, augment))) {
          return;
        }
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });
  struct JoinGuard {
    BoundedQueue<Batch>& q;
    std::thread& t;
    ~JoinGuard() {
      q.close();
      if (t.joinable()) t.join();
    }
  } guard{queue, producer};

  NamedTensors params = to_named(result.params);
  double best_loss = INFINITY;
  std::uint64_t best_step = 0;
  for (std::uint64_t step = 0; step < config.max_steps; ++step) {
    std::optional<Batch> batch = queue.pop();
    if (!batch) break;

    Graph graph;
    const double delta = margin_at(config.margin, step);
    build_training_graph(graph, result.params, batch->groups_x, batch->groups_y,
                         config, step);
    NamedTensors bind = params;
    bind.emplace("audio_in", standardize(result.params.audio, batch->audio_inputs));
    bind.emplace("visual_in", standardize(result.params.visual, batch->visual_inputs));
    const double loss = graph.forward(bind).item();
    const NamedTensors grads = graph.backward(Tensor::scalar(1.0));
    const double lr = learning_rate_at(config.adam, result.optimizer.step);
    adam_step(params, grads, result.optimizer, config.adam);
    assign_named(result.params, params);

    const StepRecord record{step, loss, lr, delta};
    result.log.push_back(record);
    if (to_disk) metrics << format_step_record(record) << '\n';

    if (config.watchdog_steps > 0) {
      if (loss < best_loss) {
        best_loss = loss;
        best_step = step;
      } else if (step - best_step >= config.watchdog_steps) {
        throw std::runtime_error("loss has not improved for " +
                                 std::to_string(config.watchdog_steps) +
                                 " steps (step " + std::to_string(step) + ")");
      }
    }
    const std::uint64_t done = step + 1;
    if (config.eval_every > 0 && done % config.eval_every == 0 &&
        done != config.max_steps) {
      run_validation(done);
    }
    if (to_disk && config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
      save_checkpoint(outputs.dir / "checkpoints" /
                          ("step-" + std::to_string(done) + ".ckpt"),
                      result.params, result.optimizer);
    }
  }
  if (producer_error) std::rethrow_exception(producer_error);

  run_validation(config.max_steps);
  if (to_disk) {
    metrics.flush();
    save_checkpoint(outputs.dir / "final.ckpt", result.params, result.optimizer);
  }
  return result;
}

}  // namespace mmsret
