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
#include <span>
#include <string>
#include <vector>

#include "mmsret/binary_io.hpp"
#include "mmsret/graph.hpp"
#include "mmsret/tensor.hpp"

namespace mmsret {

using GroupId = std::uint64_t;

/// x is the audio (spoken caption) side, y the visual side.
enum class Tower { kAudio, kVisual };

const char* tower_name(Tower tower);

enum class Activation : std::uint8_t { kNone = 0, kTanh = 1, kRelu = 2 };

Activation parse_activation(const std::string& name);
const char* activation_name(Activation act);

/// Affine map y = x W + b with W of shape (in, out).
struct Layer {
  Tensor weight;
  Tensor bias;

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Stack of affine layers with `activation` between consecutive layers (not
/// after the last). Inputs are standardized as (x - input_shift) * input_scale
/// before the first layer; empty vectors mean no standardization.
struct TowerParams {
  std::vector<Layer> layers;
  Activation activation = Activation::kTanh;
  std::vector<double> input_shift;
  std::vector<double> input_scale;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  void validate(const std::string& what) const;

  friend bool operator==(const TowerParams&, const TowerParams&) = default;
};

struct EncoderParams {
  TowerParams audio;
  TowerParams visual;

  TowerParams& tower(Tower t) { return t == Tower::kAudio ? audio : visual; }
  const TowerParams& tower(Tower t) const {
    return t == Tower::kAudio ? audio : visual;
  }
  std::size_t latent_dim() const { return audio.output_dim(); }
  void validate() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct EncoderConfig {
  std::size_t audio_input_dim = 128;
  std::size_t visual_input_dim = 48;
  std::vector<std::size_t> audio_hidden{64};
  std::vector<std::size_t> visual_hidden{64};
  std::size_t latent_dim = 32;
  Activation activation = Activation::kTanh;
};

/// Weights ~ U(-sqrt(3 / fan_in), sqrt(3 / fan_in)), biases zero.
TowerParams init_tower(std::size_t input_dim,
                       const std::vector<std::size_t>& hidden,
                       std::size_t latent_dim, Activation activation,
                       std::uint64_t seed);
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

/// Trainable tensors keyed "<tower>.w<i>" / "<tower>.b<i>".
NamedTensors to_named(const EncoderParams& params);
void assign_named(EncoderParams& params, const NamedTensors& named);

/// Applies the tower's input standardization to every row of `inputs`.
Tensor standardize(const TowerParams& tower, const Tensor& inputs);

/// Adds the tower to `graph` over the (already standardized) B x in matrix
/// `input`. Weight inputs are declared trainable under to_named() names.
NodeId build_tower(Graph& graph, const TowerParams& tower, Tower which,
                   NodeId input);

/// Latent vector of one input through one tower.
std::vector<double> encode(const EncoderParams& params, Tower tower,
                           std::span<const double> input);

/// Latent matrix (B x latent) of B input rows.
Tensor encode_batch(const EncoderParams& params, Tower tower,
                    const Tensor& inputs);

/// Z(i, j) = <x_i, y_j> for B x d embedding matrices.
Tensor similarity_matrix(const Tensor& x_emb, const Tensor& y_emb);
NodeId similarity_matrix(Graph& graph, NodeId x_emb, NodeId y_emb);

/// B x B indicator of non-matching pairs: 0 where groups agree, else 1.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  explicit MaskMatrix(Tensor values);

  std::size_t size() const { return values_.rows(); }
  bool negative(std::size_t i, std::size_t j) const {
    return values_(i, j) != 0.0;
  }
  const Tensor& tensor() const { return values_; }
  // True when every diagonal entry is zero.
  bool aligned() const;

  friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;

 private:
  Tensor values_;
};

MaskMatrix build_mask(std::span<const GroupId> groups_x,
                      std::span<const GroupId> groups_y);

// Checkpoint: 'MMCK', version, per tower (activation, input dim, layer count,
// layer shapes, standardization length), then every tensor as little-endian
// float64 in tower/layer order.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void write_params(ByteWriter& out, const EncoderParams& params);
EncoderParams read_params(ByteReader& in);
void save_params(const std::filesystem::path& path, const EncoderParams& params);
/// Loads the encoder section of a checkpoint, ignoring an appended optimizer
/// section.
EncoderParams load_params(const std::filesystem::path& path);

}  // namespace mmsret
