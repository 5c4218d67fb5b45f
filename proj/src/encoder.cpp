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

#include "mmsret/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "mmsret/rng.hpp"

namespace mmsret {

const char* tower_name(Tower tower) {
  return tower == Tower::kAudio ? "audio" : "visual";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "none") return Activation::kNone;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::kNone: return "none";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  return "none";
}

std::size_t TowerParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.shape()[0];
}

std::size_t TowerParams::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.shape()[1];
}

void TowerParams::validate(const std::string& what) const {
  if (layers.empty()) throw std::invalid_argument(what + ": tower has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const std::string at = what + " layer " + std::to_string(i);
    if (l.weight.rank() != 2 || l.bias.rank() != 1 ||
        l.bias.size() != l.weight.shape()[1]) {
      throw std::invalid_argument(at + ": weight " + l.weight.shape_string() +
                                  " incompatible with bias " +
                                  l.bias.shape_string());
    }
    if (i > 0 && layers[i - 1].weight.shape()[1] != l.weight.shape()[0]) {
      throw std::invalid_argument(at + ": input width " +
                                  std::to_string(l.weight.shape()[0]) +
                                  " does not follow previous output " +
                                  std::to_string(layers[i - 1].weight.shape()[1]));
    }
  }
  if (input_shift.size() != input_scale.size() ||
      (!input_shift.empty() && input_shift.size() != input_dim())) {
    throw std::invalid_argument(what + ": standardization has wrong length");
  }
}

void EncoderParams::validate() const {
  audio.validate("audio tower");
  visual.validate("visual tower");
  if (audio.output_dim() != visual.output_dim()) {
    throw std::invalid_argument("towers disagree on latent dimension (" +
                                std::to_string(audio.output_dim()) + " vs " +
                                std::to_string(visual.output_dim()) + ")");
  }
}

TowerParams init_tower(std::size_t input_dim,
                       const std::vector<std::size_t>& hidden,
                       std::size_t latent_dim, Activation activation,
                       std::uint64_t seed) {
  Rng rng(seed);
  TowerParams tower;
  tower.activation = activation;
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(latent_dim);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::size_t in = widths[i];
    const std::size_t out = widths[i + 1];
    if (in == 0 || out == 0) throw std::invalid_argument("zero-width layer");
    const double limit = std::sqrt(3.0 / static_cast<double>(in));
    Layer layer{Tensor::matrix(in, out, 0.0), Tensor({out}, 0.0)};
    for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
    tower.layers.push_back(std::move(layer));
  }
  return tower;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  EncoderParams params;
  params.audio = init_tower(config.audio_input_dim, config.audio_hidden,
                            config.latent_dim, config.activation,
                            derive_seed(seed, "init.audio"));
  params.visual = init_tower(config.visual_input_dim, config.visual_hidden,
                             config.latent_dim, config.activation,
                             derive_seed(seed, "init.visual"));
  return params;
}

namespace {

std::string weight_name(Tower t, std::size_t i) {
  return std::string(tower_name(t)) + ".w" + std::to_string(i);
}

std::string bias_name(Tower t, std::size_t i) {
  return std::string(tower_name(t)) + ".b" + std::to_string(i);
}

}  // namespace

NamedTensors to_named(const EncoderParams& params) {
  NamedTensors named;
  for (Tower t : {Tower::kAudio, Tower::kVisual}) {
    const auto& layers = params.tower(t).layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      named.emplace(weight_name(t, i), layers[i].weight);
      named.emplace(bias_name(t, i), layers[i].bias);
    }
  }
  return named;
}

void assign_named(EncoderParams& params, const NamedTensors& named) {
  for (Tower t : {Tower::kAudio, Tower::kVisual}) {
    auto& layers = params.tower(t).layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (auto [name, slot] : {std::pair{weight_name(t, i), &layers[i].weight},
                                std::pair{bias_name(t, i), &layers[i].bias}}) {
        auto it = named.find(name);
        if (it == named.end()) {
          throw std::invalid_argument("missing parameter '" + name + "'");
        }
        if (!it->second.same_shape(*slot)) {
          throw std::invalid_argument("parameter '" + name + "' has shape " +
                                      it->second.shape_string() + ", expected " +
                                      slot->shape_string());
        }
        *slot = it->second;
      }
    }
  }
}

Tensor standardize(const TowerParams& tower, const Tensor& inputs) {
  if (tower.input_shift.empty()) return inputs;
  Tensor out = inputs;
  const std::size_t cols = tower.input_shift.size();
  if (inputs.rank() != 2 || inputs.shape()[1] != cols) {
    throw std::invalid_argument("standardize: inputs " + inputs.shape_string() +
                                " vs " + std::to_string(cols) + " features");
  }
  for (std::size_t r = 0; r < out.shape()[0]; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out(r, c) = (out(r, c) - tower.input_shift[c]) * tower.input_scale[c];
    }
  }
  return out;
}

NodeId build_tower(Graph& graph, const TowerParams& tower, Tower which,
                   NodeId input) {
  NodeId h = input;
  for (std::size_t i = 0; i < tower.layers.size(); ++i) {
    const NodeId w = graph.input(weight_name(which, i));
    const NodeId b = graph.input(bias_name(which, i));
    h = graph.add_row(graph.matmul(h, w), b);
    if (i + 1 < tower.layers.size()) {
      if (tower.activation == Activation::kTanh) h = graph.tanh(h);
      else if (tower.activation == Activation::kRelu) h = graph.relu(h);
    }
  }
  return h;
}

Tensor encode_batch(const EncoderParams& params, Tower tower,
                    const Tensor& inputs) {
  const TowerParams& tp = params.tower(tower);
  if (inputs.rank() != 2 || inputs.shape()[1] != tp.input_dim()) {
    throw std::invalid_argument(std::string(tower_name(tower)) +
                                " tower expects " +
                                std::to_string(tp.input_dim()) +
                                " input features, got " + inputs.shape_string());
  }
  Graph graph;
  const NodeId in = graph.input("input", false);
  graph.set_output(build_tower(graph, tp, tower, in));
  NamedTensors bind;
  bind.emplace("input", standardize(tp, inputs));
  const auto& layers = tp.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    bind.emplace(weight_name(tower, i), layers[i].weight);
    bind.emplace(bias_name(tower, i), layers[i].bias);
  }
  return graph.forward(bind);
}

std::vector<double> encode(const EncoderParams& params, Tower tower,
                           std::span<const double> input) {
  const Tensor row =
      Tensor::matrix(1, input.size(), std::vector<double>(input.begin(), input.end()));
  const Tensor out = encode_batch(params, tower, row);
  return out.storage();
}

Tensor similarity_matrix(const Tensor& x_emb, const Tensor& y_emb) {
  if (x_emb.rank() != 2 || y_emb.rank() != 2 ||
      x_emb.shape()[1] != y_emb.shape()[1]) {
    throw std::invalid_argument("similarity_matrix: embeddings " +
                                x_emb.shape_string() + " and " +
                                y_emb.shape_string() + " are incompatible");
  }
  if (x_emb.shape()[0] != y_emb.shape()[0]) {
    throw std::invalid_argument("similarity_matrix: batch sizes differ");
  }
  const std::size_t b = x_emb.shape()[0];
  const std::size_t d = x_emb.shape()[1];
  Tensor z = Tensor::matrix(b, b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += x_emb(i, k) * y_emb(j, k);
      z(i, j) = acc;
    }
  }
  return z;
}

NodeId similarity_matrix(Graph& graph, NodeId x_emb, NodeId y_emb) {
  return graph.matmul(x_emb, y_emb, false, true);
}

MaskMatrix::MaskMatrix(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 2 || values_.shape()[0] != values_.shape()[1]) {
    throw std::invalid_argument("mask must be square, got " +
                                values_.shape_string());
  }
  for (double v : values_.values()) {
    if (v != 0.0 && v != 1.0) {
      throw std::invalid_argument("mask entries must be 0 or 1");
    }
  }
}

bool MaskMatrix::aligned() const {
  for (std::size_t k = 0; k < size(); ++k) {
    if (values_(k, k) != 0.0) return false;
  }
  return true;
}

MaskMatrix build_mask(std::span<const GroupId> groups_x,
                      std::span<const GroupId> groups_y) {
  if (groups_x.size() != groups_y.size()) {
    throw std::invalid_argument("build_mask: group lists differ in length");
  }
  const std::size_t b = groups_x.size();
  Tensor m = Tensor::matrix(b, b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      m(i, j) = groups_x[i] == groups_y[j] ? 0.0 : 1.0;
    }
  }
  return MaskMatrix(std::move(m));
}

void write_params(ByteWriter& out, const EncoderParams& params) {
  params.validate();
  out.tag("MMCK");
  out.u32(kCheckpointVersion);
  out.u32(2);
  for (Tower t : {Tower::kAudio, Tower::kVisual}) {
    const TowerParams& tp = params.tower(t);
    out.u8(static_cast<std::uint8_t>(tp.activation));
    out.u32(static_cast<std::uint32_t>(tp.layers.size()));
    for (const Layer& l : tp.layers) {
      out.u32(static_cast<std::uint32_t>(l.weight.shape()[0]));
      out.u32(static_cast<std::uint32_t>(l.weight.shape()[1]));
    }
    out.u32(static_cast<std::uint32_t>(tp.input_shift.size()));
  }
  for (Tower t : {Tower::kAudio, Tower::kVisual}) {
    const TowerParams& tp = params.tower(t);
    for (double v : tp.input_shift) out.f64(v);
    for (double v : tp.input_scale) out.f64(v);
    for (const Layer& l : tp.layers) {
      for (double v : l.weight.values()) out.f64(v);
      for (double v : l.bias.values()) out.f64(v);
    }
  }
}

EncoderParams read_params(ByteReader& in) {
  in.expect_tag("MMCK");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(in.what() + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  if (in.u32() != 2) throw FormatError(in.what() + ": expected two towers");
  EncoderParams params;
  std::uint32_t standardization[2];
  for (Tower t : {Tower::kAudio, Tower::kVisual}) {
    TowerParams& tp = params.tower(t);
    const std::uint8_t act = in.u8();
    if (act > 2) throw FormatError(in.what() + ": bad activation code");
    tp.activation = static_cast<Activation>(act);
    const std::uint32_t count = in.u32();
    if (count == 0 || count > 64) {
      throw FormatError(in.what() + ": implausible layer count");
    }
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t rows = in.u32();
      const std::uint32_t cols = in.u32();
      if (static_cast<std::uint64_t>(rows) * cols * 8 > in.remaining()) {
        throw FormatError(in.what() + ": layer larger than file");
      }
      tp.layers.push_back({Tensor::matrix(rows, cols, 0.0), Tensor({cols}, 0.0)});
    }
    standardization[t == Tower::kAudio ? 0 : 1] = in.u32();
  }
  for (Tower t : {Tower::kAudio, Tower::kVisual}) {
    TowerParams& tp = params.tower(t);
    const std::uint32_t n = standardization[t == Tower::kAudio ? 0 : 1];
    if (static_cast<std::uint64_t>(n) * 16 > in.remaining()) {
      throw FormatError(in.what() + ": standardization larger than file");
    }
    tp.input_shift.resize(n);
    tp.input_scale.resize(n);
    for (double& v : tp.input_shift) v = in.f64();
    for (double& v : tp.input_scale) v = in.f64();
    for (Layer& l : tp.layers) {
      for (double& v : l.weight.values()) v = in.f64();
      for (double& v : l.bias.values()) v = in.f64();
    }
  }
  try {
    params.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(in.what() + ": " + e.what());
  }
  return params;
}

void save_params(const std::filesystem::path& path,
                 const EncoderParams& params) {
  ByteWriter w;
  write_params(w, params);
  write_file_bytes(path, w.bytes());
}

EncoderParams load_params(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, path.string());
  EncoderParams params = read_params(r);
  if (r.remaining() > 0) r.expect_tag("ADAM");
  return params;
}

}  // namespace mmsret
