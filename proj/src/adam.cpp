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

#include "mmsret/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mmsret {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw std::invalid_argument("lr_decay must be in (0, 1]");
  }
  if (lr_decay_steps == 0) throw std::invalid_argument("lr_decay_steps must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
}

double learning_rate_at(const AdamConfig& config, std::uint64_t step) {
  return config.lr *
         std::pow(config.lr_decay, static_cast<double>(step / config.lr_decay_steps));
}

namespace {

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot != std::string::npos && dot + 1 < name.size() && name[dot + 1] == 'b';
}

}  // namespace

void adam_step(NamedTensors& params, const NamedTensors& grads,
               OptimizerState& state, const AdamConfig& config) {
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      throw std::invalid_argument("no gradient for parameter '" + name + "'");
    }
    if (!it->second.same_shape(p)) {
      throw std::invalid_argument("gradient for '" + name + "' has shape " +
                                  it->second.shape_string() + ", parameter " +
                                  p.shape_string());
    }
    if (!it->second.all_finite()) {
      throw std::invalid_argument("non-finite gradient for parameter '" + name + "'");
    }
  }

  const double lr = learning_rate_at(config, state.step);
  const std::uint64_t t = state.step + 1;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));

  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.first_moment.try_emplace(name, p.shape(), 0.0).first->second;
    Tensor& v = state.second_moment.try_emplace(name, p.shape(), 0.0).first->second;
    const bool decays = config.weight_decay > 0.0 &&
                        (config.decay_biases || !is_bias(name));
    const double shrink =
        decays && config.decoupled_weight_decay ? 1.0 - lr * config.weight_decay : 1.0;
    const double coupled =
        decays && !config.decoupled_weight_decay ? config.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + coupled * p[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] = p[i] * shrink - lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
  state.step = t;
}

void write_optimizer(ByteWriter& out, const OptimizerState& state) {
  out.tag("ADAM");
  out.u64(state.step);
  out.u32(static_cast<std::uint32_t>(state.first_moment.size()));
  for (const auto& [name, m] : state.first_moment) {
    const Tensor& v = state.second_moment.at(name);
    out.u32(static_cast<std::uint32_t>(name.size()));
    for (char c : name) out.u8(static_cast<std::uint8_t>(c));
    out.u32(static_cast<std::uint32_t>(m.rank()));
    for (std::size_t e : m.shape()) out.u32(static_cast<std::uint32_t>(e));
    for (double x : m.values()) out.f64(x);
    for (double x : v.values()) out.f64(x);
  }
}

OptimizerState read_optimizer(ByteReader& in) {
  in.expect_tag("ADAM");
  OptimizerState state;
  state.step = in.u64();
  const std::uint32_t count = in.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = in.u32();
    if (len > in.remaining()) throw FormatError(in.what() + ": bad name length");
    std::string name(len, '\0');
    for (char& c : name) c = static_cast<char>(in.u8());
    const std::uint32_t rank = in.u32();
    if (rank > 2) throw FormatError(in.what() + ": bad moment rank");
    std::vector<std::size_t> shape(rank);
    std::uint64_t elems = 1;
    for (auto& e : shape) {
      e = in.u32();
      elems *= e;
    }
    if (elems * 16 > in.remaining()) {
      throw FormatError(in.what() + ": moment larger than file");
    }
    Tensor m(shape, 0.0), v(shape, 0.0);
    for (double& x : m.values()) x = in.f64();
    for (double& x : v.values()) x = in.f64();
    state.first_moment.emplace(name, std::move(m));
    state.second_moment.emplace(std::move(name), std::move(v));
  }
  return state;
}

}  // namespace mmsret
