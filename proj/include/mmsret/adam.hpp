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

#include "mmsret/binary_io.hpp"
#include "mmsret/graph.hpp"

namespace mmsret {

struct AdamConfig {
  double lr = 0.001;
  double lr_decay = 0.999;
  std::uint64_t lr_decay_steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 4e-5;
  // Decoupled: params *= (1 - lr * weight_decay) before the Adam delta.
  // Coupled: weight_decay * param is added to the gradient.
  bool decoupled_weight_decay = true;
  bool decay_biases = true;

  void validate() const;
};

/// lr * lr_decay^floor(step / lr_decay_steps).
double learning_rate_at(const AdamConfig& config, std::uint64_t step);

struct OptimizerState {
  std::uint64_t step = 0;  // updates applied so far
  NamedTensors first_moment;
  NamedTensors second_moment;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Applies one bias-corrected Adam update to every tensor in `params` using
/// the matching entry of `grads`. The learning rate is taken at
/// state.step (before increment). Non-finite gradients throw
/// std::invalid_argument naming the parameter, leaving params untouched.
void adam_step(NamedTensors& params, const NamedTensors& grads,
               OptimizerState& state, const AdamConfig& config);

/// Appended checkpoint section: 'ADAM', step, tensor count, then per tensor
/// (name length, name, element count, first moment, second moment).
void write_optimizer(ByteWriter& out, const OptimizerState& state);
OptimizerState read_optimizer(ByteReader& in);

}  // namespace mmsret
