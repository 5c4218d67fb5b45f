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

#include <cstddef>
#include <string>
#include <vector>

#include "mmsret/graph.hpp"

namespace mmsret {

struct GradcheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  // Denominator floor of the relative error, so coordinates whose true
  // gradient is ~0 are judged by absolute error instead.
  double denominator_floor = 1e-3;
};

struct ParameterCheck {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<ParameterCheck> parameters;
  double max_relative_error = 0.0;
  bool passed = true;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Compares backward() against central differences for every trainable input
/// of a scalar-valued graph. The graph is re-evaluated at the unperturbed
/// inputs before returning.
GradcheckReport gradcheck(Graph& graph, const NamedTensors& inputs,
                          const GradcheckOptions& options = {});

}  // namespace mmsret
