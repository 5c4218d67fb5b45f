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

#include "mmsret/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mmsret {

double relative_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(Graph& graph, const NamedTensors& inputs,
                          const GradcheckOptions& options) {
  const Tensor& out = graph.forward(inputs);
  if (out.size() != 1) {
    throw GraphError("gradcheck needs a scalar output, got shape " +
                     out.shape_string());
  }
  const NamedTensors analytic = graph.backward(Tensor(out.shape(), 1.0));

  GradcheckReport report;
  NamedTensors probe = inputs;
  for (const auto& [name, grad] : analytic) {
    ParameterCheck check{.name = name};
    Tensor& x = probe.at(name);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + options.step;
      const double up = graph.forward(probe).item();
      x[i] = saved - options.step;
      const double down = graph.forward(probe).item();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err =
          relative_error(grad[i], numeric, options.denominator_floor);
      if (i == 0 || err > check.max_relative_error) {
        check.max_relative_error = err;
        check.worst_index = i;
        check.analytic_at_worst = grad[i];
        check.numeric_at_worst = numeric;
      }
    }
    check.passed = check.max_relative_error < options.tolerance;
    report.max_relative_error =
        std::max(report.max_relative_error, check.max_relative_error);
    report.passed = report.passed && check.passed;
    report.parameters.push_back(std::move(check));
  }
  graph.forward(inputs);
  return report;
}

}  // namespace mmsret
