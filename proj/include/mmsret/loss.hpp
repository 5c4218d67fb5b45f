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
#include <optional>
#include <vector>

#include "mmsret/encoder.hpp"
#include "mmsret/graph.hpp"
#include "mmsret/rng.hpp"

namespace mmsret {

/// delta(step) = initial * factor^floor(step / interval).
struct MarginSchedule {
  double initial = 0.001;
  double factor = 1.002;
  std::uint64_t interval = 1000;

  void validate() const;
};

double margin_at(const MarginSchedule& schedule, std::uint64_t step);

enum class LossKind { kMms, kTriplet };

LossKind parse_loss_kind(const std::string& name);
const char* loss_kind_name(LossKind kind);

/// Sampled negative per row (x_k against y_m) and per column (y_k against
/// x_n). Empty when the row/column has no eligible negative.
struct TripletNegatives {
  std::vector<std::optional<std::size_t>> row;
  std::vector<std::optional<std::size_t>> col;
};

/// One uniform draw per row and per column among cells with M = 1.
TripletNegatives sample_triplet_negatives(const MaskMatrix& mask, Rng& rng);

/// Masked margin softmax over the B x B similarity node `z`:
///   L = L_xy + L_yx,
///   L_xy = -(1/B) sum_i log(e^{Z_ii - delta} /
///                           (e^{Z_ii - delta} + sum_j M_ij e^{Z_ij}))
/// and L_yx the same over columns. Rows/columns without negatives add 0.
NodeId mms_loss(Graph& graph, NodeId z, const MaskMatrix& mask, double delta);

/// sum_k max(0, Z_km - Z_kk + margin) + max(0, Z_nk - Z_kk + margin).
NodeId triplet_loss(Graph& graph, NodeId z, const TripletNegatives& negatives,
                    double margin);

double mms_loss(const Tensor& z, const MaskMatrix& mask, double delta);
double triplet_loss(const Tensor& z, const MaskMatrix& mask, double margin,
                    Rng& rng);

/// Closed-form dL_MMS/dZ, computed without the graph.
Tensor mms_grad_reference(const Tensor& z, const MaskMatrix& mask,
                          double delta);

}  // namespace mmsret
