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

#include "mmsret/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmsret {

void MarginSchedule::validate() const {
  if (!(initial > 0.0)) throw std::invalid_argument("margin.initial must be > 0");
  if (!(factor >= 1.0)) throw std::invalid_argument("margin.factor must be >= 1");
  if (interval == 0) throw std::invalid_argument("margin.interval must be > 0");
}

double margin_at(const MarginSchedule& schedule, std::uint64_t step) {
  const std::uint64_t k = step / schedule.interval;
  return schedule.initial * std::pow(schedule.factor, static_cast<double>(k));
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "mms") return LossKind::kMms;
  if (name == "triplet") return LossKind::kTriplet;
  throw std::invalid_argument("unknown loss '" + name + "' (mms|triplet)");
}

const char* loss_kind_name(LossKind kind) {
  return kind == LossKind::kMms ? "mms" : "triplet";
}

namespace {

void check_pair(const Tensor& z, const MaskMatrix& mask) {
  if (z.rank() != 2 || z.shape()[0] != z.shape()[1] ||
      z.shape()[0] != mask.size()) {
    throw std::invalid_argument("similarity " + z.shape_string() +
                                " does not match a " +
                                std::to_string(mask.size()) + "x" +
                                std::to_string(mask.size()) + " mask");
  }
}

void check_mask(const MaskMatrix& mask) {
  if (mask.size() == 0) throw std::invalid_argument("empty mask");
  if (!mask.aligned()) {
    throw std::invalid_argument("mask has a nonzero diagonal entry");
  }
}

}  // namespace

TripletNegatives sample_triplet_negatives(const MaskMatrix& mask, Rng& rng) {
  check_mask(mask);
  const std::size_t b = mask.size();
  TripletNegatives out;
  out.row.resize(b);
  out.col.resize(b);
  std::vector<std::size_t> eligible;
  for (std::size_t k = 0; k < b; ++k) {
    eligible.clear();
    for (std::size_t j = 0; j < b; ++j) {
      if (mask.negative(k, j)) eligible.push_back(j);
    }
    if (!eligible.empty()) {
      out.row[k] = eligible[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(eligible.size()) - 1))];
    }
    eligible.clear();
    for (std::size_t i = 0; i < b; ++i) {
      if (mask.negative(i, k)) eligible.push_back(i);
    }
    if (!eligible.empty()) {
      out.col[k] = eligible[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(eligible.size()) - 1))];
    }
  }
  return out;
}

NodeId mms_loss(Graph& graph, NodeId z, const MaskMatrix& mask, double delta) {
  check_mask(mask);
  const std::size_t b = mask.size();
  // Logits: Z with delta subtracted on the diagonal. The softmax support of
  // row/column k is the diagonal plus every masked-in negative.
  Tensor margin = Tensor::matrix(b, b, 0.0);
  Tensor include = mask.tensor();
  for (std::size_t k = 0; k < b; ++k) {
    margin(k, k) = delta;
    include(k, k) = 1.0;
  }
  const NodeId logits = graph.sub(z, graph.constant(std::move(margin)));
  const NodeId positive = graph.diag(logits);
  const NodeId rows = graph.masked_logsumexp(logits, include, Axis::kRows);
  const NodeId cols = graph.masked_logsumexp(logits, include, Axis::kCols);
  const NodeId l_xy = graph.mean(graph.sub(rows, positive));
  const NodeId l_yx = graph.mean(graph.sub(cols, positive));
  return graph.add(l_xy, l_yx);
}

NodeId triplet_loss(Graph& graph, NodeId z, const TripletNegatives& negatives,
                    double margin) {
  if (negatives.row.size() != negatives.col.size()) {
    throw std::invalid_argument("triplet negatives: row/col length mismatch");
  }
  std::vector<std::pair<std::size_t, std::size_t>> neg_cells;
  std::vector<std::pair<std::size_t, std::size_t>> pos_cells;
  for (std::size_t k = 0; k < negatives.row.size(); ++k) {
    if (negatives.row[k]) {
      neg_cells.emplace_back(k, *negatives.row[k]);
      pos_cells.emplace_back(k, k);
    }
  }
  for (std::size_t k = 0; k < negatives.col.size(); ++k) {
    if (negatives.col[k]) {
      neg_cells.emplace_back(*negatives.col[k], k);
      pos_cells.emplace_back(k, k);
    }
  }
  if (neg_cells.empty()) {
    // Keep z reachable so gradients come back as explicit zeros.
    return graph.scale(graph.sum(z), 0.0);
  }
  const NodeId neg = graph.gather(z, std::move(neg_cells));
  const NodeId pos = graph.gather(z, std::move(pos_cells));
  return graph.sum(graph.relu(graph.add_scalar(graph.sub(neg, pos), margin)));
}

double mms_loss(const Tensor& z, const MaskMatrix& mask, double delta) {
  check_pair(z, mask);
  Graph graph;
  const NodeId zin = graph.input("z", false);
  graph.set_output(mms_loss(graph, zin, mask, delta));
  return graph.forward({{"z", z}}).item();
}

double triplet_loss(const Tensor& z, const MaskMatrix& mask, double margin,
                    Rng& rng) {
  check_pair(z, mask);
  const TripletNegatives negatives = sample_triplet_negatives(mask, rng);
  Graph graph;
  const NodeId zin = graph.input("z", false);
  graph.set_output(triplet_loss(graph, zin, negatives, margin));
  return graph.forward({{"z", z}}).item();
}

Tensor mms_grad_reference(const Tensor& z, const MaskMatrix& mask,
                          double delta) {
  check_pair(z, mask);
  check_mask(mask);
  const std::size_t b = mask.size();
  const double inv_b = 1.0 / static_cast<double>(b);
  Tensor grad = Tensor::matrix(b, b, 0.0);
  auto logit = [&](std::size_t i, std::size_t j) {
    return i == j ? z(i, j) - delta : z(i, j);
  };
  // Row-wise (x to y) and column-wise (y to x) softmax cross-entropies:
  // dL/dlogit = (softmax - onehot(diagonal)) / B over the support.
  for (int pass = 0; pass < 2; ++pass) {
    const bool by_row = pass == 0;
    for (std::size_t k = 0; k < b; ++k) {
      auto cell = [&](std::size_t t) {
        return by_row ? std::pair{k, t} : std::pair{t, k};
      };
      auto in_support = [&](std::size_t t) {
        const auto [r, c] = cell(t);
        return t == k || mask.negative(r, c);
      };
      double peak = -INFINITY;
      for (std::size_t t = 0; t < b; ++t) {
        if (in_support(t)) peak = std::max(peak, logit(cell(t).first, cell(t).second));
      }
      double norm = 0.0;
      for (std::size_t t = 0; t < b; ++t) {
        if (in_support(t)) norm += std::exp(logit(cell(t).first, cell(t).second) - peak);
      }
      for (std::size_t t = 0; t < b; ++t) {
        if (!in_support(t)) continue;
        const auto [r, c] = cell(t);
        const double p = std::exp(logit(r, c) - peak) / norm;
        grad(r, c) += inv_b * (p - (t == k ? 1.0 : 0.0));
      }
    }
  }
  return grad;
}

}  // namespace mmsret
