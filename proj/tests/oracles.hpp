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

// Deliberately naive reference implementations, written without reusing the
// library's vectorized code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "mmsret/retrieval.hpp"
#include "mmsret/tensor.hpp"

namespace oracle {

using mmsret::Tensor;

// Direct transcription of the masked margin softmax: both directional terms,
// each -(1/B) sum_k log(e^{Z_kk - d} / (e^{Z_kk - d} + sum_{M=1} e^{Z})).
inline double mms_loss(const Tensor& z, const Tensor& m, double delta) {
  const std::size_t b = z.rows();
  double lxy = 0.0, lyx = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    const double pos = std::exp(z(k, k) - delta);
    double den_row = pos, den_col = pos;
    for (std::size_t j = 0; j < b; ++j) {
      if (m(k, j) != 0.0) den_row += std::exp(z(k, j));
      if (m(j, k) != 0.0) den_col += std::exp(z(j, k));
    }
    lxy -= std::log(pos / den_row);
    lyx -= std::log(pos / den_col);
  }
  return (lxy + lyx) / static_cast<double>(b);
}

inline Tensor mask_from_groups(const std::vector<std::uint64_t>& gx,
                               const std::vector<std::uint64_t>& gy) {
  Tensor m = Tensor::matrix(gx.size(), gy.size(), 0.0);
  for (std::size_t i = 0; i < gx.size(); ++i) {
    for (std::size_t j = 0; j < gy.size(); ++j) m(i, j) = gx[i] == gy[j] ? 0.0 : 1.0;
  }
  return m;
}

// Rank of item `p` for `query`: one plus the number of target items ordered
// strictly before it (higher score, or equal score and smaller id).
inline std::size_t rank_of(std::span<const double> query,
                           const mmsret::LatentIndex& index,
                           mmsret::Modality target, std::size_t p) {
  auto score = [&](std::size_t row) {
    double s = 0.0;
    for (std::size_t k = 0; k < query.size(); ++k) s += query[k] * index.embedding(row)[k];
    return s;
  };
  const double sp = score(p);
  std::size_t ahead = 0;
  for (std::size_t c = 0; c < index.size(); ++c) {
    if (c == p || index.modality(c) != target) continue;
    const double sc = score(c);
    if (sc > sp || (sc == sp && index.id(c) < index.id(p))) ++ahead;
  }
  return ahead + 1;
}

// Fraction of queries with some credited item at rank <= k.
inline double recall(std::span<const mmsret::RecallQuery> queries,
                     const mmsret::LatentIndex& index, mmsret::Modality target,
                     std::size_t k, mmsret::CreditMode mode) {
  std::size_t hits = 0;
  for (const auto& q : queries) {
    bool hit = false;
    for (std::size_t p = 0; p < index.size() && !hit; ++p) {
      if (index.modality(p) != target) continue;
      const bool credited = mode == mmsret::CreditMode::kExactItem
                                ? q.paired_id && index.id(p) == *q.paired_id
                                : index.group(p) == q.group;
      if (credited && rank_of(q.embedding, index, target, p) <= k) hit = true;
    }
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

// Per query: recalled at k when some judged pair at rank <= k has >= 3 votes.
inline double human_recall(std::span<const mmsret::HumanJudgment> judgments,
                           std::size_t k) {
  std::map<std::uint64_t, bool> hit;
  for (const auto& j : judgments) {
    int votes = 0;
    for (bool v : j.votes) votes += v ? 1 : 0;
    bool& h = hit[j.query_id];
    if (static_cast<std::size_t>(j.rank) <= k && votes >= 3) h = true;
  }
  std::size_t n = 0;
  for (const auto& [q, h] : hit) n += h ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(hit.size());
}

// Frames of length w starting every h samples that fit in n samples.
inline std::size_t frames_by_walking(std::size_t n, std::size_t w, std::size_t h) {
  std::size_t count = 0;
  for (std::size_t start = 0; start + w <= n; start += h) ++count;
  return count;
}

// Central differences of a scalar function of one tensor.
inline Tensor numeric_gradient(const std::function<double(const Tensor&)>& f,
                               const Tensor& at, double h) {
  Tensor g(at.shape(), 0.0);
  Tensor x = at;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// HTK mel scale, written out independently of the library.
inline double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double inv_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Index of the mel filter (of n spanning 0..nyquist) whose center is nearest hz.
inline std::size_t nearest_mel_center(double hz, std::size_t n, double nyquist) {
  const double top = mel(nyquist);
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t b = 0; b < n; ++b) {
    const double center = inv_mel(top * static_cast<double>(b + 1) / static_cast<double>(n + 1));
    if (std::abs(center - hz) < best_d) {
      best_d = std::abs(center - hz);
      best = b;
    }
  }
  return best;
}

}  // namespace oracle
