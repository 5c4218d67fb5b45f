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
#include <random>
#include <string_view>

namespace mmsret {

/// Seeds for every random stream derive from one root seed:
///   derive_seed(root, label, index) = splitmix64(root ^ fnv1a(label) ^ mix(index))
/// so a stream is identified by (root, purpose label, index) and never by the
/// order in which streams were created.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::uint64_t index = 0);

std::uint64_t splitmix64(std::uint64_t x);

/// Seeded random source. The distribution helpers are implemented here
/// rather than with <random> distributions so that streams are identical
/// across standard libraries. uniform_int and normal are virtual so tests
/// can force specific draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, std::string_view label, std::uint64_t index = 0)
      : engine_(derive_seed(root, label, index)) {}
  virtual ~Rng() = default;

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on the closed range [lo, hi].
  virtual std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal draw.
  virtual double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mmsret
