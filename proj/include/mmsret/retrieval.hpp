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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmsret/encoder.hpp"
#include "mmsret/tensor.hpp"

namespace mmsret {

enum class Modality : std::uint8_t { kAudio = 0, kVisual = 1 };

const char* modality_name(Modality m);
Modality parse_modality(const std::string& name);

/// Embeddings of audio and visual items in the shared latent space.
class LatentIndex {
 public:
  LatentIndex() = default;
  explicit LatentIndex(std::size_t dim) : dim_(dim) {}

  void add(std::uint64_t id, Modality modality, GroupId group,
           std::span<const double> embedding);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  std::uint64_t id(std::size_t row) const { return ids_[row]; }
  Modality modality(std::size_t row) const { return modality_[row]; }
  GroupId group(std::size_t row) const { return groups_[row]; }
  std::span<const double> embedding(std::size_t row) const {
    return {values_.data() + row * dim_, dim_};
  }

  friend bool operator==(const LatentIndex&, const LatentIndex&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint64_t> ids_;
  std::vector<Modality> modality_;
  std::vector<GroupId> groups_;
  std::vector<double> values_;
};

struct RankedCandidate {
  std::size_t row;
  std::uint64_t id;
  GroupId group;
  double score;
};

/// Items of `target` modality by descending dot product with `query`, ties
/// broken by ascending item id.
std::vector<RankedCandidate> rank_candidates(std::span<const double> query,
                                             const LatentIndex& index,
                                             Modality target);

enum class Direction { kSpeechToImage, kImageToSpeech };

const char* direction_name(Direction d);

/// Multi-positive: any item of the query's group counts. Exact: only the
/// query's paired item counts.
enum class CreditMode { kMultiPositive, kExactItem };

CreditMode parse_credit_mode(const std::string& name);

struct RecallQuery {
  std::uint64_t id = 0;
  GroupId group = 0;
  std::vector<double> embedding;
  std::optional<std::uint64_t> paired_id;
};

inline const std::vector<std::size_t> kDefaultKs{1, 5, 10, 50, 100};

struct RecallReport {
  Direction direction = Direction::kSpeechToImage;
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // parallel to ks
  std::size_t queries = 0;

  double at(std::size_t k) const;
};

RecallReport recall_at_k(std::span<const RecallQuery> queries,
                         const LatentIndex& index, Modality target,
                         std::span<const std::size_t> ks, Direction direction,
                         CreditMode mode = CreditMode::kMultiPositive);

/// 1-based rank of the first credited item per query (as used by
/// recall_at_k). Throws when some query has no positive in the index.
std::vector<std::size_t> first_positive_ranks(std::span<const RecallQuery> queries,
                                              const LatentIndex& index,
                                              Modality target, CreditMode mode);

struct HumanJudgment {
  std::uint64_t query_id = 0;
  std::uint64_t candidate_id = 0;
  int rank = 1;
  std::array<bool, 5> votes{};

  int good_votes() const;
  // At least 3 of the 5 raters.
  bool majority_good() const { return good_votes() >= 3; }
};

/// R@k = fraction of queries whose top-k judged pairs contain a majority-good
/// pair. Every query needs judgments for ranks 1..max(ks).
RecallReport human_recall(std::span<const HumanJudgment> judgments,
                          std::span<const std::size_t> ks, Direction direction);

/// Tab-separated: query_id, candidate_id, rank, v1..v5 (0/1).
std::vector<HumanJudgment> parse_judgments(const std::string& text);
std::vector<HumanJudgment> read_judgments(const std::filesystem::path& path);
std::string format_judgments(std::span<const HumanJudgment> judgments);

/// One row per report: direction, queries, then R@k per k.
std::string format_reports(std::span<const RecallReport> reports);

inline constexpr std::uint32_t kIndexVersion = 1;
std::vector<std::uint8_t> encode_index(const LatentIndex& index);
LatentIndex decode_index(const std::vector<std::uint8_t>& bytes);
void save_index(const std::filesystem::path& path, const LatentIndex& index);
LatentIndex load_index(const std::filesystem::path& path);

}  // namespace mmsret
