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

#include <algorithm>
#include <random>

#include "doctest.h"
#include "mmsret/retrieval.hpp"
#include "mmsret/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mmsret;

namespace {

// Visual items 0..g-1 (one per group), then `per` audio queries per group.
struct Fixture {
  LatentIndex index;
  std::vector<RecallQuery> queries;
};

Fixture random_fixture(Rng& rng, std::size_t groups, std::size_t per, std::size_t dim,
                       bool coarse) {
  Fixture f{LatentIndex(dim), {}};
  auto draw = [&] {
    std::vector<double> v(dim);
    for (double& x : v) x = coarse ? static_cast<double>(rng.uniform_int(-1, 1)) : rng.normal();
    return v;
  };
  for (std::size_t g = 0; g < groups; ++g) f.index.add(g, Modality::kVisual, g, draw());
  std::uint64_t id = 1000;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t k = 0; k < per; ++k) {
      f.queries.push_back({id++, g, draw(), g});
    }
  }
  return f;
}

HumanJudgment judged(std::uint64_t q, std::uint64_t c, int rank, int good) {
  HumanJudgment j{.query_id = q, .candidate_id = c, .rank = rank, .votes = {}};
  for (int i = 0; i < good; ++i) j.votes[static_cast<std::size_t>(i)] = true;
  return j;
}

}  // namespace

TEST_CASE("ranking orders by score then id") {
  LatentIndex index(2);
  index.add(5, Modality::kVisual, 0, std::vector<double>{1, 0});
  index.add(3, Modality::kVisual, 1, std::vector<double>{1, 0});
  index.add(9, Modality::kVisual, 2, std::vector<double>{0, 2});
  index.add(1, Modality::kAudio, 0, std::vector<double>{9, 9});
  const auto ranked = rank_candidates(std::vector<double>{1, 1}, index, Modality::kVisual);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].id == 9);
  CHECK(ranked[1].id == 3);
  CHECK(ranked[2].id == 5);
  CHECK(ranked[0].score == 2.0);
  CHECK_THROWS_AS(index.add(2, Modality::kAudio, 0, std::vector<double>{1}),
                  std::invalid_argument);
}

TEST_CASE("ranking agrees with a sort of brute-force scores") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Fixture f = random_fixture(rng, 20, 1, 3, true);
    const auto& q = f.queries[0].embedding;
    const auto ranked = rank_candidates(q, f.index, Modality::kVisual);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      CHECK(oracle::rank_of(q, f.index, Modality::kVisual, ranked[r].row) == r + 1);
    }
  }
}

TEST_CASE("recall agrees with brute force in both credit modes") {
  Rng rng(2);
  const std::vector<std::size_t> ks{1, 2, 5, 10};
  for (int trial = 0; trial < 60; ++trial) {
    const bool coarse = trial % 2 == 0;
    const Fixture f = random_fixture(rng, 12, 3, 4, coarse);
    for (CreditMode mode : {CreditMode::kMultiPositive, CreditMode::kExactItem}) {
      const RecallReport r = recall_at_k(f.queries, f.index, Modality::kVisual, ks,
                                         Direction::kSpeechToImage, mode);
      CHECK(r.queries == f.queries.size());
      for (std::size_t i = 0; i < ks.size(); ++i) {
        CHECK(r.recall[i] ==
              doctest::Approx(oracle::recall(f.queries, f.index, Modality::kVisual, ks[i], mode)));
        if (i > 0) CHECK(r.recall[i] >= r.recall[i - 1]);
      }
    }
  }
}

TEST_CASE("multi-positive credit counts any sibling") {
  LatentIndex index(1);
  index.add(10, Modality::kAudio, 0, std::vector<double>{1});
  index.add(11, Modality::kAudio, 0, std::vector<double>{5});
  index.add(12, Modality::kAudio, 1, std::vector<double>{3});
  const std::vector<RecallQuery> q{{1, 0, {1.0}, 10}};
  const std::vector<std::size_t> ks{1, 2};
  const auto multi = recall_at_k(q, index, Modality::kAudio, ks, Direction::kImageToSpeech);
  CHECK(multi.recall == std::vector<double>{1.0, 1.0});
  const auto exact = recall_at_k(q, index, Modality::kAudio, ks, Direction::kImageToSpeech,
                                 CreditMode::kExactItem);
  CHECK(exact.recall == std::vector<double>{0.0, 0.0});
  CHECK(first_positive_ranks(q, index, Modality::kAudio, CreditMode::kExactItem) ==
        std::vector<std::size_t>{3});
}

TEST_CASE("queries without a positive are an error") {
  LatentIndex index(1);
  index.add(1, Modality::kVisual, 0, std::vector<double>{1});
  const std::vector<RecallQuery> q{{2, 7, {1.0}, std::nullopt}};
  const std::vector<std::size_t> ks{1};
  CHECK_THROWS_AS(recall_at_k(q, index, Modality::kVisual, ks, Direction::kSpeechToImage),
                  std::invalid_argument);
}

TEST_CASE("human recall examples") {
  const std::vector<HumanJudgment> j{
      judged(1, 10, 1, 2), judged(1, 11, 2, 3),  // first majority at rank 2
      judged(2, 10, 1, 5), judged(2, 11, 2, 0),  // at rank 1
      judged(3, 10, 1, 0), judged(3, 11, 2, 2),  // never
  };
  const std::vector<std::size_t> ks{1, 2};
  const RecallReport r = human_recall(j, ks, Direction::kSpeechToImage);
  CHECK(r.queries == 3);
  CHECK(r.recall[0] == doctest::Approx(1.0 / 3.0));
  CHECK(r.recall[1] == doctest::Approx(2.0 / 3.0));

  const std::vector<std::size_t> deep{5};
  CHECK_THROWS_AS(human_recall(j, deep, Direction::kSpeechToImage), std::invalid_argument);
  std::vector<HumanJudgment> twice = j;
  twice.push_back(judged(1, 12, 1, 5));
  CHECK_THROWS_AS(human_recall(twice, ks, Direction::kSpeechToImage), std::invalid_argument);
}

TEST_CASE("human recall agrees with a tally") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<HumanJudgment> j;
    const int queries = static_cast<int>(rng.uniform_int(1, 20));
    for (int q = 0; q < queries; ++q) {
      for (int r = 1; r <= 5; ++r) {
        j.push_back(judged(static_cast<std::uint64_t>(q), 100 + static_cast<std::uint64_t>(r), r,
                           static_cast<int>(rng.uniform_int(0, 5))));
      }
    }
    std::mt19937_64 order(rng.next_u64());
    std::shuffle(j.begin(), j.end(), order);
    const std::vector<std::size_t> ks{1, 3, 5};
    const RecallReport r = human_recall(j, ks, Direction::kImageToSpeech);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      CHECK(r.recall[i] == doctest::Approx(oracle::human_recall(j, ks[i])));
    }
  }
}

TEST_CASE("human recall with group-match votes equals automatic recall") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Fixture f = random_fixture(rng, 10, 2, 3, trial % 2 == 0);
    std::vector<HumanJudgment> j;
    for (const RecallQuery& q : f.queries) {
      const auto ranked = rank_candidates(q.embedding, f.index, Modality::kVisual);
      for (std::size_t r = 0; r < 5; ++r) {
        j.push_back(judged(q.id, ranked[r].id, static_cast<int>(r + 1),
                           ranked[r].group == q.group ? 5 : 0));
      }
    }
    const std::vector<std::size_t> ks{1, 5};
    const RecallReport human = human_recall(j, ks, Direction::kSpeechToImage);
    const RecallReport automatic =
        recall_at_k(f.queries, f.index, Modality::kVisual, ks, Direction::kSpeechToImage);
    CHECK(human.recall == automatic.recall);
  }
}

TEST_CASE("judgments round-trip through text and reject bad lines") {
  const std::vector<HumanJudgment> j{judged(1, 2, 1, 3), judged(1, 4, 2, 0)};
  const std::string text = format_judgments(j);
  const auto back = parse_judgments(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].good_votes() == 3);
  CHECK(back[1].candidate_id == 4);
  CHECK(back[1].rank == 2);
  CHECK_THROWS_AS(parse_judgments("1\t2\t1\t1\t1\t1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_judgments("1\t2\t1\t1\t1\t2\t0\t0\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_judgments("x\t2\t1\t1\t1\t1\t0\t0\n"), std::invalid_argument);

  test::TempDir dir;
  write_file_bytes(dir.path() / "j.tsv", std::vector<std::uint8_t>(text.begin(), text.end()));
  CHECK(read_judgments(dir.path() / "j.tsv").size() == 2);
}

TEST_CASE("index files round-trip and reject corruption") {
  Rng rng(5);
  const Fixture f = random_fixture(rng, 5, 1, 3, false);
  const auto bytes = encode_index(f.index);
  CHECK(decode_index(bytes) == f.index);

  test::TempDir dir;
  save_index(dir.path() / "i.lidx", f.index);
  CHECK(load_index(dir.path() / "i.lidx") == f.index);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_index(truncated), FormatError);
  auto bad_magic = bytes;
  bad_magic[1] ^= 0xff;
  CHECK_THROWS_AS(decode_index(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 7;
  CHECK_THROWS_AS(decode_index(bad_version), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_index(extra), FormatError);
}

TEST_CASE("reports format one row per direction") {
  RecallReport r{.direction = Direction::kSpeechToImage, .ks = {1, 5}, .recall = {0.5, 1.0},
                 .queries = 4};
  const std::vector<RecallReport> reports{r};
  const std::string text = format_reports(reports);
  CHECK(text.find("speech_to_image") != std::string::npos);
  CHECK(text.find("R@5") != std::string::npos);
  CHECK(r.at(5) == 1.0);
  CHECK_THROWS(r.at(10));
}
