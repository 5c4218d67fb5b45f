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

#include "mmsret/retrieval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mmsret/binary_io.hpp"

namespace mmsret {

const char* modality_name(Modality m) {
  return m == Modality::kAudio ? "audio" : "visual";
}

Modality parse_modality(const std::string& name) {
  if (name == "audio") return Modality::kAudio;
  if (name == "visual") return Modality::kVisual;
  throw std::invalid_argument("unknown modality '" + name + "'");
}

const char* direction_name(Direction d) {
  return d == Direction::kSpeechToImage ? "speech_to_image" : "image_to_speech";
}

CreditMode parse_credit_mode(const std::string& name) {
  if (name == "multi") return CreditMode::kMultiPositive;
  if (name == "exact") return CreditMode::kExactItem;
  throw std::invalid_argument("unknown credit mode '" + name + "' (multi|exact)");
}

void LatentIndex::add(std::uint64_t id, Modality modality, GroupId group,
                      std::span<const double> embedding) {
  if (ids_.empty() && dim_ == 0) dim_ = embedding.size();
  if (embedding.size() != dim_) {
    throw std::invalid_argument("index item " + std::to_string(id) + " has " +
                                std::to_string(embedding.size()) +
                                " dims, index has " + std::to_string(dim_));
  }
  if (std::find(ids_.begin(), ids_.end(), id) != ids_.end()) {
    throw std::invalid_argument("duplicate index id " + std::to_string(id));
  }
  ids_.push_back(id);
  modality_.push_back(modality);
  groups_.push_back(group);
  values_.insert(values_.end(), embedding.begin(), embedding.end());
}

std::vector<RankedCandidate> rank_candidates(std::span<const double> query,
                                             const LatentIndex& index,
                                             Modality target) {
  if (query.size() != index.dim()) {
    throw std::invalid_argument("query has " + std::to_string(query.size()) +
                                " dims, index has " +
                                std::to_string(index.dim()));
  }
  std::vector<RankedCandidate> out;
  for (std::size_t row = 0; row < index.size(); ++row) {
    if (index.modality(row) != target) continue;
    const auto e = index.embedding(row);
    double score = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) score += query[k] * e[k];
    out.push_back({row, index.id(row), index.group(row), score});
  }
  if (out.empty()) {
    throw std::invalid_argument(std::string("index has no ") +
                                modality_name(target) + " items");
  }
  std::sort(out.begin(), out.end(),
            [](const RankedCandidate& a, const RankedCandidate& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  return out;
}

double RecallReport::at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recall[i];
  }
  throw std::out_of_range("report has no R@" + std::to_string(k));
}

namespace {

bool credited(const RecallQuery& q, const RankedCandidate& c, CreditMode mode) {
  if (mode == CreditMode::kExactItem) {
    return q.paired_id.has_value() && c.id == *q.paired_id;
  }
  return c.group == q.group;
}

void check_ks(std::span<const std::size_t> ks) {
  if (ks.empty()) throw std::invalid_argument("no k values requested");
  for (std::size_t k : ks) {
    if (k == 0) throw std::invalid_argument("k must be positive");
  }
}

}  // namespace

std::vector<std::size_t> first_positive_ranks(std::span<const RecallQuery> queries,
                                              const LatentIndex& index,
                                              Modality target, CreditMode mode) {
  std::vector<std::size_t> ranks;
  ranks.reserve(queries.size());
  std::vector<std::uint64_t> missing;
  for (const RecallQuery& q : queries) {
    const auto ranked = rank_candidates(q.embedding, index, target);
    std::size_t rank = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (credited(q, ranked[i], mode)) {
        rank = i + 1;
        break;
      }
    }
    if (rank == 0) missing.push_back(q.id);
    ranks.push_back(rank);
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "queries without a positive in the index:";
    for (auto id : missing) os << ' ' << id;
    throw std::invalid_argument(os.str());
  }
  return ranks;
}

RecallReport recall_at_k(std::span<const RecallQuery> queries,
                         const LatentIndex& index, Modality target,
                         std::span<const std::size_t> ks, Direction direction,
                         CreditMode mode) {
  check_ks(ks);
  if (queries.empty()) throw std::invalid_argument("no queries");
  const auto ranks = first_positive_ranks(queries, index, target, mode);
  RecallReport report{.direction = direction,
                      .ks = {ks.begin(), ks.end()},
                      .recall = {},
                      .queries = queries.size()};
  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (std::size_t r : ranks) hits += r <= k ? 1 : 0;
    report.recall.push_back(static_cast<double>(hits) /
                            static_cast<double>(queries.size()));
  }
  return report;
}

int HumanJudgment::good_votes() const {
  return static_cast<int>(std::count(votes.begin(), votes.end(), true));
}

RecallReport human_recall(std::span<const HumanJudgment> judgments,
                          std::span<const std::size_t> ks, Direction direction) {
  check_ks(ks);
  const std::size_t depth = *std::max_element(ks.begin(), ks.end());
  // query -> rank -> judged good
  std::map<std::uint64_t, std::map<int, bool>> table;
  for (const HumanJudgment& j : judgments) {
    if (j.rank < 1) {
      throw std::invalid_argument("judgment for query " +
                                  std::to_string(j.query_id) +
                                  " has rank < 1");
    }
    auto [it, fresh] = table[j.query_id].emplace(j.rank, j.majority_good());
    if (!fresh) {
      throw std::invalid_argument("query " + std::to_string(j.query_id) +
                                  " judged twice at rank " +
                                  std::to_string(j.rank));
    }
  }
  if (table.empty()) throw std::invalid_argument("no judgments");

  RecallReport report{.direction = direction,
                      .ks = {ks.begin(), ks.end()},
                      .recall = std::vector<double>(ks.size(), 0.0),
                      .queries = table.size()};
  for (const auto& [query, by_rank] : table) {
    std::size_t first_good = 0;
    for (std::size_t r = 1; r <= depth; ++r) {
      auto it = by_rank.find(static_cast<int>(r));
      if (it == by_rank.end()) {
        throw std::invalid_argument("query " + std::to_string(query) +
                                    " has no judgment at rank " +
                                    std::to_string(r));
      }
      if (first_good == 0 && it->second) first_good = r;
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (first_good != 0 && first_good <= ks[i]) report.recall[i] += 1.0;
    }
  }
  for (double& r : report.recall) r /= static_cast<double>(table.size());
  return report;
}

namespace {

template <typename T>
T parse_number(std::string_view field, std::size_t line) {
  T value{};
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw std::invalid_argument("judgments line " + std::to_string(line) +
                                ": bad number '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::vector<HumanJudgment> parse_judgments(const std::string& text) {
  std::vector<HumanJudgment> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() != 8) {
      throw std::invalid_argument("judgments line " + std::to_string(lineno) +
                                  ": expected 8 tab-separated fields, got " +
                                  std::to_string(fields.size()));
    }
    HumanJudgment j;
    j.query_id = parse_number<std::uint64_t>(fields[0], lineno);
    j.candidate_id = parse_number<std::uint64_t>(fields[1], lineno);
    j.rank = parse_number<int>(fields[2], lineno);
    for (std::size_t v = 0; v < 5; ++v) {
      const int vote = parse_number<int>(fields[3 + v], lineno);
      if (vote != 0 && vote != 1) {
        throw std::invalid_argument("judgments line " + std::to_string(lineno) +
                                    ": votes must be 0 or 1");
      }
      j.votes[v] = vote == 1;
    }
    out.push_back(j);
  }
  return out;
}

std::vector<HumanJudgment> read_judgments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_judgments(ss.str());
}

std::string format_judgments(std::span<const HumanJudgment> judgments) {
  std::ostringstream os;
  for (const HumanJudgment& j : judgments) {
    os << j.query_id << '\t' << j.candidate_id << '\t' << j.rank;
    for (bool v : j.votes) os << '\t' << (v ? 1 : 0);
    os << '\n';
  }
  return os.str();
}

std::string format_reports(std::span<const RecallReport> reports) {
  std::ostringstream os;
  if (reports.empty()) return {};
  os << "direction\tqueries";
  for (std::size_t k : reports.front().ks) os << "\tR@" << k;
  os << '\n';
  for (const RecallReport& r : reports) {
    os << direction_name(r.direction) << '\t' << r.queries;
    for (double v : r.recall) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", v);
      os << '\t' << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<std::uint8_t> encode_index(const LatentIndex& index) {
  ByteWriter w;
  w.tag("LIDX");
  w.u32(kIndexVersion);
  w.u32(static_cast<std::uint32_t>(index.size()));
  w.u32(static_cast<std::uint32_t>(index.dim()));
  for (std::size_t row = 0; row < index.size(); ++row) {
    w.u64(index.id(row));
    w.u8(static_cast<std::uint8_t>(index.modality(row)));
    w.u64(index.group(row));
    for (double v : index.embedding(row)) w.f64(v);
  }
  return w.bytes();
}

LatentIndex decode_index(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "index file");
  r.expect_tag("LIDX");
  const std::uint32_t version = r.u32();
  if (version != kIndexVersion) {
    throw FormatError("index file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  const std::uint64_t record = 17 + 8ull * d;
  if (static_cast<std::uint64_t>(n) * record != r.remaining()) {
    throw FormatError("index file: header declares " + std::to_string(n) +
                      " items of dimension " + std::to_string(d) + " but " +
                      std::to_string(r.remaining()) + " payload bytes follow");
  }
  LatentIndex index(d);
  std::vector<double> e(d);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint64_t id = r.u64();
    const std::uint8_t m = r.u8();
    if (m > 1) throw FormatError("index file: bad modality code");
    const std::uint64_t group = r.u64();
    for (double& v : e) v = r.f64();
    try {
      index.add(id, static_cast<Modality>(m), group, e);
    } catch (const std::invalid_argument& ex) {
      throw FormatError(std::string("index file: ") + ex.what());
    }
  }
  r.expect_end();
  return index;
}

void save_index(const std::filesystem::path& path, const LatentIndex& index) {
  write_file_bytes(path, encode_index(index));
}

LatentIndex load_index(const std::filesystem::path& path) {
  return decode_index(read_file_bytes(path));
}

}  // namespace mmsret
