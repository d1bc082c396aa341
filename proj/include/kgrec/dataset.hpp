// Copyright 2026 The kgrec Authors
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
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kgrec {

// Malformed input file; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct RawInteraction {
  std::string user;
  std::string item;
  friend bool operator==(const RawInteraction&, const RawInteraction&) = default;
};
using RawInteractions = std::vector<RawInteraction>;

struct Interaction {
  std::uint32_t user;
  std::uint32_t item;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

enum class Split { kTrain, kValid, kTest };

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

// Implicit-feedback interactions over contiguous user and item indices.
struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Interaction> train;  // sorted by (user, item)
  std::vector<Interaction> valid;
  std::vector<Interaction> test;
  std::vector<std::string> user_ids;  // internal -> raw
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, std::uint32_t> user_index;  // raw -> internal
  std::unordered_map<std::string, std::uint32_t> item_index;

  // Per-user sorted item lists, one per split.
  std::vector<std::vector<std::uint32_t>> train_items;
  std::vector<std::vector<std::uint32_t>> valid_items;
  std::vector<std::vector<std::uint32_t>> test_items;

  const std::vector<std::vector<std::uint32_t>>& items_of(Split split) const;
  bool in_train(std::uint32_t user, std::uint32_t item) const;
};

// Reads "user<delim>item[<delim>...]" lines. Blank lines are skipped.
RawInteractions load_interactions(const std::filesystem::path& path,
                                  std::string_view delimiter = "\t");
RawInteractions parse_interactions(std::istream& in, std::string_view delimiter,
                                   const std::string& source = "<stream>");

// Deduplicates, then drops users and items with fewer than `min_count`
// interactions until nothing changes. Output keeps first-occurrence order.
RawInteractions kcore_filter(const RawInteractions& pairs, std::size_t min_count);

// Keeps the interactions of `max_users` users drawn uniformly by `seed`.
// max_users == 0 or >= the user count keeps everything.
RawInteractions subsample_users(const RawInteractions& pairs, std::size_t max_users,
                                std::uint64_t seed);

// Deduplicates and re-indexes the pairs, then partitions each user's items
// by `ratios`. Every user keeps at least one training interaction.
InteractionDataset split(const RawInteractions& pairs, SplitRatios ratios,
                         std::uint64_t seed);

struct Triple {
  std::uint32_t head;
  std::uint32_t relation;
  std::uint32_t tail;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct KnowledgeGraph {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::vector<Triple> triples;
  std::vector<std::string> entity_ids;
  std::vector<std::string> relation_ids;
  std::unordered_map<std::string, std::uint32_t> entity_index;
  std::unordered_map<std::string, std::uint32_t> relation_index;
  std::size_t duplicates_dropped = 0;

  // Entity of every dataset item; filled by align_items().
  std::vector<std::uint32_t> item_entity;
};

KnowledgeGraph load_kg(const std::filesystem::path& path,
                       std::string_view delimiter = "\t");
KnowledgeGraph parse_kg(std::istream& in, std::string_view delimiter,
                        const std::string& source = "<stream>");

using Alignment = std::vector<std::pair<std::string, std::string>>;  // item, entity

Alignment load_alignment(const std::filesystem::path& path,
                         std::string_view delimiter = "\t");
Alignment parse_alignment(std::istream& in, std::string_view delimiter,
                          const std::string& source = "<stream>");

struct AlignmentReport {
  std::size_t aligned = 0;
  std::size_t dangling = 0;  // alignment rows whose item is not in the dataset
  std::size_t appended = 0;  // items given a fresh entity
};

// Maps every dataset item to an entity. Aligned items reuse their KG entity;
// the rest get new entities appended after the existing ones.
AlignmentReport align_items(KnowledgeGraph& kg, const InteractionDataset& dataset,
                            const Alignment& alignment);

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t triples = 0;
};

DatasetStats compute_stats(const InteractionDataset& dataset,
                           const KnowledgeGraph& kg);
void write_stats_csv(std::ostream& out, const DatasetStats& stats);

}  // namespace kgrec
