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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "kgrec/ckg.hpp"
#include "kgrec/dataset.hpp"
#include "kgrec/model.hpp"
#include "kgrec/random.hpp"
#include "kgrec/tensor.hpp"

namespace kgrec {

struct SamplerConfig {
  std::size_t batch_size = 4096;
  std::size_t noise_count = 16;  // m
  double noise_scale = 1.0;      // sigma_n
  std::uint64_t seed = 0;

  void validate() const;
};

struct BprTriple {
  std::uint32_t user;
  std::uint32_t positive;
  std::uint32_t negative;
  friend bool operator==(const BprTriple&, const BprTriple&) = default;
};

// Uniform over items the user has no training interaction with.
std::uint32_t sample_negative_item(const InteractionDataset& dataset,
                                   std::uint32_t user, Rng& rng);

// Draws train interactions uniformly (with replacement) and pairs each with
// a negative item. Users who interacted with every item are skipped.
std::vector<BprTriple> sample_bpr(const InteractionDataset& dataset,
                                  std::size_t batch_size, std::uint64_t seed);

// Shuffled partition of `items` into consecutive batches.
template <typename T>
std::vector<std::vector<T>> shuffled_batches(std::span<const T> items,
                                             std::size_t batch_size, Rng& rng) {
  std::vector<T> order(items.begin(), items.end());
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<T>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

// In-batch candidate pools. Rows are the batch's (u, i, j) triples; the item
// pool holds each distinct positive item once and the user pool each distinct
// user once. A row's J is every item-pool column except its own positive;
// a user's O is every other user-pool column.
struct InBatchSets {
  std::vector<std::uint32_t> item_pool;
  std::vector<std::size_t> positive_col;  // per row, into item_pool
  std::vector<std::uint32_t> user_pool;
  std::vector<std::size_t> anchor_col;    // per row, into user_pool

  std::vector<std::size_t> item_negatives(std::size_t row) const;
  std::vector<std::size_t> user_negatives(std::size_t user_col) const;
};

InBatchSets in_batch_sets(std::span<const BprTriple> batch);

// m unit vectors of width d, each a normalised draw from N(0, sigma^2 I).
// m == 0 yields no noise set.
std::optional<Tensor> noise_negatives(std::size_t m, std::size_t d, double sigma,
                                      std::uint64_t seed);

// Membership index over a triple set.
class TripleIndex {
 public:
  explicit TripleIndex(std::span<const Triple> triples);
  bool contains(const Triple& t) const;

 private:
  static std::uint64_t key(const Triple& t);
  std::unordered_set<std::uint64_t> keys_;
};

struct CorruptedTriple {
  std::uint32_t head;
  std::uint32_t relation;
  std::uint32_t tail;
  std::uint32_t corrupted_tail;
};

// Replaces each tail by an entity drawn uniformly from those that do not
// complete a known triple.
std::vector<CorruptedTriple> corrupt_triples(const TripleIndex& known,
                                             std::size_t num_entities,
                                             std::span<const Triple> batch,
                                             std::uint64_t seed);

// Everything the contrastive terms need for one batch, in index form.
struct ContrastiveBatch {
  InBatchSets sets;
  Tensor ui_weights;  // [rows, item_pool] instance weights
  Tensor uu_weights;  // [user_pool, user_pool]
  std::optional<Tensor> item_noise;  // [m, d]
  std::optional<Tensor> user_noise;  // [m, d]
  Tensor view_mask_a;  // [user_pool, d] dropout masks for the two user views
  Tensor view_mask_b;
};

struct ContrastiveOptions {
  double phi = 0.8;
  std::size_t noise_count = 16;
  double noise_scale = 1.0;
  double dropout_rate = 0.1;
};

ContrastiveBatch make_contrastive_batch(std::span<const BprTriple> batch,
                                        const CollaborativeKG& ckg,
                                        const ComplementaryModel& complementary,
                                        const ContrastiveOptions& options,
                                        std::uint64_t seed);

}  // namespace kgrec
