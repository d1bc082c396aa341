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
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgrec/ckg.hpp"
#include "kgrec/dataset.hpp"
#include "kgrec/model.hpp"
#include "kgrec/trainer.hpp"

namespace kgrec {

struct MetricsReport {
  std::string variant;
  double drop_rate = 0.0;
  std::size_t k = 10;
  double recall = 0.0;  // mean over evaluated users
  double ndcg = 0.0;
  std::size_t users = 0;
  // Per evaluated user, ascending user index.
  std::vector<std::uint32_t> user_ids;
  std::vector<double> user_recall;
  std::vector<double> user_ndcg;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Every item not in `exclude` (sorted ascending), best score first; equal
// scores keep ascending item order.
std::vector<std::uint32_t> rank_items(std::span<const double> scores,
                                      std::span<const std::uint32_t> exclude);
// The first min(k, rankable) entries of rank_items().
std::vector<std::uint32_t> top_k_items(std::span<const double> scores,
                                       std::span<const std::uint32_t> exclude,
                                       std::size_t k);

// `relevant` must be non-empty. Only the first k ranked entries are read.
double recall_at_k(std::span<const std::uint32_t> ranked,
                   std::span<const std::uint32_t> relevant, std::size_t k);
double ndcg_at_k(std::span<const std::uint32_t> ranked,
                 std::span<const std::uint32_t> relevant, std::size_t k);

// Scores are inner products of representation rows. Users with no items in
// `split` are skipped; throws std::invalid_argument when none remain.
MetricsReport evaluate(const Tensor& representations, const CollaborativeKG& ckg,
                       const InteractionDataset& dataset, Split split, std::size_t k,
                       std::size_t threads = 1);
MetricsReport evaluate(const ModelParams& params, const CollaborativeKG& ckg,
                       const InteractionDataset& dataset, Split split, std::size_t k,
                       const PropagationSettings& settings, std::size_t threads = 1);

// BASE has every contrastive term off; the single-level variants keep one.
enum class Variant { kBase, kUserItem, kUserUser, kTwoLevel };
std::string_view variant_name(Variant v);
TrainConfig variant_config(TrainConfig config, Variant v);
inline constexpr Variant kAllVariants[] = {Variant::kBase, Variant::kUserItem,
                                           Variant::kUserUser, Variant::kTwoLevel};

// One row per variant, each trained with the same seeds and evaluated on
// `split`.
std::vector<MetricsReport> run_ablation(const TrainConfig& config,
                                        const InteractionDataset& dataset,
                                        const CollaborativeKG& ckg,
                                        Split split = Split::kTest);

// For each rate: drop entity nodes, retrain, evaluate on the test split.
std::vector<MetricsReport> run_noise_experiment(const TrainConfig& config,
                                                const InteractionDataset& dataset,
                                                const CollaborativeKG& ckg,
                                                std::span<const double> drop_rates);

// Seed shared by every node-drop perturbation of a run.
std::uint64_t drop_seed(const TrainConfig& config);

// variant,drop_rate,K,recall,ndcg,users
void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> reports);

}  // namespace kgrec
