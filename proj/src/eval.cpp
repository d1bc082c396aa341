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

#include "kgrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "kgrec/random.hpp"

namespace kgrec {

namespace {

std::vector<std::uint32_t> rankable(std::size_t n, std::span<const std::uint32_t> exclude) {
  std::vector<std::uint32_t> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!std::binary_search(exclude.begin(), exclude.end(), i)) out.push_back(i);
  }
  return out;
}

struct ByScore {
  std::span<const double> scores;
  bool operator()(std::uint32_t a, std::uint32_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  }
};

std::size_t hits(std::span<const std::uint32_t> ranked,
                 std::span<const std::uint32_t> relevant, std::size_t k,
                 double* dcg) {
  std::vector<std::uint32_t> rel(relevant.begin(), relevant.end());
  std::sort(rel.begin(), rel.end());
  std::size_t count = 0;
  double gain = 0.0;
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t p = 0; p < n; ++p) {
    if (std::binary_search(rel.begin(), rel.end(), ranked[p])) {
      ++count;
      gain += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
  }
  if (dcg) *dcg = gain;
  return count;
}

void check_relevant(std::span<const std::uint32_t> relevant) {
  if (relevant.empty()) throw std::invalid_argument("metric needs a non-empty relevant set");
}

std::string_view config_label(const TrainConfig& c) {
  if (c.use_ui && c.use_uu) return variant_name(Variant::kTwoLevel);
  if (c.use_ui) return variant_name(Variant::kUserItem);
  if (c.use_uu) return variant_name(Variant::kUserUser);
  return variant_name(Variant::kBase);
}

}  // namespace

std::vector<std::uint32_t> rank_items(std::span<const double> scores,
                                      std::span<const std::uint32_t> exclude) {
  auto order = rankable(scores.size(), exclude);
  std::sort(order.begin(), order.end(), ByScore{scores});
  return order;
}

std::vector<std::uint32_t> top_k_items(std::span<const double> scores,
                                       std::span<const std::uint32_t> exclude,
                                       std::size_t k) {
  auto order = rankable(scores.size(), exclude);
  const std::size_t n = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + n, order.end(), ByScore{scores});
  order.resize(n);
  return order;
}

double recall_at_k(std::span<const std::uint32_t> ranked,
                   std::span<const std::uint32_t> relevant, std::size_t k) {
  check_relevant(relevant);
  return static_cast<double>(hits(ranked, relevant, k, nullptr)) /
         static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const std::uint32_t> ranked,
                 std::span<const std::uint32_t> relevant, std::size_t k) {
  check_relevant(relevant);
  double dcg = 0.0;
  hits(ranked, relevant, k, &dcg);
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, relevant.size());
  for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

MetricsReport evaluate(const Tensor& representations, const CollaborativeKG& ckg,
                       const InteractionDataset& dataset, Split split, std::size_t k,
                       std::size_t threads) {
  if (k < 1) throw std::invalid_argument("evaluate: K must be >= 1");
  if (representations.rank() != 2 || representations.rows() != ckg.num_nodes()) {
    throw ShapeError("evaluate: representations do not match the graph");
  }
  const auto& targets = dataset.items_of(split);
  MetricsReport report;
  report.k = k;
  for (std::uint32_t u = 0; u < dataset.num_users; ++u) {
    if (!targets[u].empty()) report.user_ids.push_back(u);
  }
  if (report.user_ids.empty()) {
    throw std::invalid_argument("evaluate: no user has items in the requested split");
  }
  const std::size_t n_items = dataset.num_items, d = representations.row_size();
  std::vector<double> item_rows(n_items * d);
  for (std::uint32_t i = 0; i < n_items; ++i) {
    auto row = representations.row(ckg.item_node(i));
    std::copy(row.begin(), row.end(), item_rows.begin() + static_cast<std::ptrdiff_t>(i * d));
  }

  const std::size_t n_users = report.user_ids.size();
  report.user_recall.assign(n_users, 0.0);
  report.user_ndcg.assign(n_users, 0.0);
  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores(n_items);
    for (std::size_t x = begin; x < end; ++x) {
      const std::uint32_t u = report.user_ids[x];
      auto user_row = representations.row(ckg.user_node(u));
      for (std::size_t i = 0; i < n_items; ++i) {
        scores[i] = dot(user_row, std::span<const double>(item_rows).subspan(i * d, d));
      }
      const auto top = top_k_items(scores, dataset.train_items[u], k);
      report.user_recall[x] = recall_at_k(top, targets[u], k);
      report.user_ndcg[x] = ndcg_at_k(top, targets[u], k);
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n_users));
  if (workers == 1) {
    work(0, n_users);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n_users + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk, end = std::min(n_users, begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  double recall = 0.0, ndcg = 0.0;
  for (std::size_t x = 0; x < n_users; ++x) {
    recall += report.user_recall[x];
    ndcg += report.user_ndcg[x];
  }
  report.users = n_users;
  report.recall = recall / static_cast<double>(n_users);
  report.ndcg = ndcg / static_cast<double>(n_users);
  return report;
}

MetricsReport evaluate(const ModelParams& params, const CollaborativeKG& ckg,
                       const InteractionDataset& dataset, Split split, std::size_t k,
                       const PropagationSettings& settings, std::size_t threads) {
  return evaluate(compute_representations(params, ckg, settings), ckg, dataset, split, k,
                  threads);
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kUserItem: return "ui-only";
    case Variant::kUserUser: return "uu-only";
    case Variant::kTwoLevel: return "two-level";
  }
  return "unknown";
}

TrainConfig variant_config(TrainConfig config, Variant v) {
  config.use_ui = v == Variant::kUserItem || v == Variant::kTwoLevel;
  config.use_uu = v == Variant::kUserUser || v == Variant::kTwoLevel;
  return config;
}

std::vector<MetricsReport> run_ablation(const TrainConfig& config,
                                        const InteractionDataset& dataset,
                                        const CollaborativeKG& ckg, Split split) {
  std::vector<MetricsReport> out;
  for (Variant v : kAllVariants) {
    const TrainConfig c = variant_config(config, v);
    const TrainResult result = train(c, dataset, ckg);
    MetricsReport report = evaluate(result.params, ckg, dataset, split, c.top_k,
                                    eval_propagation(c), c.threads);
    report.variant = variant_name(v);
    out.push_back(std::move(report));
  }
  return out;
}

std::uint64_t drop_seed(const TrainConfig& config) { return derive_seed(config.seed, 0xd209); }

std::vector<MetricsReport> run_noise_experiment(const TrainConfig& config,
                                                const InteractionDataset& dataset,
                                                const CollaborativeKG& ckg,
                                                std::span<const double> drop_rates) {
  for (double rate : drop_rates) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw std::invalid_argument("drop rate must be in [0, 1), got " + std::to_string(rate));
    }
  }
  std::vector<MetricsReport> out;
  for (double rate : drop_rates) {
    const CollaborativeKG perturbed = drop_nodes(ckg, rate, drop_seed(config));
    const TrainResult result = train(config, dataset, perturbed);
    MetricsReport report = evaluate(result.params, perturbed, dataset, Split::kTest,
                                    config.top_k, eval_propagation(config), config.threads);
    report.variant = config_label(config);
    report.drop_rate = rate;
    out.push_back(std::move(report));
  }
  return out;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> reports) {
  out << "variant,drop_rate,K,recall,ndcg,users\n";
  for (const auto& r : reports) {
    out << r.variant << ',' << format_double(r.drop_rate) << ',' << r.k << ','
        << format_double(r.recall) << ',' << format_double(r.ndcg) << ',' << r.users << '\n';
  }
}

}  // namespace kgrec
