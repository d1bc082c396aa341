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

#include "kgrec/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "kgrec/losses.hpp"

namespace kgrec {

namespace {

constexpr int kMaxRejections = 64;

// Rows of `table` scaled to unit length; zero rows stay zero.
std::vector<double> unit_rows(const Tensor& table, std::span<const std::uint32_t> nodes) {
  const std::size_t d = table.row_size();
  std::vector<double> out(nodes.size() * d);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    auto row = table.row(nodes[k]);
    const double norm = std::sqrt(squared_norm(row));
    if (norm == 0.0) throw std::domain_error("complementary embedding is the zero vector");
    for (std::size_t c = 0; c < d; ++c) out[k * d + c] = row[c] / norm;
  }
  return out;
}

}  // namespace

void SamplerConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (noise_count > 0 && !(noise_scale > 0.0)) {
    throw std::invalid_argument("noise_scale must be > 0 when noise_count > 0");
  }
}

std::uint32_t sample_negative_item(const InteractionDataset& dataset,
                                   std::uint32_t user, Rng& rng) {
  const auto& seen = dataset.train_items.at(user);
  if (seen.size() >= dataset.num_items) {
    throw std::invalid_argument("user " + std::to_string(user) +
                                " has interacted with every item");
  }
  std::uniform_int_distribution<std::uint32_t> any(
      0, static_cast<std::uint32_t>(dataset.num_items - 1));
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const std::uint32_t j = any(rng);
    if (!std::binary_search(seen.begin(), seen.end(), j)) return j;
  }
  // Dense users: pick the k-th unseen item directly.
  std::uniform_int_distribution<std::size_t> pick(0, dataset.num_items - seen.size() - 1);
  std::size_t k = pick(rng);
  for (std::uint32_t j = 0;; ++j) {
    if (std::binary_search(seen.begin(), seen.end(), j)) continue;
    if (k-- == 0) return j;
  }
}

std::vector<BprTriple> sample_bpr(const InteractionDataset& dataset,
                                  std::size_t batch_size, std::uint64_t seed) {
  std::vector<Interaction> usable;
  for (const auto& x : dataset.train) {
    if (dataset.train_items[x.user].size() < dataset.num_items) usable.push_back(x);
  }
  if (usable.empty()) {
    throw std::invalid_argument("sample_bpr: no user has an unobserved item");
  }
  Rng rng = make_rng(seed, 0xb9f);
  std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
  std::vector<BprTriple> out;
  out.reserve(batch_size);
  for (std::size_t k = 0; k < batch_size; ++k) {
    const Interaction& x = usable[pick(rng)];
    out.push_back({x.user, x.item, sample_negative_item(dataset, x.user, rng)});
  }
  return out;
}

std::vector<std::size_t> InBatchSets::item_negatives(std::size_t row) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < item_pool.size(); ++c) {
    if (c != positive_col.at(row)) out.push_back(c);
  }
  return out;
}

std::vector<std::size_t> InBatchSets::user_negatives(std::size_t user_col) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < user_pool.size(); ++c) {
    if (c != user_col) out.push_back(c);
  }
  return out;
}

InBatchSets in_batch_sets(std::span<const BprTriple> batch) {
  InBatchSets sets;
  std::unordered_map<std::uint32_t, std::size_t> item_col, user_col;
  for (const auto& row : batch) {
    auto [it, fresh] = item_col.emplace(row.positive, sets.item_pool.size());
    if (fresh) sets.item_pool.push_back(row.positive);
    sets.positive_col.push_back(it->second);
    auto [ut, ufresh] = user_col.emplace(row.user, sets.user_pool.size());
    if (ufresh) sets.user_pool.push_back(row.user);
    sets.anchor_col.push_back(ut->second);
  }
  return sets;
}

std::optional<Tensor> noise_negatives(std::size_t m, std::size_t d, double sigma,
                                      std::uint64_t seed) {
  if (m == 0) return std::nullopt;
  if (!(sigma > 0.0)) throw std::invalid_argument("noise scale must be > 0");
  if (d == 0) throw std::invalid_argument("noise width must be > 0");
  Rng rng = make_rng(seed, 0x4015e);
  std::normal_distribution<double> gauss(0.0, sigma);
  std::vector<double> v(m * d);
  for (std::size_t r = 0; r < m; ++r) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        v[r * d + c] = gauss(rng);
        norm += v[r * d + c] * v[r * d + c];
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < d; ++c) v[r * d + c] /= norm;
  }
  return Tensor({m, d}, std::move(v));
}

TripleIndex::TripleIndex(std::span<const Triple> triples) {
  keys_.reserve(triples.size() * 2);
  for (const auto& t : triples) keys_.insert(key(t));
}

bool TripleIndex::contains(const Triple& t) const { return keys_.count(key(t)) != 0; }

std::uint64_t TripleIndex::key(const Triple& t) {
  if (t.head >= (1u << 24) || t.tail >= (1u << 24) || t.relation >= (1u << 16)) {
    throw std::out_of_range("TripleIndex: index exceeds packed key range");
  }
  return (std::uint64_t{t.head} << 40) | (std::uint64_t{t.relation} << 24) | t.tail;
}

std::vector<CorruptedTriple> corrupt_triples(const TripleIndex& known,
                                             std::size_t num_entities,
                                             std::span<const Triple> batch,
                                             std::uint64_t seed) {
  if (num_entities < 2) throw std::invalid_argument("corrupt_triples: need >= 2 entities");
  Rng rng = make_rng(seed, 0xc0447);
  std::uniform_int_distribution<std::uint32_t> any(
      0, static_cast<std::uint32_t>(num_entities - 1));
  std::vector<CorruptedTriple> out;
  out.reserve(batch.size());
  for (const auto& t : batch) {
    std::optional<std::uint32_t> found;
    for (int attempt = 0; attempt < kMaxRejections && !found; ++attempt) {
      const std::uint32_t cand = any(rng);
      if (!known.contains({t.head, t.relation, cand})) found = cand;
    }
    if (!found) {
      std::vector<std::uint32_t> valid;
      for (std::uint32_t e = 0; e < num_entities; ++e) {
        if (!known.contains({t.head, t.relation, e})) valid.push_back(e);
      }
      if (valid.empty()) {
        throw std::runtime_error("corrupt_triples: every entity completes (" +
                                 std::to_string(t.head) + ", " +
                                 std::to_string(t.relation) + ", ?)");
      }
      std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
      found = valid[pick(rng)];
    }
    out.push_back({t.head, t.relation, t.tail, *found});
  }
  return out;
}

ContrastiveBatch make_contrastive_batch(std::span<const BprTriple> batch,
                                        const CollaborativeKG& ckg,
                                        const ComplementaryModel& complementary,
                                        const ContrastiveOptions& options,
                                        std::uint64_t seed) {
  ContrastiveBatch cb;
  cb.sets = in_batch_sets(batch);
  const auto& sets = cb.sets;
  const Tensor& table = complementary.embedding();
  const std::size_t d = table.row_size();

  std::vector<std::uint32_t> anchor_nodes, item_nodes, user_nodes;
  for (const auto& row : batch) anchor_nodes.push_back(ckg.user_node(row.user));
  for (auto i : sets.item_pool) item_nodes.push_back(ckg.item_node(i));
  for (auto u : sets.user_pool) user_nodes.push_back(ckg.user_node(u));
  const auto anchors = unit_rows(table, anchor_nodes);
  const auto items = unit_rows(table, item_nodes);
  const auto users = unit_rows(table, user_nodes);
  const std::span<const double> av(anchors), iv(items), uv(users);

  const std::size_t rows = batch.size(), ni = sets.item_pool.size(), nu = sets.user_pool.size();
  std::vector<double> ui(rows * ni), uu(nu * nu);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ni; ++c) {
      ui[r * ni + c] = c == sets.positive_col[r]
                           ? 1.0
                           : instance_weight(dot(av.subspan(r * d, d), iv.subspan(c * d, d)),
                                             options.phi);
    }
  }
  for (std::size_t r = 0; r < nu; ++r) {
    for (std::size_t c = 0; c < nu; ++c) {
      uu[r * nu + c] = r == c ? 1.0
                              : instance_weight(dot(uv.subspan(r * d, d), uv.subspan(c * d, d)),
                                                options.phi);
    }
  }
  cb.ui_weights = Tensor({rows, ni}, std::move(ui));
  cb.uu_weights = Tensor({nu, nu}, std::move(uu));
  cb.item_noise = noise_negatives(options.noise_count, d, options.noise_scale,
                                  derive_seed(seed, 1));
  cb.user_noise = noise_negatives(options.noise_count, d, options.noise_scale,
                                  derive_seed(seed, 2));
  Rng rng = make_rng(seed, 3);
  cb.view_mask_a = dropout_mask({nu, d}, options.dropout_rate, rng);
  cb.view_mask_b = dropout_mask({nu, d}, options.dropout_rate, rng);
  return cb;
}

}  // namespace kgrec
