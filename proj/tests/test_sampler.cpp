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


#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "kgrec/sampler.hpp"

using namespace kgrec;

namespace {

InteractionDataset dataset_from(const std::string& text) {
  std::istringstream in(text);
  return split(parse_interactions(in, "\t"), {}, 0);
}

double chi_square(const std::map<std::uint32_t, std::size_t>& counts, std::size_t cells,
                  std::size_t draws) {
  const double expected = static_cast<double>(draws) / static_cast<double>(cells);
  double stat = 0.0;
  for (const auto& [k, n] : counts) stat += (n - expected) * (n - expected) / expected;
  stat += static_cast<double>(cells - counts.size()) * expected;  // empty cells
  return stat;
}

// Upper 1% points of the chi-square distribution.
constexpr double kChi2df8 = 20.090235029663233;
constexpr double kChi2df9 = 21.665994333461924;

}  // namespace

TEST_CASE("SamplerConfig validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.noise_scale = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.noise_count = 0;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("sample_bpr contract") {
  const InteractionDataset two = dataset_from("u\ta\nv\tb\n");
  for (const auto& t : sample_bpr(two, 50, 1)) {
    CHECK(t.negative != t.positive);
    CHECK(t.negative == 1 - t.positive);
  }

  std::string text;
  for (int u = 0; u < 6; ++u) {
    for (int i = 0; i < 12; i += 1 + u % 3) text += "u" + std::to_string(u) + "\t" + std::to_string(i) + "\n";
  }
  const InteractionDataset ds = dataset_from(text);
  std::set<std::pair<std::uint32_t, std::uint32_t>> train;
  for (const auto& x : ds.train) train.insert({x.user, x.item});
  const auto batch = sample_bpr(ds, 500, 3);
  CHECK(batch.size() == 500);
  for (const auto& t : batch) {
    CHECK(train.count({t.user, t.positive}));
    CHECK_FALSE(train.count({t.user, t.negative}));
  }
  CHECK(sample_bpr(ds, 500, 3) == batch);
  CHECK_FALSE(sample_bpr(ds, 500, 4) == batch);

  // Users who saw every item are skipped; with no other user it is an error.
  const InteractionDataset full = dataset_from("u\ta\nu\tb\n");
  CHECK_THROWS_AS(sample_bpr(full, 4, 0), std::invalid_argument);
}

TEST_CASE("negative items are uniform over unobserved items") {
  std::string text = "u\t0\n";
  for (int i = 0; i < 10; ++i) text += "v\t" + std::to_string(i) + "\n";
  const InteractionDataset ds = dataset_from(text);
  const std::uint32_t u = ds.user_index.at("u");
  REQUIRE(ds.train_items[u].size() == 1);
  Rng rng = make_rng(11, 0);
  std::map<std::uint32_t, std::size_t> counts;
  const std::size_t draws = 10000;
  for (std::size_t k = 0; k < draws; ++k) ++counts[sample_negative_item(ds, u, rng)];
  CHECK(counts.count(ds.train_items[u][0]) == 0);
  CHECK(chi_square(counts, 9, draws) < kChi2df8);
}

TEST_CASE("in_batch_sets") {
  const std::vector<BprTriple> two{{0, 5, 1}, {1, 6, 2}};
  const InBatchSets s = in_batch_sets(two);
  CHECK(s.item_negatives(0).size() == 1);
  CHECK(s.item_negatives(1).size() == 1);
  CHECK(s.user_negatives(s.anchor_col[0]).size() == 1);
  CHECK(s.item_pool[s.item_negatives(0)[0]] == 6);

  const std::vector<BprTriple> one{{0, 5, 1}};
  CHECK(in_batch_sets(one).user_negatives(0).empty());
  CHECK(in_batch_sets(one).item_negatives(0).empty());

  const std::vector<BprTriple> dup{{0, 5, 1}, {0, 7, 1}, {3, 5, 2}, {4, 8, 2}};
  const InBatchSets d = in_batch_sets(dup);
  CHECK(d.user_pool == std::vector<std::uint32_t>{0, 3, 4});
  CHECK(d.item_pool == std::vector<std::uint32_t>{5, 7, 8});
  for (std::size_t r = 0; r < dup.size(); ++r) {
    CHECK(d.item_pool[d.positive_col[r]] == dup[r].positive);
    CHECK(d.user_pool[d.anchor_col[r]] == dup[r].user);
    for (std::size_t c : d.item_negatives(r)) CHECK(d.item_pool[c] != dup[r].positive);
    for (std::size_t c : d.user_negatives(d.anchor_col[r])) CHECK(d.user_pool[c] != dup[r].user);
  }
}

TEST_CASE("noise_negatives") {
  CHECK_FALSE(noise_negatives(0, 8, 1.0, 1).has_value());
  CHECK_THROWS_AS(noise_negatives(3, 8, 0.0, 1), std::invalid_argument);
  const Tensor n = *noise_negatives(1000, 64, 2.5, 7);
  CHECK(n.shape() == Shape{1000, 64});
  for (std::size_t r = 0; r < 1000; ++r) {
    CHECK(std::abs(std::sqrt(squared_norm(n.row(r))) - 1.0) <= 1e-12);
  }
  CHECK(*noise_negatives(1000, 64, 2.5, 7) == n);

  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < 1000; ++a) {
    for (std::size_t b = a + 1; b < 1000; ++b, ++pairs) total += dot(n.row(a), n.row(b));
  }
  CHECK(std::abs(total / static_cast<double>(pairs)) <= 0.02);

  // After normalisation the scale only changes the draw, not the contract.
  const Tensor small = *noise_negatives(5, 4, 1e-3, 7);
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(std::abs(squared_norm(small.row(r)) - 1.0) <= 1e-12);
  }
}

TEST_CASE("corrupt_triples") {
  const std::vector<Triple> kg{{0, 0, 1}};
  const TripleIndex idx(kg);
  CHECK(idx.contains({0, 0, 1}));
  CHECK_FALSE(idx.contains({0, 0, 2}));
  CHECK_FALSE(idx.contains({1, 0, 0}));
  const std::vector<Triple> batch(200, Triple{0, 0, 1});
  for (const auto& q : corrupt_triples(idx, 3, batch, 5)) {
    CHECK((q.corrupted_tail == 0 || q.corrupted_tail == 2));
    CHECK(q.tail == 1);
  }
  CHECK_THROWS_AS(corrupt_triples(idx, 1, batch, 5), std::invalid_argument);

  // Every tail taken: corruption is impossible.
  const std::vector<Triple> dense{{0, 0, 0}, {0, 0, 1}};
  CHECK_THROWS_AS(corrupt_triples(TripleIndex(dense), 2, dense, 1), std::runtime_error);
  // Only one free tail: the fallback enumeration finds it.
  std::vector<Triple> crowded;
  for (std::uint32_t e = 0; e < 999; ++e) crowded.push_back({0, 0, e});
  for (const auto& q : corrupt_triples(TripleIndex(crowded), 1000, crowded, 2)) {
    CHECK(q.corrupted_tail == 999);
  }

  // Uniform over the ten valid tails of (0, 0, ?) among 12 entities.
  const std::vector<Triple> known{{0, 0, 1}, {0, 0, 2}, {3, 0, 4}};
  const TripleIndex kidx(known);
  const std::vector<Triple> many(10000, Triple{0, 0, 1});
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& q : corrupt_triples(kidx, 12, many, 9)) {
    CHECK_FALSE(kidx.contains({q.head, q.relation, q.corrupted_tail}));
    ++counts[q.corrupted_tail];
  }
  CHECK(chi_square(counts, 10, many.size()) < kChi2df9);
}

TEST_CASE("make_contrastive_batch") {
  InteractionDataset ds = dataset_from("a\tx\nb\ty\nc\tz\n");
  KnowledgeGraph kg;
  std::istringstream none;
  align_items(kg, ds, parse_alignment(none, "\t"));
  const CollaborativeKG ckg = build_ckg(ds, kg);
  ModelParams p = init_params(dims_for(ckg, 2, 2, 1, 1, Activation::kTanh), 1);
  // Users a, b point the same way; c is orthogonal. Items x ~ a, y, z apart.
  const double rows[6][2] = {{1, 0}, {2, 0.01}, {0, 1}, {1, 0.05}, {-1, 0}, {0, -1}};
  for (int r = 0; r < 6; ++r) {
    p.node_embedding.at(r, 0) = rows[r][0];
    p.node_embedding.at(r, 1) = rows[r][1];
  }
  const ComplementaryModel comp(p, 0.995);
  const std::vector<BprTriple> batch{{0, 0, 1}, {1, 1, 2}, {2, 2, 0}};
  ContrastiveOptions opt;
  opt.phi = 0.8;
  opt.noise_count = 4;
  const ContrastiveBatch cb = make_contrastive_batch(batch, ckg, comp, opt, 17);
  // Row b: item x is near b (cosine > 0.8) and gets alpha 0.
  CHECK(cb.ui_weights.at(1, 0) == 0.0);
  CHECK(cb.ui_weights.at(0, 0) == 1.0);  // own positive
  CHECK(cb.ui_weights.at(2, 0) == 1.0);
  CHECK(cb.uu_weights.at(0, 1) == 0.0);
  CHECK(cb.uu_weights.at(1, 0) == 0.0);
  CHECK(cb.uu_weights.at(0, 2) == 1.0);
  for (std::size_t k = 0; k < 3; ++k) CHECK(cb.uu_weights.at(k, k) == 1.0);
  CHECK(cb.item_noise->shape() == Shape{4, 2});
  CHECK_FALSE(*cb.item_noise == *cb.user_noise);
  CHECK(cb.view_mask_a.shape() == Shape{3, 2});

  opt.phi = 1.5;
  const ContrastiveBatch off = make_contrastive_batch(batch, ckg, comp, opt, 17);
  for (double w : off.ui_weights.data()) CHECK(w == 1.0);
  for (double w : off.uu_weights.data()) CHECK(w == 1.0);
  CHECK(*off.item_noise == *cb.item_noise);
  opt.noise_count = 0;
  CHECK_FALSE(make_contrastive_batch(batch, ckg, comp, opt, 17).user_noise.has_value());
}

TEST_CASE("shuffled_batches partitions its input") {
  std::vector<int> v(23);
  for (int k = 0; k < 23; ++k) v[k] = k;
  Rng rng = make_rng(4, 0);
  const auto b = shuffled_batches<int>(v, 5, rng);
  CHECK(b.size() == 5);
  CHECK(b.back().size() == 3);
  std::multiset<int> all;
  for (const auto& x : b) all.insert(x.begin(), x.end());
  CHECK(all == std::multiset<int>(v.begin(), v.end()));
}
