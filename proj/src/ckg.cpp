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

#include "kgrec/ckg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "kgrec/random.hpp"

namespace kgrec {

std::uint32_t CollaborativeKG::inverse(std::uint32_t relation) const {
  const auto r = static_cast<std::uint32_t>(num_relations_);
  return relation < r ? relation + r : relation - r;
}

const std::vector<CkgEdge>& CollaborativeKG::edges(std::uint32_t node) const {
  if (node >= adjacency_.size()) {
    throw std::out_of_range("node " + std::to_string(node) + " out of " +
                            std::to_string(adjacency_.size()));
  }
  return adjacency_[node];
}

std::size_t CollaborativeKG::directed_edge_count() const {
  std::size_t n = 0;
  for (const auto& list : adjacency_) n += list.size();
  return n;
}

void CollaborativeKG::rebuild_adjacency() {
  adjacency_.assign(num_nodes(), {});
  for (const auto& [user, item] : interactions_) {
    const std::uint32_t u = user_node(user), i = item_node(item);
    adjacency_[u].push_back({kInteract, i});
    adjacency_[i].push_back({inverse(kInteract), u});
  }
  for (const auto& t : triples_) {
    const std::uint32_t rel = t.relation + 1;
    const std::uint32_t h = entity_node(t.head), tl = entity_node(t.tail);
    adjacency_[h].push_back({rel, tl});
    adjacency_[tl].push_back({inverse(rel), h});
  }
}

CollaborativeKG build_ckg(const InteractionDataset& dataset, const KnowledgeGraph& kg) {
  if (kg.item_entity.size() != dataset.num_items) {
    throw std::invalid_argument("build_ckg: knowledge graph is not aligned to the dataset");
  }
  CollaborativeKG g;
  g.num_users_ = dataset.num_users;
  g.num_entities_ = kg.num_entities;
  g.num_relations_ = kg.num_relations + 1;
  g.item_entity_ = kg.item_entity;
  g.dropped_.assign(kg.num_entities, 0);
  for (auto e : g.item_entity_) {
    if (e >= kg.num_entities) throw std::out_of_range("build_ckg: item entity out of range");
  }
  for (const auto& t : kg.triples) {
    if (t.head >= kg.num_entities || t.tail >= kg.num_entities ||
        t.relation >= kg.num_relations) {
      throw std::out_of_range("build_ckg: triple index out of range");
    }
  }
  for (const auto& x : dataset.train) {
    if (x.user >= dataset.num_users || x.item >= dataset.num_items) {
      throw std::out_of_range("build_ckg: interaction index out of range");
    }
  }
  g.interactions_ = dataset.train;
  g.triples_ = kg.triples;
  g.rebuild_adjacency();
  return g;
}

CollaborativeKG drop_nodes(const CollaborativeKG& ckg, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("drop_nodes: rate must be in [0, 1), got " +
                                std::to_string(rate));
  }
  CollaborativeKG g = ckg;
  const std::size_t n = ckg.num_entities();
  const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  if (count == 0) return g;

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng = make_rng(seed, 0xd20b);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k = 0; k < count; ++k) g.dropped_[order[k]] = 1;

  std::erase_if(g.interactions_, [&](const Interaction& x) {
    return g.dropped_[g.item_entity_[x.item]] != 0;
  });
  std::erase_if(g.triples_, [&](const Triple& t) {
    return g.dropped_[t.head] != 0 || g.dropped_[t.tail] != 0;
  });
  g.rebuild_adjacency();
  return g;
}

std::vector<CkgEdge> neighbors(const CollaborativeKG& ckg, std::uint32_t node,
                               std::size_t max_fanout, std::uint64_t seed) {
  const auto& all = ckg.edges(node);
  if (all.size() <= max_fanout) return all;
  std::vector<std::size_t> pick(all.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  Rng rng = make_rng(seed, node);
  for (std::size_t k = 0; k < max_fanout; ++k) {
    std::uniform_int_distribution<std::size_t> dist(k, pick.size() - 1);
    std::swap(pick[k], pick[dist(rng)]);
  }
  pick.resize(max_fanout);
  std::sort(pick.begin(), pick.end());
  std::vector<CkgEdge> out;
  out.reserve(max_fanout);
  for (std::size_t k : pick) out.push_back(all[k]);
  return out;
}

std::map<std::size_t, std::size_t> degree_histogram(const CollaborativeKG& ckg) {
  std::map<std::size_t, std::size_t> hist;
  for (const auto& list : ckg.adjacency()) ++hist[list.size()];
  return hist;
}

double top_decile_degree_share(const CollaborativeKG& ckg) {
  std::vector<std::size_t> degrees;
  for (const auto& list : ckg.adjacency()) degrees.push_back(list.size());
  const std::size_t total = std::accumulate(degrees.begin(), degrees.end(), std::size_t{0});
  if (total == 0 || degrees.empty()) return 0.0;
  std::sort(degrees.begin(), degrees.end(), std::greater<>());
  const std::size_t top = std::max<std::size_t>(1, degrees.size() / 10);
  const std::size_t head = std::accumulate(degrees.begin(), degrees.begin() + top, std::size_t{0});
  return static_cast<double>(head) / static_cast<double>(total);
}

void dump_edges(std::ostream& out, const CollaborativeKG& ckg) {
  for (const auto& [user, item] : ckg.interactions()) {
    out << ckg.user_node(user) << ' ' << CollaborativeKG::kInteract << ' '
        << ckg.item_node(item) << '\n';
  }
  for (const auto& t : ckg.triples()) {
    out << ckg.entity_node(t.head) << ' ' << t.relation + 1 << ' '
        << ckg.entity_node(t.tail) << '\n';
  }
}

}  // namespace kgrec
