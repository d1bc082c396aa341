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
#include <map>
#include <vector>

#include "kgrec/dataset.hpp"

namespace kgrec {

struct CkgEdge {
  std::uint32_t relation;
  std::uint32_t neighbor;
  friend bool operator==(const CkgEdge&, const CkgEdge&) = default;
};

// Users and KG entities in one graph. Node ids: users first, then entities.
// Relation 0 is Interact, KG relation r is r + 1, and every relation x has an
// inverse x + num_relations so adjacency lists hold both directions.
class CollaborativeKG {
 public:
  static constexpr std::uint32_t kInteract = 0;

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return item_entity_.size(); }
  std::size_t num_entities() const { return num_entities_; }
  std::size_t num_nodes() const { return num_users_ + num_entities_; }
  // Forward relations: KG relations plus Interact.
  std::size_t num_relations() const { return num_relations_; }
  std::size_t num_directed_relations() const { return 2 * num_relations_; }
  std::uint32_t inverse(std::uint32_t relation) const;

  std::uint32_t user_node(std::uint32_t user) const { return user; }
  std::uint32_t entity_node(std::uint32_t entity) const {
    return static_cast<std::uint32_t>(num_users_) + entity;
  }
  std::uint32_t item_entity(std::uint32_t item) const { return item_entity_[item]; }
  std::uint32_t item_node(std::uint32_t item) const {
    return entity_node(item_entity_[item]);
  }
  const std::vector<std::uint32_t>& item_entities() const { return item_entity_; }

  const std::vector<CkgEdge>& edges(std::uint32_t node) const;
  const std::vector<std::vector<CkgEdge>>& adjacency() const { return adjacency_; }

  // Training interactions and KG triples still present in the graph. Triple
  // relations use KG numbering (not offset by Interact).
  const std::vector<Interaction>& interactions() const { return interactions_; }
  const std::vector<Triple>& triples() const { return triples_; }
  bool entity_dropped(std::uint32_t entity) const { return dropped_[entity] != 0; }

  std::size_t forward_edge_count() const { return interactions_.size() + triples_.size(); }
  std::size_t directed_edge_count() const;

  friend CollaborativeKG build_ckg(const InteractionDataset& dataset,
                                   const KnowledgeGraph& kg);
  friend CollaborativeKG drop_nodes(const CollaborativeKG& ckg, double rate,
                                    std::uint64_t seed);

 private:
  void rebuild_adjacency();

  std::size_t num_users_ = 0;
  std::size_t num_entities_ = 0;
  std::size_t num_relations_ = 1;
  std::vector<std::uint32_t> item_entity_;
  std::vector<char> dropped_;
  std::vector<Interaction> interactions_;
  std::vector<Triple> triples_;
  std::vector<std::vector<CkgEdge>> adjacency_;
};

// Only train interactions enter the graph. `kg` must have been passed
// through align_items() for this dataset.
CollaborativeKG build_ckg(const InteractionDataset& dataset, const KnowledgeGraph& kg);

// Removes round(rate * num_entities) uniformly chosen entity nodes together
// with every incident edge. Users are never dropped.
CollaborativeKG drop_nodes(const CollaborativeKG& ckg, double rate, std::uint64_t seed);

// All edges of `node` when its degree is at most `max_fanout`, else a uniform
// sample without replacement, in adjacency order.
std::vector<CkgEdge> neighbors(const CollaborativeKG& ckg, std::uint32_t node,
                               std::size_t max_fanout, std::uint64_t seed);

// degree -> number of nodes with that many incident edges.
std::map<std::size_t, std::size_t> degree_histogram(const CollaborativeKG& ckg);

// Share of all edge endpoints held by the top 10% highest-degree nodes.
double top_decile_degree_share(const CollaborativeKG& ckg);

// "head relation tail" per forward edge, as node and relation ids.
void dump_edges(std::ostream& out, const CollaborativeKG& ckg);

}  // namespace kgrec
