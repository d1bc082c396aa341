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

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "doctest.h"
#include "kgrec/ckg.hpp"

using namespace kgrec;

namespace {

struct Toy {
  InteractionDataset dataset;
  KnowledgeGraph kg;
  CollaborativeKG ckg;
};

// Users with at most four items keep all of them in train under 0.8/0.1/0.1.
Toy make_toy(const std::string& interactions, const std::string& triples,
             const std::string& alignment) {
  Toy t;
  std::istringstream in(interactions), kg(triples), al(alignment);
  t.dataset = split(parse_interactions(in, "\t"), {}, 0);
  t.kg = parse_kg(kg, "\t");
  align_items(t.kg, t.dataset, parse_alignment(al, "\t"));
  t.ckg = build_ckg(t.dataset, t.kg);
  return t;
}

using Edge = std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>;

std::set<Edge> edge_set(const CollaborativeKG& g) {
  std::set<Edge> out;
  for (std::uint32_t h = 0; h < g.num_nodes(); ++h) {
    for (const auto& e : g.edges(h)) out.insert({h, e.relation, e.neighbor});
  }
  return out;
}

// Ten entities e0..e9; items x, y align to e0, e1.
Toy ten_entities() {
  std::string triples;
  for (int k = 0; k < 9; ++k) {
    triples += "e" + std::to_string(k) + "\tnext\te" + std::to_string(k + 1) + "\n";
  }
  return make_toy("u\tx\nu\ty\nv\tx\n", triples, "x\te0\ny\te1\n");
}

}  // namespace

TEST_CASE("build_ckg counts edges and relations") {
  const Toy t = make_toy("u\tx\nv\ty\n", "ex\tr\tg\ney\tr\tg\ng\ts\tex\n", "x\tex\ny\tey\n");
  CHECK(t.ckg.forward_edge_count() == 5);
  CHECK(t.ckg.directed_edge_count() == 10);
  CHECK(t.ckg.num_relations() == 3);
  CHECK(t.ckg.num_directed_relations() == 6);
  CHECK(t.ckg.num_nodes() == 2 + 3);
  CHECK(t.ckg.user_node(1) == 1);
  CHECK(t.ckg.entity_node(0) == 2);
  CHECK(t.ckg.inverse(0) == 3);
  CHECK(t.ckg.inverse(3) == 0);
}

TEST_CASE("empty KG gives the bipartite graph") {
  const Toy t = make_toy("u\tx\nu\ty\nv\ty\n", "", "");
  CHECK(t.ckg.num_relations() == 1);
  CHECK(t.ckg.forward_edge_count() == 3);
  for (std::uint32_t h = 0; h < t.ckg.num_nodes(); ++h) {
    for (const auto& e : t.ckg.edges(h)) {
      CHECK((e.relation == 0 || e.relation == t.ckg.inverse(0)));
    }
  }
}

TEST_CASE("only train interactions enter the graph") {
  std::string log;
  for (int i = 0; i < 10; ++i) log += "u\t" + std::to_string(i) + "\n";
  const Toy t = make_toy(log, "", "");
  CHECK(t.ckg.interactions().size() == t.dataset.train.size());
  CHECK(t.ckg.interactions().size() == 8);
}

TEST_CASE("every edge has its inverse; Interact joins users and items") {
  const Toy t = make_toy("u\tx\nu\ty\nv\tx\n", "ex\tr\tey\ney\ts\tz\n", "x\tex\ny\tey\n");
  const auto edges = edge_set(t.ckg);
  std::set<std::uint32_t> item_nodes;
  for (std::uint32_t i = 0; i < t.ckg.num_items(); ++i) item_nodes.insert(t.ckg.item_node(i));
  for (const auto& [h, r, n] : edges) {
    CHECK(n < t.ckg.num_nodes());
    CHECK(edges.count({n, t.ckg.inverse(r), h}));
    if (r == CollaborativeKG::kInteract) {
      CHECK(h < t.ckg.num_users());
      CHECK(item_nodes.count(n));
    }
  }
}

TEST_CASE("drop_nodes") {
  const Toy t = ten_entities();
  CHECK(t.ckg.num_entities() == 10);
  CHECK(edge_set(drop_nodes(t.ckg, 0.0, 1)) == edge_set(t.ckg));

  const CollaborativeKG half = drop_nodes(t.ckg, 0.5, 1);
  std::size_t dropped = 0;
  for (std::uint32_t e = 0; e < 10; ++e) dropped += half.entity_dropped(e);
  CHECK(dropped == 5);
  for (const auto& [h, r, n] : edge_set(half)) {
    if (h >= half.num_users()) CHECK(!half.entity_dropped(h - half.num_users()));
    if (n >= half.num_users()) CHECK(!half.entity_dropped(n - half.num_users()));
  }
  CHECK(edge_set(drop_nodes(t.ckg, 0.5, 1)) == edge_set(half));
  CHECK(half.num_nodes() == t.ckg.num_nodes());
  CHECK_THROWS_AS(drop_nodes(t.ckg, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(drop_nodes(t.ckg, -0.1, 1), std::invalid_argument);
}

TEST_CASE("dropping an item entity removes its interactions") {
  const Toy t = ten_entities();
  const std::uint32_t x = t.dataset.item_index.at("x");
  // Find a seed that drops x's entity but not y's.
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const CollaborativeKG g = drop_nodes(t.ckg, 0.1, seed);
    if (!g.entity_dropped(t.ckg.item_entity(x))) continue;
    for (const auto& i : g.interactions()) CHECK(i.item != x);
    CHECK(g.edges(t.ckg.item_node(x)).empty());
    const auto before = edge_set(t.ckg), after = edge_set(g);
    std::size_t lost_interact = 0;
    for (const auto& e : before) {
      if (!after.count(e) && std::get<1>(e) == CollaborativeKG::kInteract) ++lost_interact;
    }
    CHECK(lost_interact == 2);  // u-x and v-x
    return;
  }
  FAIL("no seed dropped the item entity");
}

TEST_CASE("neighbors") {
  std::string log;
  for (int i = 0; i < 20; ++i) log += "hub\t" + std::to_string(i) + "\n";
  log += "small\t0\nsmall\t1\nsmall\t2\n";
  // 20 items: 0.1 * 20 = 2 go to test and 2 to valid; keep the hub's
  // degree by reading it off the graph.
  const Toy t = make_toy(log, "lonely\tr\tlonely2\n", "");
  const std::uint32_t hub = t.dataset.user_index.at("hub");
  const std::uint32_t small = t.dataset.user_index.at("small");
  const std::size_t hub_degree = t.ckg.edges(hub).size();
  REQUIRE(hub_degree > 8);
  const auto picked = neighbors(t.ckg, hub, 8, 5);
  CHECK(picked.size() == 8);
  std::set<std::uint32_t> distinct;
  for (const auto& e : picked) distinct.insert(e.neighbor);
  CHECK(distinct.size() == 8);
  CHECK(neighbors(t.ckg, hub, 8, 5) == picked);
  CHECK(neighbors(t.ckg, small, 8, 5) == t.ckg.edges(small));
  CHECK(neighbors(t.ckg, small, 8, 5).size() == 3);
  CHECK_THROWS_AS(neighbors(t.ckg, 1000, 8, 5), std::out_of_range);

  const Toy iso = make_toy("u\tx\n", "a\tr\tb\n", "");
  // Drop everything but users' items: an entity with no edges.
  const CollaborativeKG g = drop_nodes(iso.ckg, 0.5, 0);
  for (std::uint32_t n = 0; n < g.num_nodes(); ++n) {
    if (g.edges(n).empty()) CHECK(neighbors(g, n, 8, 1).empty());
  }
}

TEST_CASE("degree histogram") {
  const Toy star = make_toy("hub\ta\nhub\tb\nhub\tc\nhub\td\n", "", "");
  CHECK(degree_histogram(star.ckg) == std::map<std::size_t, std::size_t>{{1, 4}, {4, 1}});
  CHECK(top_decile_degree_share(star.ckg) == doctest::Approx(0.5));

  const Toy t = ten_entities();
  const CollaborativeKG g = drop_nodes(t.ckg, 0.9, 3);
  std::size_t total = 0;
  for (const auto& [deg, count] : degree_histogram(g)) total += count;
  CHECK(total == g.num_nodes());
}

TEST_CASE("dump_edges writes one line per forward edge") {
  const Toy t = make_toy("u\tx\n", "ex\tr\tg\n", "x\tex\n");
  std::ostringstream out;
  dump_edges(out, t.ckg);
  CHECK(out.str() == "0 0 1\n1 1 2\n");
}
