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

#include "doctest.h"
#include "kgrec/dataset.hpp"
#include "kgrec/random.hpp"

using namespace kgrec;

namespace {

RawInteractions parse(const std::string& text, std::string_view delim = "\t") {
  std::istringstream in(text);
  return parse_interactions(in, delim);
}

RawInteractions grid(std::size_t users, std::size_t items_per_user) {
  RawInteractions out;
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t i = 0; i < items_per_user; ++i) {
      out.push_back({"u" + std::to_string(u), "i" + std::to_string((u * 3 + i) % 40)});
    }
  }
  return out;
}

KnowledgeGraph kg_from(const std::string& text) {
  std::istringstream in(text);
  return parse_kg(in, "\t");
}

}  // namespace

TEST_CASE("load_interactions parsing") {
  CHECK(parse("").empty());
  const auto one = parse("u1\ti9\n");
  REQUIRE(one.size() == 1);
  CHECK(one[0] == RawInteraction{"u1", "i9"});
  const auto ml = parse("1::1193::5::978300760\n\n2::661::3::978302109\n", "::");
  REQUIRE(ml.size() == 2);
  CHECK(ml[1] == RawInteraction{"2", "661"});
  // Duplicates are kept at this stage.
  CHECK(parse("a\tb\na\tb\n").size() == 2);
  try {
    parse("a\tb\nbroken\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(load_interactions("/nonexistent/kgrec/file.tsv"), std::runtime_error);
}

TEST_CASE("kcore_filter") {
  const RawInteractions pairs = grid(10, 4);
  CHECK(kcore_filter(pairs, 1) == pairs);
  CHECK(kcore_filter(parse("a\tx\na\tx\n"), 1).size() == 1);
  // Three users with the same two items: items reach 3, users do not, and
  // removing the users empties the items too.
  const auto three = parse("a\tx\na\ty\nb\tx\nb\ty\nc\tx\nc\ty\n");
  CHECK(kcore_filter(three, 3).empty());
  CHECK_THROWS_AS(kcore_filter(three, 0), std::invalid_argument);

  // Output as a set does not depend on input order.
  RawInteractions shuffled = pairs;
  shuffled.push_back({"lonely", "i0"});
  auto as_set = [](const RawInteractions& r) {
    std::set<std::pair<std::string, std::string>> s;
    for (const auto& p : r) s.insert({p.user, p.item});
    return s;
  };
  const auto reference = as_set(kcore_filter(shuffled, 2));
  CHECK(!reference.count({"lonely", "i0"}));
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(as_set(kcore_filter(shuffled, 2)) == reference);
  }
}

TEST_CASE("split proportions and degenerate users") {
  RawInteractions pairs;
  for (int i = 0; i < 10; ++i) pairs.push_back({"big", std::to_string(i)});
  pairs.push_back({"single", "0"});
  const InteractionDataset ds = split(pairs, {}, 42);
  const auto big = ds.user_index.at("big"), single = ds.user_index.at("single");
  CHECK(ds.train_items[big].size() == 8);
  CHECK(ds.valid_items[big].size() == 1);
  CHECK(ds.test_items[big].size() == 1);
  CHECK(ds.train_items[single].size() == 1);
  CHECK(ds.valid_items[single].empty());
  CHECK(ds.test_items[single].empty());
  CHECK_THROWS_AS(split(pairs, {0.5, 0.5, 0.5}, 1), std::invalid_argument);
}

TEST_CASE("split invariants") {
  RawInteractions pairs = grid(30, 7);
  pairs.push_back(pairs.front());  // duplicate
  const InteractionDataset a = split(pairs, {}, 9);
  const InteractionDataset b = split(pairs, {}, 9);
  CHECK(a.train == b.train);
  CHECK(a.valid == b.valid);
  CHECK(a.test == b.test);
  CHECK(a.user_ids == b.user_ids);

  std::set<Interaction> all;
  for (const auto* part : {&a.train, &a.valid, &a.test}) {
    for (const auto& x : *part) {
      CHECK(x.user < a.num_users);
      CHECK(x.item < a.num_items);
      CHECK(all.insert(x).second);  // pairwise disjoint
    }
  }
  CHECK(all.size() == 30 * 7);
  for (std::uint32_t u = 0; u < a.num_users; ++u) CHECK(!a.train_items[u].empty());
  CHECK(a.in_train(a.train[0].user, a.train[0].item));
  CHECK(!a.in_train(a.test[0].user, a.test[0].item));
}

TEST_CASE("internal ids follow natural order of raw ids") {
  const InteractionDataset ds =
      split(parse("10\tb\n2\ta\n007\tc\n7\tc\nzed\t1\n"), {}, 0);
  CHECK(ds.user_ids == std::vector<std::string>{"2", "7", "007", "10", "zed"});
  CHECK(ds.item_ids == std::vector<std::string>{"1", "a", "b", "c"});
  CHECK(ds.user_index.at("10") == 3);
}

TEST_CASE("subsample_users") {
  const RawInteractions pairs = grid(20, 3);
  CHECK(subsample_users(pairs, 0, 1) == pairs);
  const auto sub = subsample_users(pairs, 5, 1);
  std::set<std::string> users;
  for (const auto& p : sub) users.insert(p.user);
  CHECK(users.size() == 5);
  CHECK(sub.size() == 15);
  CHECK(subsample_users(pairs, 5, 1) == sub);
}

TEST_CASE("load_kg") {
  const KnowledgeGraph one = kg_from("a\tlikes\tb\n");
  CHECK(one.num_entities == 2);
  CHECK(one.num_relations == 1);
  CHECK(one.triples.size() == 1);
  const KnowledgeGraph dup = kg_from("a\tr\tb\na\tr\tb\nb\ts\tc\n");
  CHECK(dup.triples.size() == 2);
  CHECK(dup.duplicates_dropped == 1);
  CHECK(dup.entity_ids == std::vector<std::string>{"a", "b", "c"});
  CHECK(dup.triples[1] == Triple{1, 1, 2});
  CHECK_THROWS_AS(kg_from("a\tr\n"), ParseError);
}

TEST_CASE("align_items") {
  const InteractionDataset ds = split(parse("u\tx\nu\ty\nu\tz\n"), {}, 0);
  KnowledgeGraph kg = kg_from("ex\tr\tey\nez\tr\tgenre\n");
  std::istringstream al("x\tex\ny\tey\nghost\tez\n");
  const AlignmentReport report = align_items(kg, ds, parse_alignment(al, "\t"));
  CHECK(report.aligned == 2);
  CHECK(report.dangling == 1);
  CHECK(report.appended == 1);
  CHECK(kg.num_entities == 5);
  CHECK(kg.item_entity[ds.item_index.at("x")] == kg.entity_index.at("ex"));
  CHECK(kg.entity_ids.back() == "__item__:z");

  KnowledgeGraph twice = kg_from("ex\tr\tey\n");
  const Alignment conflict{{"x", "ex"}, {"x", "ey"}};
  CHECK_THROWS(align_items(twice, ds, conflict));
  KnowledgeGraph shared = kg_from("ex\tr\tey\n");
  const Alignment same_entity{{"x", "ex"}, {"y", "ex"}};
  CHECK_THROWS(align_items(shared, ds, same_entity));
}

TEST_CASE("stats") {
  const InteractionDataset ds = split(grid(5, 4), {}, 0);
  KnowledgeGraph kg = kg_from("a\tr\tb\n");
  align_items(kg, ds, {});
  const DatasetStats s = compute_stats(ds, kg);
  CHECK(s.users == 5);
  CHECK(s.interactions == 20);
  CHECK(s.triples == 1);
  CHECK(s.entities == 2 + ds.num_items);
  std::ostringstream out;
  write_stats_csv(out, s);
  CHECK(out.str().rfind("key,value\nusers,5\n", 0) == 0);
}
