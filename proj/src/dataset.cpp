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

#include "kgrec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string_view>
#include <unordered_set>

#include "kgrec/random.hpp"

namespace kgrec {

namespace {

std::vector<std::string_view> split_fields(std::string_view line,
                                           std::string_view delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + delimiter.size();
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const std::size_t b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const std::size_t e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// Calls fn(fields, line_number) for every non-blank line.
template <typename Fn>
void for_each_record(std::istream& in, std::string_view delimiter,
                     const std::string& source, std::size_t min_fields, Fn fn) {
  if (delimiter.empty()) throw std::invalid_argument("delimiter must not be empty");
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view = line;
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (trim(view).empty()) continue;
    auto fields = split_fields(view, delimiter);
    if (fields.size() < min_fields) {
      throw ParseError(source, number,
                       "expected at least " + std::to_string(min_fields) +
                           " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < min_fields; ++i) {
      fields[i] = trim(fields[i]);
      if (fields[i].empty()) throw ParseError(source, number, "empty field");
    }
    fn(fields, number);
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

bool all_digits(const std::string& s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Numeric ids sort numerically and before non-numeric ids, which sort
// lexicographically. Keeps internal ids independent of file order.
bool natural_less(const std::string& a, const std::string& b) {
  const bool na = all_digits(a), nb = all_digits(b);
  if (na != nb) return na;
  if (!na) return a < b;
  // Numeric order without overflow; "7" < "007" breaks the tie.
  const auto sa = std::string_view(a).substr(std::min(a.find_first_not_of('0'), a.size()));
  const auto sb = std::string_view(b).substr(std::min(b.find_first_not_of('0'), b.size()));
  if (sa.size() != sb.size()) return sa.size() < sb.size();
  if (sa != sb) return sa < sb;
  return a.size() < b.size();
}

struct RawPairHash {
  std::size_t operator()(const RawInteraction& p) const {
    return std::hash<std::string>()(p.user) * 31 ^ std::hash<std::string>()(p.item);
  }
};

RawInteractions dedup(const RawInteractions& pairs) {
  std::unordered_set<RawInteraction, RawPairHash> seen;
  RawInteractions out;
  for (const auto& p : pairs) {
    if (seen.insert(p).second) out.push_back(p);
  }
  return out;
}

std::size_t proportional(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 0.5));
}

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line,
                       const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
      line_(line) {}

const std::vector<std::vector<std::uint32_t>>& InteractionDataset::items_of(
    Split split) const {
  switch (split) {
    case Split::kTrain: return train_items;
    case Split::kValid: return valid_items;
    case Split::kTest: return test_items;
  }
  return train_items;
}

bool InteractionDataset::in_train(std::uint32_t user, std::uint32_t item) const {
  const auto& items = train_items[user];
  return std::binary_search(items.begin(), items.end(), item);
}

RawInteractions parse_interactions(std::istream& in, std::string_view delimiter,
                                   const std::string& source) {
  RawInteractions out;
  for_each_record(in, delimiter, source, 2, [&](const auto& f, std::size_t) {
    out.push_back({std::string(f[0]), std::string(f[1])});
  });
  return out;
}

RawInteractions load_interactions(const std::filesystem::path& path,
                                  std::string_view delimiter) {
  auto in = open_input(path);
  return parse_interactions(in, delimiter, path.string());
}

RawInteractions kcore_filter(const RawInteractions& pairs, std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("kcore_filter: min_count must be >= 1");
  RawInteractions current = dedup(pairs);
  while (true) {
    std::unordered_map<std::string, std::size_t> user_count, item_count;
    for (const auto& p : current) {
      ++user_count[p.user];
      ++item_count[p.item];
    }
    RawInteractions next;
    next.reserve(current.size());
    for (const auto& p : current) {
      if (user_count[p.user] >= min_count && item_count[p.item] >= min_count) {
        next.push_back(p);
      }
    }
    if (next.size() == current.size()) return next;
    current = std::move(next);
  }
}

RawInteractions subsample_users(const RawInteractions& pairs, std::size_t max_users,
                                std::uint64_t seed) {
  std::set<std::string, decltype(&natural_less)> users(&natural_less);
  for (const auto& p : pairs) users.insert(p.user);
  if (max_users == 0 || max_users >= users.size()) return pairs;
  std::vector<std::string> order(users.begin(), users.end());
  Rng rng = make_rng(seed, 0x5b5a);
  std::shuffle(order.begin(), order.end(), rng);
  const std::unordered_set<std::string> keep(order.begin(),
                                             order.begin() + static_cast<std::ptrdiff_t>(max_users));
  RawInteractions out;
  for (const auto& p : pairs) {
    if (keep.count(p.user)) out.push_back(p);
  }
  return out;
}

InteractionDataset split(const RawInteractions& pairs, SplitRatios ratios,
                         std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must be positive and sum to 1");
  }
  const RawInteractions unique = dedup(pairs);

  InteractionDataset ds;
  std::set<std::string, decltype(&natural_less)> users(&natural_less), items(&natural_less);
  for (const auto& p : unique) {
    users.insert(p.user);
    items.insert(p.item);
  }
  ds.user_ids.assign(users.begin(), users.end());
  ds.item_ids.assign(items.begin(), items.end());
  ds.num_users = ds.user_ids.size();
  ds.num_items = ds.item_ids.size();
  for (std::uint32_t u = 0; u < ds.num_users; ++u) ds.user_index[ds.user_ids[u]] = u;
  for (std::uint32_t i = 0; i < ds.num_items; ++i) ds.item_index[ds.item_ids[i]] = i;

  std::vector<std::vector<std::uint32_t>> by_user(ds.num_users);
  for (const auto& p : unique) {
    by_user[ds.user_index.at(p.user)].push_back(ds.item_index.at(p.item));
  }

  ds.train_items.resize(ds.num_users);
  ds.valid_items.resize(ds.num_users);
  ds.test_items.resize(ds.num_users);
  for (std::uint32_t u = 0; u < ds.num_users; ++u) {
    auto& items_u = by_user[u];
    std::sort(items_u.begin(), items_u.end());
    Rng rng = make_rng(seed, u);
    std::shuffle(items_u.begin(), items_u.end(), rng);

    const std::size_t n = items_u.size();
    std::size_t n_test = proportional(n, ratios.test);
    std::size_t n_valid = proportional(n, ratios.valid);
    while (n_test + n_valid >= n && (n_test + n_valid) > 0) {
      if (n_valid >= n_test && n_valid > 0) {
        --n_valid;
      } else {
        --n_test;
      }
    }
    ds.test_items[u].assign(items_u.begin(), items_u.begin() + n_test);
    ds.valid_items[u].assign(items_u.begin() + n_test,
                             items_u.begin() + n_test + n_valid);
    ds.train_items[u].assign(items_u.begin() + n_test + n_valid, items_u.end());
    for (auto* list : {&ds.train_items[u], &ds.valid_items[u], &ds.test_items[u]}) {
      std::sort(list->begin(), list->end());
    }
    for (auto i : ds.train_items[u]) ds.train.push_back({u, i});
    for (auto i : ds.valid_items[u]) ds.valid.push_back({u, i});
    for (auto i : ds.test_items[u]) ds.test.push_back({u, i});
  }
  return ds;
}

KnowledgeGraph parse_kg(std::istream& in, std::string_view delimiter,
                        const std::string& source) {
  KnowledgeGraph kg;
  auto intern = [](std::string_view name, std::vector<std::string>& names,
                   std::unordered_map<std::string, std::uint32_t>& index) {
    auto [it, inserted] =
        index.emplace(std::string(name), static_cast<std::uint32_t>(names.size()));
    if (inserted) names.emplace_back(name);
    return it->second;
  };
  std::set<Triple> seen;
  for_each_record(in, delimiter, source, 3, [&](const auto& f, std::size_t) {
    const Triple t{intern(f[0], kg.entity_ids, kg.entity_index),
                   intern(f[1], kg.relation_ids, kg.relation_index),
                   intern(f[2], kg.entity_ids, kg.entity_index)};
    if (seen.insert(t).second) {
      kg.triples.push_back(t);
    } else {
      ++kg.duplicates_dropped;
    }
  });
  kg.num_entities = kg.entity_ids.size();
  kg.num_relations = kg.relation_ids.size();
  return kg;
}

KnowledgeGraph load_kg(const std::filesystem::path& path, std::string_view delimiter) {
  auto in = open_input(path);
  return parse_kg(in, delimiter, path.string());
}

Alignment parse_alignment(std::istream& in, std::string_view delimiter,
                          const std::string& source) {
  Alignment out;
  for_each_record(in, delimiter, source, 2, [&](const auto& f, std::size_t) {
    out.emplace_back(std::string(f[0]), std::string(f[1]));
  });
  return out;
}

Alignment load_alignment(const std::filesystem::path& path,
                         std::string_view delimiter) {
  auto in = open_input(path);
  return parse_alignment(in, delimiter, path.string());
}

AlignmentReport align_items(KnowledgeGraph& kg, const InteractionDataset& dataset,
                            const Alignment& alignment) {
  constexpr std::uint32_t kUnset = ~std::uint32_t{0};
  AlignmentReport report;
  std::vector<std::uint32_t> item_entity(dataset.num_items, kUnset);
  std::unordered_map<std::uint32_t, std::uint32_t> entity_owner;

  auto entity_for = [&](const std::string& name) {
    auto [it, inserted] = kg.entity_index.emplace(
        name, static_cast<std::uint32_t>(kg.entity_ids.size()));
    if (inserted) kg.entity_ids.push_back(name);
    return it->second;
  };

  for (const auto& [item_raw, entity_raw] : alignment) {
    auto item_it = dataset.item_index.find(item_raw);
    if (item_it == dataset.item_index.end()) {
      ++report.dangling;
      continue;
    }
    const std::uint32_t item = item_it->second;
    const std::uint32_t entity = entity_for(entity_raw);
    if (item_entity[item] != kUnset) {
      if (item_entity[item] != entity) {
        throw std::runtime_error("item " + item_raw + " aligned to two entities");
      }
      continue;
    }
    auto [owner, fresh] = entity_owner.emplace(entity, item);
    if (!fresh) {
      throw std::runtime_error("entity " + entity_raw + " aligned to two items");
    }
    item_entity[item] = entity;
    ++report.aligned;
  }
  for (std::uint32_t i = 0; i < dataset.num_items; ++i) {
    if (item_entity[i] != kUnset) continue;
    std::string name = "__item__:" + dataset.item_ids[i];
    if (kg.entity_index.count(name)) {
      throw std::runtime_error("entity name collision for item " + dataset.item_ids[i]);
    }
    item_entity[i] = entity_for(name);
    ++report.appended;
  }
  kg.num_entities = kg.entity_ids.size();
  kg.item_entity = std::move(item_entity);
  return report;
}

DatasetStats compute_stats(const InteractionDataset& dataset,
                           const KnowledgeGraph& kg) {
  return {dataset.num_users,
          dataset.num_items,
          dataset.train.size() + dataset.valid.size() + dataset.test.size(),
          kg.num_entities,
          kg.num_relations,
          kg.triples.size()};
}

void write_stats_csv(std::ostream& out, const DatasetStats& stats) {
  out << "key,value\n"
      << "users," << stats.users << '\n'
      << "items," << stats.items << '\n'
      << "interactions," << stats.interactions << '\n'
      << "entities," << stats.entities << '\n'
      << "relations," << stats.relations << '\n'
      << "triples," << stats.triples << '\n';
}

}  // namespace kgrec
