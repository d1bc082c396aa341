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

#include "kgrec/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>

namespace kgrec {

namespace {

namespace fs = std::filesystem;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

bool parse_size(std::string_view text, std::size_t& out) {
  if (!text.empty() && text.front() == '-') return false;
  return parse_number(text, out);
}

bool parse_real(std::string_view text, double& out) {
  double v = 0.0;
  if (!parse_number(text, v) || !std::isfinite(v)) return false;
  out = v;
  return true;
}

bool parse_bool(std::string_view text, bool& out) {
  if (text == "true" || text == "1") return out = true, true;
  if (text == "false" || text == "0") return out = false, true;
  return false;
}

bool parse_rates(std::string_view text, std::vector<double>& out) {
  std::vector<double> rates;
  while (!text.empty()) {
    const auto comma = text.find(',');
    double v = 0.0;
    if (!parse_real(trim(text.substr(0, comma)), v)) return false;
    rates.push_back(v);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (rates.empty()) return false;
  out = std::move(rates);
  return true;
}

bool parse_delimiter(std::string_view text, std::string& out) {
  if (text == "tab") return out = "\t", true;
  if (text == "space") return out = " ", true;
  if (text.empty() || text.find_first_of(" \t") != std::string_view::npos) return false;
  out = std::string(text);
  return true;
}

std::string delimiter_text(const std::string& d) {
  if (d == "\t") return "tab";
  if (d == " ") return "space";
  return d;
}

struct Entry {
  const char* key;
  const char* type;
  std::function<bool(RunConfig&, std::string_view, const fs::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Field>
Entry size_entry(const char* key, Field field) {
  return {key, "a non-negative integer",
          [field](RunConfig& c, std::string_view v, const fs::path&) {
            return parse_size(v, field(c));
          },
          [field](const RunConfig& c) {
            return std::to_string(field(const_cast<RunConfig&>(c)));
          }};
}

template <typename Field>
Entry real_entry(const char* key, Field field) {
  return {key, "a real number",
          [field](RunConfig& c, std::string_view v, const fs::path&) {
            return parse_real(v, field(c));
          },
          [field](const RunConfig& c) {
            return format_double(field(const_cast<RunConfig&>(c)));
          }};
}

template <typename Field>
Entry bool_entry(const char* key, Field field) {
  return {key, "true or false",
          [field](RunConfig& c, std::string_view v, const fs::path&) {
            return parse_bool(v, field(c));
          },
          [field](const RunConfig& c) {
            return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Field>
Entry path_entry(const char* key, Field field) {
  return {key, "a path",
          [field](RunConfig& c, std::string_view v, const fs::path& base) {
            fs::path p(v);
            if (!p.empty() && p.is_relative()) p = base / p;
            field(c) = p.empty() ? p : p.lexically_normal();
            return true;
          },
          [field](const RunConfig& c) {
            return field(const_cast<RunConfig&>(c)).string();
          }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(path_entry("interactions", [](RunConfig& c) -> auto& { return c.interactions; }));
    t.push_back(path_entry("kg", [](RunConfig& c) -> auto& { return c.kg; }));
    t.push_back(path_entry("alignment", [](RunConfig& c) -> auto& { return c.alignment; }));
    t.push_back(path_entry("checkpoint", [](RunConfig& c) -> auto& { return c.checkpoint; }));
    for (auto [key, field] : {std::pair{"delimiter", &RunConfig::delimiter},
                              std::pair{"kg_delimiter", &RunConfig::kg_delimiter}}) {
      t.push_back({key, "tab, space or a separator without whitespace",
                   [field](RunConfig& c, std::string_view v, const fs::path&) {
                     return parse_delimiter(v, c.*field);
                   },
                   [field](const RunConfig& c) { return delimiter_text(c.*field); }});
    }
    t.push_back(size_entry("kcore", [](RunConfig& c) -> auto& { return c.kcore; }));
    t.push_back(size_entry("max_users", [](RunConfig& c) -> auto& { return c.max_users; }));
    t.push_back(real_entry("valid_ratio", [](RunConfig& c) -> auto& { return c.valid_ratio; }));
    t.push_back(real_entry("test_ratio", [](RunConfig& c) -> auto& { return c.test_ratio; }));
    t.push_back({"drop_rates", "a comma-separated list of reals",
                 [](RunConfig& c, std::string_view v, const fs::path&) {
                   return parse_rates(v, c.drop_rates);
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t k = 0; k < c.drop_rates.size(); ++k) {
                     if (k) s += ',';
                     s += format_double(c.drop_rates[k]);
                   }
                   return s;
                 }});
    t.push_back(real_entry("lr", [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
    t.push_back(size_entry("batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; }));
    t.push_back(size_entry("dim", [](RunConfig& c) -> auto& { return c.train.dim; }));
    t.push_back(size_entry("relation_dim", [](RunConfig& c) -> auto& { return c.train.relation_dim; }));
    t.push_back(size_entry("hops", [](RunConfig& c) -> auto& { return c.train.hops; }));
    t.push_back(size_entry("max_fanout", [](RunConfig& c) -> auto& { return c.train.max_fanout; }));
    t.push_back(real_entry("tau", [](RunConfig& c) -> auto& { return c.train.tau; }));
    t.push_back(real_entry("phi", [](RunConfig& c) -> auto& { return c.train.phi; }));
    t.push_back(real_entry("lambda", [](RunConfig& c) -> auto& { return c.train.lambda; }));
    t.push_back(size_entry("noise_count", [](RunConfig& c) -> auto& { return c.train.noise_count; }));
    t.push_back(real_entry("noise_scale", [](RunConfig& c) -> auto& { return c.train.noise_scale; }));
    t.push_back(real_entry("dropout_rate", [](RunConfig& c) -> auto& { return c.train.dropout_rate; }));
    t.push_back(real_entry("ema_momentum", [](RunConfig& c) -> auto& { return c.train.ema_momentum; }));
    t.push_back(size_entry("head_depth", [](RunConfig& c) -> auto& { return c.train.head_depth; }));
    t.push_back({"head_activation", "tanh or relu",
                 [](RunConfig& c, std::string_view v, const fs::path&) {
                   try {
                     c.train.head_activation = parse_activation(v);
                     return true;
                   } catch (const std::invalid_argument&) {
                     return false;
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(activation_name(c.train.head_activation));
                 }});
    t.push_back(size_entry("patience", [](RunConfig& c) -> auto& { return c.train.patience; }));
    t.push_back(size_entry("max_epochs", [](RunConfig& c) -> auto& { return c.train.max_epochs; }));
    t.push_back(size_entry("top_k", [](RunConfig& c) -> auto& { return c.train.top_k; }));
    t.push_back(real_entry("clip_norm", [](RunConfig& c) -> auto& { return c.train.clip_norm; }));
    t.push_back({"seed", "a non-negative integer",
                 [](RunConfig& c, std::string_view v, const fs::path&) {
                   return !v.empty() && v.front() != '-' && parse_number(v, c.train.seed);
                 },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    t.push_back(bool_entry("use_ui", [](RunConfig& c) -> auto& { return c.train.use_ui; }));
    t.push_back(bool_entry("use_uu", [](RunConfig& c) -> auto& { return c.train.use_uu; }));
    t.push_back(bool_entry("use_kg", [](RunConfig& c) -> auto& { return c.train.use_kg; }));
    t.push_back(size_entry("threads", [](RunConfig& c) -> auto& { return c.train.threads; }));
    return t;
  }();
  return table;
}

void apply(RunConfig& config, std::string_view line, const std::string& source,
           std::size_t line_no, const fs::path& base) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError(source, line_no, std::string(trim(line)), "expected key = value");
  }
  const std::string key(trim(line.substr(0, eq)));
  const std::string_view value = trim(line.substr(eq + 1));
  for (const auto& e : entries()) {
    if (key != e.key) continue;
    if (!e.set(config, value, base)) {
      throw ConfigError(source, line_no, key,
                        "expected " + std::string(e.type) + ", got '" + std::string(value) + "'");
    }
    return;
  }
  throw ConfigError(source, line_no, key, "unknown key");
}

}  // namespace

ConfigError::ConfigError(const std::string& source, std::size_t line, std::string key,
                         const std::string& what)
    : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) +
                         ": " + key + ": " + what),
      key_(std::move(key)),
      line_(line) {}

RunConfig parse_config(std::istream& text, const std::string& source,
                       const fs::path& base_dir, std::span<const std::string> overrides) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(text, line)) {
    ++line_no;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    if (trim(view).empty()) continue;
    apply(config, view, source, line_no, base_dir);
  }
  const fs::path cwd = fs::current_path();
  for (const auto& o : overrides) apply(config, o, "--set", 0, cwd);
  return config;
}

RunConfig parse_config(const fs::path& file, std::span<const std::string> overrides) {
  if (file.empty()) {
    std::istringstream empty;
    return parse_config(empty, "<defaults>", fs::current_path(), overrides);
  }
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open config " + file.string());
  return parse_config(in, file.string(), fs::absolute(file).parent_path(), overrides);
}

void validate_run_config(const RunConfig& config, bool need_checkpoint) {
  try {
    config.train.validate();
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    throw ConfigError("config", 0, what.substr(0, what.find(' ')), what);
  }
  auto need = [](const fs::path& p, const char* key) {
    if (p.empty()) throw ConfigError("config", 0, key, "required path is not set");
    if (!fs::exists(p)) throw ConfigError("config", 0, key, "no such file: " + p.string());
  };
  need(config.interactions, "interactions");
  need(config.kg, "kg");
  need(config.alignment, "alignment");
  if (need_checkpoint) need(config.checkpoint, "checkpoint");
  if (!(config.valid_ratio > 0.0 && config.test_ratio > 0.0 &&
        config.valid_ratio + config.test_ratio < 1.0)) {
    throw ConfigError("config", 0, "valid_ratio",
                      "valid_ratio and test_ratio must be positive with sum < 1");
  }
  for (double r : config.drop_rates) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("config", 0, "drop_rates", "rates must be in [0, 1)");
  }
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const auto& e : entries()) out << e.key << " = " << e.get(config) << '\n';
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.emplace_back(e.key);
  return keys;
}

}  // namespace kgrec
