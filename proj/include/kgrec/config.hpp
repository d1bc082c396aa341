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
//
// Run configuration: flat "key = value" text, one entry per line, '#' starts
// a comment. Later sources win: defaults, then the file, then overrides.

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgrec/trainer.hpp"

namespace kgrec {

struct RunConfig {
  TrainConfig train;
  // Relative paths resolve against the directory of the config file.
  std::filesystem::path interactions;
  std::filesystem::path kg;
  std::filesystem::path alignment;
  std::filesystem::path checkpoint;  // eval input
  // Field separators; "tab" and "space" name the whitespace ones in text.
  std::string delimiter = "\t";     // interactions
  std::string kg_delimiter = "\t";  // KG triples and alignment
  std::size_t kcore = 0;             // 0 disables the filter
  std::size_t max_users = 0;         // 0 keeps every user
  double valid_ratio = 0.1;
  double test_ratio = 0.1;
  std::vector<double> drop_rates{0.0, 0.1, 0.2, 0.3};
};

// Names the key and the line it came from (0 for command-line overrides).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, std::string key,
              const std::string& what);
  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

// Applies `text` and then each "key=value" override on top of the defaults.
RunConfig parse_config(std::istream& text, const std::string& source,
                       const std::filesystem::path& base_dir,
                       std::span<const std::string> overrides = {});
// An empty path means defaults plus overrides.
RunConfig parse_config(const std::filesystem::path& file,
                       std::span<const std::string> overrides = {});

// Checks the training settings and that the data files exist.
void validate_run_config(const RunConfig& config, bool need_checkpoint);

// Every key with its resolved value; parse_config() reads it back unchanged.
void write_config(std::ostream& out, const RunConfig& config);

// Every recognised key, in write order.
std::vector<std::string> config_keys();

}  // namespace kgrec
