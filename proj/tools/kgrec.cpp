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

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kgrec/commands.hpp"
#include "kgrec/config.hpp"
#include "kgrec/trainer.hpp"

namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string out = "run";
  std::size_t threads = 0;
  std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "flat key = value config file");
  cmd->add_option("--set", o.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--threads", o.threads, "evaluation threads; 1 is the reference mode");
  cmd->add_option("--seed", o.seed, "seed for every random stream");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph recommender with two-level contrastive training"};
  app.require_subcommand(1);
  Options opts;
  using Command = int (*)(const kgrec::RunConfig&, const std::filesystem::path&, std::ostream&);
  const std::pair<const char*, Command> commands[] = {
      {"train", kgrec::cmd_train},
      {"eval", kgrec::cmd_eval},
      {"ablate", kgrec::cmd_ablate},
      {"perturb", kgrec::cmd_perturb},
  };
  const char* help[] = {"train a model and write checkpoint, history and metrics",
                        "evaluate the checkpoint named by the checkpoint key",
                        "train and test every contrastive variant",
                        "retrain on graphs with entity nodes dropped at each rate"};
  std::vector<CLI::App*> subs;
  for (std::size_t k = 0; k < 4; ++k) {
    subs.push_back(app.add_subcommand(commands[k].first, help[k]));
    add_common(subs.back(), opts);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<std::string> overrides = opts.overrides;
    if (opts.threads > 0) overrides.push_back("threads=" + std::to_string(opts.threads));
    if (opts.seed >= 0) overrides.push_back("seed=" + std::to_string(opts.seed));
    const kgrec::RunConfig config = kgrec::parse_config(opts.config, overrides);
    for (std::size_t k = 0; k < 4; ++k) {
      if (subs[k]->parsed()) return commands[k].second(config, opts.out, std::cout);
    }
  } catch (const kgrec::DivergenceError& e) {
    std::cerr << "error: training diverged: " << e.what() << '\n';
    return 3;
  } catch (const kgrec::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
