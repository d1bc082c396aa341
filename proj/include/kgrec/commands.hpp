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

#include <filesystem>
#include <iosfwd>

#include "kgrec/ckg.hpp"
#include "kgrec/config.hpp"
#include "kgrec/dataset.hpp"

namespace kgrec {

struct LoadedData {
  InteractionDataset dataset;
  KnowledgeGraph kg;
  AlignmentReport alignment;
  CollaborativeKG ckg;
};

// Reads, filters, splits and aligns the files named by `config`.
LoadedData load_data(const RunConfig& config);

// Each command writes resolved.config and stats.csv into `out_dir` along with
// its own outputs, logs progress to `log`, and returns a process exit status.
//   train:   checkpoint.bin, history.csv, metrics.csv (valid and test rows)
//   eval:    metrics.csv for the checkpoint named by `checkpoint`
//   ablate:  metrics.csv with one test row per variant
//   perturb: metrics.csv with one test row per drop rate
int cmd_train(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_eval(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_ablate(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_perturb(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace kgrec
