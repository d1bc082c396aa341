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

#include "kgrec/commands.hpp"

#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "kgrec/eval.hpp"
#include "kgrec/model.hpp"
#include "kgrec/trainer.hpp"

namespace kgrec {

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Writes the artifacts every command shares and returns the loaded data.
LoadedData prepare(const RunConfig& config, const fs::path& out_dir, bool need_checkpoint,
                   std::ostream& log) {
  validate_run_config(config, need_checkpoint);
  fs::create_directories(out_dir);
  {
    auto out = open_output(out_dir / "resolved.config");
    write_config(out, config);
  }
  LoadedData data = load_data(config);
  {
    auto out = open_output(out_dir / "stats.csv");
    write_stats_csv(out, compute_stats(data.dataset, data.kg));
  }
  log << "users " << data.dataset.num_users << ", items " << data.dataset.num_items
      << ", train " << data.dataset.train.size() << ", entities " << data.kg.num_entities
      << ", triples " << data.kg.triples.size() << '\n';
  return data;
}

std::string label(const TrainConfig& c, const char* split) {
  Variant v = Variant::kBase;
  if (c.use_ui && c.use_uu) {
    v = Variant::kTwoLevel;
  } else if (c.use_ui) {
    v = Variant::kUserItem;
  } else if (c.use_uu) {
    v = Variant::kUserUser;
  }
  return std::string(variant_name(v)) + ":" + split;
}

// Validation and test rows for one set of parameters.
std::vector<MetricsReport> split_reports(const RunConfig& config, const LoadedData& data,
                                         const ModelParams& params) {
  const TrainConfig& c = config.train;
  std::vector<MetricsReport> rows;
  for (auto [split, name] : {std::pair{Split::kValid, "valid"}, std::pair{Split::kTest, "test"}}) {
    MetricsReport r = evaluate(params, data.ckg, data.dataset, split, c.top_k,
                               eval_propagation(c), c.threads);
    r.variant = label(c, name);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_metrics(const fs::path& out_dir, const std::vector<MetricsReport>& rows,
                   std::ostream& log) {
  auto out = open_output(out_dir / "metrics.csv");
  write_metrics_csv(out, rows);
  write_metrics_csv(log, rows);
}

}  // namespace

LoadedData load_data(const RunConfig& config) {
  RawInteractions raw = load_interactions(config.interactions, config.delimiter);
  raw = subsample_users(raw, config.max_users, config.train.seed);
  if (config.kcore > 0) raw = kcore_filter(raw, config.kcore);
  const SplitRatios ratios{1.0 - config.valid_ratio - config.test_ratio, config.valid_ratio,
                           config.test_ratio};
  LoadedData data{split(raw, ratios, config.train.seed), load_kg(config.kg, config.kg_delimiter),
                  {}, {}};
  data.alignment = align_items(data.kg, data.dataset,
                               load_alignment(config.alignment, config.kg_delimiter));
  data.ckg = build_ckg(data.dataset, data.kg);
  return data;
}

int cmd_train(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  const LoadedData data = prepare(config, out_dir, false, log);
  log << "epoch,final,valid_recall,valid_ndcg\n";
  const TrainResult result =
      train(config.train, data.dataset, data.ckg, [&](const EpochRecord& rec) {
        log << rec.epoch << ',' << format_double(rec.loss.final_loss) << ','
            << format_double(rec.valid_recall) << ',' << format_double(rec.valid_ndcg) << '\n';
      });
  save_checkpoint(out_dir / "checkpoint.bin", result.params);
  {
    auto out = open_output(out_dir / "history.csv");
    write_history_csv(out, result.history);
  }
  log << "stopped: " << result.history.stop_reason << ", best epoch "
      << result.history.best_epoch << '\n';
  write_metrics(out_dir, split_reports(config, data, result.params), log);
  return 0;
}

int cmd_eval(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  const LoadedData data = prepare(config, out_dir, true, log);
  const ModelParams params = load_checkpoint(config.checkpoint);
  if (params.dims.num_nodes != data.ckg.num_nodes() ||
      params.dims.num_relations != data.ckg.num_directed_relations()) {
    throw std::runtime_error("checkpoint " + config.checkpoint.string() +
                             " does not match the configured data");
  }
  TrainConfig c = config.train;
  c.hops = params.dims.hops;
  RunConfig effective = config;
  effective.train = c;
  write_metrics(out_dir, split_reports(effective, data, params), log);
  return 0;
}

int cmd_ablate(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  const LoadedData data = prepare(config, out_dir, false, log);
  write_metrics(out_dir, run_ablation(config.train, data.dataset, data.ckg), log);
  return 0;
}

int cmd_perturb(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  const LoadedData data = prepare(config, out_dir, false, log);
  write_metrics(out_dir,
                run_noise_experiment(config.train, data.dataset, data.ckg, config.drop_rates),
                log);
  return 0;
}

}  // namespace kgrec
