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
// Each epoch runs two phases. Phase A walks a shuffled partition of the
// training interactions and minimises BPR plus the contrastive terms and the
// batch-local L2 penalty; the EMA copy of the embeddings is refreshed after
// every step. Phase B walks the KG triples and minimises the TransR ranking
// loss, touching only the node embeddings and relation tables. Validation
// Recall@K picks the returned parameters.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgrec/autodiff.hpp"
#include "kgrec/ckg.hpp"
#include "kgrec/dataset.hpp"
#include "kgrec/losses.hpp"
#include "kgrec/model.hpp"
#include "kgrec/sampler.hpp"
#include "kgrec/tensor.hpp"

namespace kgrec {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 4096;
  std::size_t dim = 64;
  std::size_t relation_dim = 64;
  std::size_t hops = 2;
  std::size_t max_fanout = 8;
  double tau = 0.1;
  double phi = 0.8;
  double lambda = 1e-5;
  std::size_t noise_count = 16;
  double noise_scale = 1.0;
  double dropout_rate = 0.1;
  double ema_momentum = 0.995;
  std::size_t head_depth = 2;
  Activation head_activation = Activation::kTanh;
  std::size_t patience = 50;
  std::size_t max_epochs = 1000;
  std::size_t top_k = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 2026;
  bool use_ui = true;  // user-item contrastive terms
  bool use_uu = true;  // user-user contrastive terms
  bool use_kg = true;  // phase B
  std::size_t threads = 1;  // evaluation workers

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Thrown when a loss or gradient stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, std::string term, std::string detail);
  std::size_t epoch() const { return epoch_; }
  const std::string& term() const { return term_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t epoch_;
  std::string term_;
  std::string detail_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossBundle loss;  // means over the epoch's batches
  double valid_recall = 0.0;
  double valid_ndcg = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string stop_reason;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  ModelParams params;  // from the best validation epoch
  TrainHistory history;
};

// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8. Tensors flagged sparse
// are updated row by row, and only rows with a non-zero gradient move (their
// moments included); other tensors take the dense update every step.
class AdamState {
 public:
  AdamState(std::span<const Tensor* const> params, std::vector<char> sparse_rows);

  std::size_t step() const { return step_; }
  const Tensor& first_moment(std::size_t k) const { return m_.at(k); }
  const Tensor& second_moment(std::size_t k) const { return v_.at(k); }

 private:
  friend void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                        AdamState& state, double lr);
  std::vector<Tensor> m_, v_;
  std::vector<char> sparse_;
  std::size_t step_ = 0;
};

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, double lr);

// Rescales grads in place so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

// True once the best validation Recall@K is at least `patience` epochs old;
// an epoch that only ties the best does not reset the count.
bool early_stop(const TrainHistory& history, std::size_t patience);

// Tape handles for one phase-A objective.
struct PhaseATerms {
  NodeId cf, ui_inbatch, uu_inbatch, ui_noised, uu_noised, reg, total;
};

// Builds the phase-A objective for `batch` on `tape`. The contrastive batch
// is ignored for disabled levels.
PhaseATerms phase_a_objective(Tape& tape, const ParamNodes& params,
                              const PropagationPlan& plan, const CollaborativeKG& ckg,
                              std::span<const BprTriple> batch,
                              const ContrastiveBatch& contrastive,
                              const TrainConfig& config);

// TransR ranking loss for a batch of corrupted triples (KG numbering), summed
// over per-relation groups.
NodeId phase_b_objective(Tape& tape, const ParamNodes& params, const CollaborativeKG& ckg,
                         std::span<const CorruptedTriple> batch);

// Called after every epoch's record is appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const InteractionDataset& dataset,
                  const CollaborativeKG& ckg, const EpochCallback& on_epoch = {});

// Parameters before any update, as train() initialises them.
ModelParams initial_params(const TrainConfig& config, const CollaborativeKG& ckg);

// Propagation settings train() uses for validation and that evaluation of a
// trained model must reuse.
PropagationSettings eval_propagation(const TrainConfig& config);

// epoch,cf,ui_inbatch,uu_inbatch,ui_noised,uu_noised,reg,total,kg,final,valid_recall,valid_ndcg
void write_history_csv(std::ostream& out, const TrainHistory& history);

// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

}  // namespace kgrec
