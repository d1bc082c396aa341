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
// Training objectives as tape programs.
//
// Contrastive terms use cosine similarity scaled by 1/tau and keep the
// positive pair inside the softmax denominator:
//
//   l(a) = -log( e^{s(a,p)/tau} / (e^{s(a,p)/tau} + sum_n w_n e^{s(a,n)/tau}) )
//
// so every term is >= 0 and stays finite when every negative is removed.
// Per-anchor values are averaged; BPR and KG ranking terms are summed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kgrec/autodiff.hpp"
#include "kgrec/tensor.hpp"

namespace kgrec {

// One value per objective term for a step or an epoch.
struct LossBundle {
  double cf = 0.0;          // BPR
  double ui_inbatch = 0.0;  // user-item, in-batch negatives
  double uu_inbatch = 0.0;  // user-user, in-batch negatives
  double ui_noised = 0.0;   // user-item, noise negatives
  double uu_noised = 0.0;   // user-user, noise negatives
  double reg = 0.0;         // lambda * ||theta||^2
  double total = 0.0;       // sum of the above
  double kg = 0.0;          // TransR ranking loss
  double final_loss = 0.0;  // total + kg

  friend bool operator==(const LossBundle&, const LossBundle&) = default;
};

// Fills `total` and `final_loss` from the parts.
LossBundle total_loss(LossBundle parts);

// alpha: 0 when the complementary similarity reaches the threshold.
inline double instance_weight(double complementary_similarity, double threshold) {
  return complementary_similarity >= threshold ? 0.0 : 1.0;
}

// sum_k softplus(neg[k] - pos[k]) == sum_k -ln sigmoid(pos[k] - neg[k]).
NodeId bpr_loss(Tape& tape, NodeId positive_scores, NodeId negative_scores);

// sum_k softplus(valid[k] - corrupted[k]); low energy means plausible.
NodeId kg_loss(Tape& tape, NodeId valid_energy, NodeId corrupted_energy);

// In-batch contrastive loss. anchors: [A, d]; candidates: [C, d];
// positive_of[a] is anchor a's positive column. weights: [A, C] holding the
// instance weight of every candidate (the positive column is forced to 1,
// zero excludes a candidate).
NodeId inbatch_loss(Tape& tape, NodeId anchors, NodeId candidates,
                    std::span<const std::size_t> positive_of, const Tensor& weights,
                    double tau);

// Contrastive loss against fixed noise vectors ([m, d], shared by every
// anchor). positives: [A, d] row-aligned with anchors. No noise means the
// term is switched off and contributes exactly zero.
NodeId noised_loss(Tape& tape, NodeId anchors, NodeId positives,
                   const std::optional<Tensor>& noise, double tau);

}  // namespace kgrec
