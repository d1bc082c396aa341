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

#include "kgrec/losses.hpp"

#include <stdexcept>
#include <string>

namespace kgrec {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("temperature must be > 0, got " + std::to_string(tau));
  }
}

void check_pairs(const Tape& tape, NodeId a, NodeId b, const char* what) {
  const Tensor& x = tape.value(a);
  if (x.rank() != 1 || x.shape() != tape.value(b).shape()) {
    throw ShapeError(std::string(what) + ": expected two equal-length score vectors");
  }
}

}  // namespace

LossBundle total_loss(LossBundle parts) {
  parts.total = parts.cf + parts.ui_inbatch + parts.uu_inbatch + parts.ui_noised +
                parts.uu_noised + parts.reg;
  parts.final_loss = parts.total + parts.kg;
  return parts;
}

NodeId bpr_loss(Tape& tape, NodeId positive_scores, NodeId negative_scores) {
  check_pairs(tape, positive_scores, negative_scores, "bpr_loss");
  return ad::sum(tape, ad::softplus(tape, ad::sub(tape, negative_scores, positive_scores)));
}

NodeId kg_loss(Tape& tape, NodeId valid_energy, NodeId corrupted_energy) {
  check_pairs(tape, valid_energy, corrupted_energy, "kg_loss");
  return ad::sum(tape, ad::softplus(tape, ad::sub(tape, valid_energy, corrupted_energy)));
}

NodeId inbatch_loss(Tape& tape, NodeId anchors, NodeId candidates,
                    std::span<const std::size_t> positive_of, const Tensor& weights,
                    double tau) {
  check_tau(tau);
  const Tensor& a = tape.value(anchors);
  const Tensor& c = tape.value(candidates);
  if (a.rank() != 2 || c.rank() != 2 || a.shape()[1] != c.shape()[1]) {
    throw ShapeError("inbatch_loss: anchors and candidates must be [n, d] with equal d");
  }
  const std::size_t rows = a.shape()[0], cols = c.shape()[0];
  if (positive_of.size() != rows || weights.shape() != Shape{rows, cols}) {
    throw ShapeError("inbatch_loss: positives or weights do not match the batch");
  }
  Tensor w = weights;
  for (std::size_t r = 0; r < rows; ++r) {
    if (positive_of[r] >= cols) throw std::out_of_range("inbatch_loss: positive column");
    w.at(r, positive_of[r]) = 1.0;
  }

  const NodeId an = ad::normalize_rows(tape, anchors);
  const NodeId cn = ad::normalize_rows(tape, candidates);
  const double inv_tau = 1.0 / tau;
  const NodeId logits = ad::scale(tape, ad::matmul_nt(tape, an, cn), inv_tau);
  const NodeId positive = ad::scale(
      tape,
      ad::row_dot(tape, an,
                  ad::gather_rows(tape, cn,
                                  std::vector<std::size_t>(positive_of.begin(),
                                                           positive_of.end()))),
      inv_tau);
  const NodeId lse = ad::logsumexp_rows(tape, logits, tape.constant(std::move(w)));
  return ad::mean(tape, ad::sub(tape, lse, positive));
}

NodeId noised_loss(Tape& tape, NodeId anchors, NodeId positives,
                   const std::optional<Tensor>& noise, double tau) {
  check_tau(tau);
  if (!noise) return tape.constant(Tensor::scalar(0.0));
  const Tensor& a = tape.value(anchors);
  if (a.rank() != 2 || a.shape() != tape.value(positives).shape() ||
      noise->rank() != 2 || noise->shape()[1] != a.shape()[1]) {
    throw ShapeError("noised_loss: anchors, positives and noise must share width");
  }
  const std::size_t rows = a.shape()[0], m = noise->shape()[0];
  const NodeId an = ad::normalize_rows(tape, anchors);
  const NodeId pn = ad::normalize_rows(tape, positives);
  const NodeId nn = ad::normalize_rows(tape, tape.constant(*noise));
  const double inv_tau = 1.0 / tau;
  const NodeId positive = ad::scale(tape, ad::row_dot(tape, an, pn), inv_tau);
  const NodeId negative = ad::scale(tape, ad::matmul_nt(tape, an, nn), inv_tau);
  const NodeId parts[] = {ad::reshape(tape, positive, {rows, 1}), negative};
  const NodeId logits = ad::concat(tape, parts);
  const NodeId lse = ad::logsumexp_rows(
      tape, logits, tape.constant(Tensor::filled({rows, m + 1}, 1.0)));
  return ad::mean(tape, ad::sub(tape, lse, positive));
}

}  // namespace kgrec
