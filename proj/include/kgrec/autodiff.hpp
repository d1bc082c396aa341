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
// Tape-based reverse-mode differentiation over dense tensors.
//
// A Tape records every operation applied during a forward pass. Nodes are
// appended in evaluation order, so each node only references earlier nodes
// and a single reverse sweep computes all adjoints. Tapes are cheap and are
// meant to be built for one mini-batch and then discarded.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "kgrec/tensor.hpp"

namespace kgrec {

enum class Op {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kMul,          // elementwise
  kMatvec,       // [m,n] x [n] -> [m]
  kMatmul,       // [m,n] x [n,p] -> [m,p]
  kMatmulNT,     // [m,n] x [p,n]^T -> [m,p]
  kTranspose,    // [m,n] -> [n,m]
  kDot,          // same shape -> scalar
  kScale,        // attr.scalar * x
  kSum,          // -> scalar
  kExp,
  kLog,
  kSigmoid,
  kTanh,
  kRelu,
  kSoftplus,     // log(1 + e^x)
  kL2NormSquared,
  kConcat,       // rank <= 1: flat concatenation; rank 2: along columns
  kMaskApply,    // x * mask, mask is never differentiated
  kGatherRows,   // first-axis gather by attr.indices
  kRowDot,       // [n,d] . [n,d] -> [n]
  kNormalizeRows,
  kAddBias,      // [n,d] + [d]
  kLogSumExpRows,    // log sum_c w[r,c] exp(x[r,c]); w is never differentiated
  kSparseAggregate,  // attr.sparse [n_out,n_in] x [n_in,d]
  kReshape,
};

std::string_view op_name(Op op);

// Compressed sparse rows with fixed values.
struct SparseRows {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;  // rows + 1 entries
  std::vector<std::size_t> columns;
  std::vector<double> values;
};

struct OpAttr {
  double scalar = 0.0;
  std::shared_ptr<const std::vector<std::size_t>> indices;
  std::shared_ptr<const SparseRows> sparse;
  Shape shape;
};

using NodeId = std::size_t;
using GradMap = std::map<NodeId, Tensor>;

class Tape {
 public:
  // A differentiable input; backward() reports a gradient for it.
  NodeId leaf(Tensor value);
  // A fixed input; never differentiated.
  NodeId constant(Tensor value);

  NodeId apply(Op op, std::span<const NodeId> inputs, OpAttr attr = {});
  NodeId apply(Op op, std::initializer_list<NodeId> inputs, OpAttr attr = {}) {
    return apply(op, std::span<const NodeId>(inputs.begin(), inputs.size()),
                 std::move(attr));
  }

  const Tensor& value(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeId>& leaves() const { return leaves_; }

  // Gradient of a scalar root with respect to every leaf. Leaves that do not
  // reach the root get zero tensors.
  GradMap backward(NodeId root) const;

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    OpAttr attr;
    Tensor value;
    bool needs_grad;
  };

  std::vector<Node> nodes_;
  std::vector<NodeId> leaves_;
};

// Thin wrappers so tape programs read like expressions.
namespace ad {

NodeId add(Tape& t, NodeId a, NodeId b);
NodeId sub(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId matvec(Tape& t, NodeId a, NodeId x);
NodeId matmul(Tape& t, NodeId a, NodeId b);
NodeId matmul_nt(Tape& t, NodeId a, NodeId b);
NodeId transpose(Tape& t, NodeId a);
NodeId dot(Tape& t, NodeId a, NodeId b);
NodeId scale(Tape& t, NodeId a, double factor);
NodeId sum(Tape& t, NodeId a);
NodeId mean(Tape& t, NodeId a);
NodeId exp(Tape& t, NodeId a);
NodeId log(Tape& t, NodeId a);
NodeId sigmoid(Tape& t, NodeId a);
NodeId tanh(Tape& t, NodeId a);
NodeId relu(Tape& t, NodeId a);
NodeId softplus(Tape& t, NodeId a);
NodeId l2_norm_squared(Tape& t, NodeId a);
NodeId concat(Tape& t, std::span<const NodeId> parts);
NodeId mask_apply(Tape& t, NodeId x, NodeId mask);
NodeId gather_rows(Tape& t, NodeId x, std::vector<std::size_t> indices);
NodeId row_dot(Tape& t, NodeId a, NodeId b);
NodeId normalize_rows(Tape& t, NodeId x);
NodeId add_bias(Tape& t, NodeId x, NodeId bias);
NodeId logsumexp_rows(Tape& t, NodeId x, NodeId weights);
NodeId sparse_aggregate(Tape& t, std::shared_ptr<const SparseRows> a,
                        NodeId x);
NodeId reshape(Tape& t, NodeId x, Shape shape);

}  // namespace ad

// A function from leaf node ids to a scalar node, replayable on fresh tapes.
using ScalarProgram =
    std::function<NodeId(Tape&, std::span<const NodeId> leaves)>;

// Evaluates the program once at `leaves`.
double evaluate_program(const ScalarProgram& program,
                        const std::vector<Tensor>& leaves);

// Compares backward() against central differences at every leaf coordinate.
// Returns max |analytic - numeric| / max(1, |analytic|).
double fd_check(const ScalarProgram& program, const std::vector<Tensor>& leaves,
                double step);

}  // namespace kgrec
