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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kgrec/autodiff.hpp"
#include "kgrec/ckg.hpp"
#include "kgrec/random.hpp"
#include "kgrec/tensor.hpp"

namespace kgrec {

enum class Activation { kTanh, kRelu };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct ModelDims {
  std::size_t num_nodes = 0;
  std::size_t num_relations = 0;  // directed relation ids, inverses included
  std::size_t dim = 64;           // node embedding size
  std::size_t relation_dim = 64;  // relation space size
  std::size_t hops = 2;
  std::size_t head_depth = 2;
  Activation head_activation = Activation::kTanh;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Every trainable parameter.
struct ModelParams {
  ModelDims dims;
  Tensor node_embedding;              // [nodes, dim]
  Tensor relation_embedding;          // [relations, relation_dim]
  Tensor relation_projection;         // [relations, relation_dim, dim]
  std::vector<Tensor> aggregator_weight;  // hops x [dim, dim]
  std::vector<Tensor> aggregator_bias;    // hops x [dim]
  std::vector<Tensor> head_weight;        // head_depth x [dim, dim]
  std::vector<Tensor> head_bias;          // head_depth x [dim]

  // Declared order; shared by the optimizer and the checkpoint format.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

ModelDims dims_for(const CollaborativeKG& ckg, std::size_t dim,
                   std::size_t relation_dim, std::size_t hops,
                   std::size_t head_depth, Activation head_activation);

// Embeddings ~ N(0, 0.1^2); matrices Xavier-uniform; biases zero.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

// Tape handles for every parameter tensor, in declared order.
struct ParamNodes {
  NodeId node_embedding;
  NodeId relation_embedding;
  NodeId relation_projection;
  std::vector<NodeId> aggregator_weight;
  std::vector<NodeId> aggregator_bias;
  std::vector<NodeId> head_weight;
  std::vector<NodeId> head_bias;

  std::vector<NodeId> all() const;
};

// Records parameters on the tape as leaves (trainable) or constants.
ParamNodes bind_params(Tape& tape, const ModelParams& params, bool trainable);

// Gradients in ModelParams::tensors() order.
std::vector<Tensor> collect_grads(const GradMap& grads, const ParamNodes& nodes);

// Sampled neighbourhoods with fixed attention weights for one propagation.
// Rows of `attention` sum to one for nodes with at least one neighbour.
struct PropagationPlan {
  std::shared_ptr<const SparseRows> attention;
  std::vector<char> has_neighbors;
};

struct PropagationSettings {
  std::size_t hops = 2;
  std::size_t max_fanout = 8;
  std::uint64_t seed = 0;
};

// Attention over a sampled neighbourhood of node h:
//   pi(h, r, t) = (W_r e_t)^T tanh(W_r e_h + e_r), softmax over the sample.
PropagationPlan plan_propagation(const ModelParams& params,
                                 const CollaborativeKG& ckg,
                                 std::size_t max_fanout, std::uint64_t seed);

// Layer l: H_{l+1} = tanh((H_l + A H_l) W_l + b_l) for nodes with neighbours,
// H_{l+1} = H_l otherwise. Output is the mean of H_0 .. H_hops.
NodeId propagate(Tape& tape, const ParamNodes& params, const PropagationPlan& plan,
                 std::size_t hops);

// Forward-only propagation; hops == 0 returns the embedding table.
Tensor propagate(const ModelParams& params, const CollaborativeKG& ckg,
                 std::size_t hops, std::size_t max_fanout, std::uint64_t seed);
Tensor compute_representations(const ModelParams& params, const CollaborativeKG& ckg,
                               const PropagationSettings& settings);

// Inner product of the two nodes' representations.
double score_cf(const Tensor& representations, std::uint32_t user_node,
                std::uint32_t item_node);

// || W_r e_h + e_r - W_r e_t ||^2 on raw node embeddings.
double transr_energy(const ModelParams& params, std::uint32_t head_node,
                     std::uint32_t relation, std::uint32_t tail_node);
// Energies of (heads[k], relation, tails[k]); result is [n].
NodeId transr_energies(Tape& tape, const ParamNodes& params, std::uint32_t relation,
                       std::vector<std::size_t> heads, std::vector<std::size_t> tails);

// Applies the projection head to every row of x ([n, dim]).
NodeId project_head(Tape& tape, const ParamNodes& params, NodeId x,
                    Activation activation);
Tensor project_head(const ModelParams& params, const Tensor& e);

// Entries are 0 with probability `rate`, else 1 / (1 - rate).
Tensor dropout_mask(const Shape& shape, double rate, Rng& rng);

// Two dropout views of a node's representation, each passed through the head.
std::pair<Tensor, Tensor> two_views(const ModelParams& params,
                                    const Tensor& representations,
                                    std::uint32_t node, double dropout_rate,
                                    std::uint64_t seed);

// Cosine similarity; throws std::domain_error on a zero vector.
double sim(std::span<const double> a, std::span<const double> b);

// Slow-moving copy of the node embeddings used to judge negatives.
class ComplementaryModel {
 public:
  ComplementaryModel(const ModelParams& params, double momentum);

  // embedding <- momentum * embedding + (1 - momentum) * current
  void update(const ModelParams& params);
  const Tensor& embedding() const { return embedding_; }
  double momentum() const { return momentum_; }

 private:
  Tensor embedding_;
  double momentum_;
};

double complementary_sim(const ComplementaryModel& model, std::uint32_t node_a,
                         std::uint32_t node_b);

// Text header followed by little-endian float64 payloads in declared order.
void save_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams load_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace kgrec
