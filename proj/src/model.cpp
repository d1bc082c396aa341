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

#include "kgrec/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace kgrec {

namespace {

constexpr std::string_view kCheckpointMagic = "KGREC-CHECKPOINT";
constexpr int kCheckpointVersion = 1;

Tensor xavier(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

void check_node(const Tensor& table, std::uint32_t node) {
  if (node >= table.rows()) {
    throw std::out_of_range("node " + std::to_string(node) + " out of " +
                            std::to_string(table.rows()));
  }
}

// y = W x for W stored row-major as [rows, cols].
std::vector<double> apply_matrix(std::span<const double> w, std::size_t rows,
                                 std::size_t cols, std::span<const double> x) {
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(w.subspan(r * cols, cols), x);
  return y;
}

void write_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  out.write(bytes, 8);
}

double read_le(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw std::runtime_error("checkpoint: truncated payload");
  }
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[b]} << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string_view activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out{&node_embedding, &relation_embedding, &relation_projection};
  for (auto& t : aggregator_weight) out.push_back(&t);
  for (auto& t : aggregator_bias) out.push_back(&t);
  for (auto& t : head_weight) out.push_back(&t);
  for (auto& t : head_bias) out.push_back(&t);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  auto mutable_view = const_cast<ModelParams*>(this)->tensors();
  return {mutable_view.begin(), mutable_view.end()};
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> names{"node_embedding", "relation_embedding",
                                 "relation_projection"};
  for (std::size_t i = 0; i < aggregator_weight.size(); ++i)
    names.push_back("aggregator_weight." + std::to_string(i));
  for (std::size_t i = 0; i < aggregator_bias.size(); ++i)
    names.push_back("aggregator_bias." + std::to_string(i));
  for (std::size_t i = 0; i < head_weight.size(); ++i)
    names.push_back("head_weight." + std::to_string(i));
  for (std::size_t i = 0; i < head_bias.size(); ++i)
    names.push_back("head_bias." + std::to_string(i));
  return names;
}

ModelDims dims_for(const CollaborativeKG& ckg, std::size_t dim,
                   std::size_t relation_dim, std::size_t hops,
                   std::size_t head_depth, Activation head_activation) {
  return {ckg.num_nodes(), ckg.num_directed_relations(), dim, relation_dim,
          hops, head_depth, head_activation};
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  if (dims.dim == 0 || dims.relation_dim == 0 || dims.num_nodes == 0 ||
      dims.num_relations == 0) {
    throw std::invalid_argument("init_params: dimensions must be positive");
  }
  Rng rng = make_rng(seed, 0x1417);
  const std::size_t d = dims.dim, k = dims.relation_dim;
  ModelParams p;
  p.dims = dims;
  p.node_embedding = gaussian({dims.num_nodes, d}, 0.1, rng);
  p.relation_embedding = gaussian({dims.num_relations, k}, 0.1, rng);
  p.relation_projection = xavier({dims.num_relations, k, d}, d, k, rng);
  for (std::size_t l = 0; l < dims.hops; ++l) {
    p.aggregator_weight.push_back(xavier({d, d}, d, d, rng));
    p.aggregator_bias.push_back(Tensor::zeros({d}));
  }
  for (std::size_t l = 0; l < dims.head_depth; ++l) {
    p.head_weight.push_back(xavier({d, d}, d, d, rng));
    p.head_bias.push_back(Tensor::zeros({d}));
  }
  return p;
}

std::vector<NodeId> ParamNodes::all() const {
  std::vector<NodeId> out{node_embedding, relation_embedding, relation_projection};
  out.insert(out.end(), aggregator_weight.begin(), aggregator_weight.end());
  out.insert(out.end(), aggregator_bias.begin(), aggregator_bias.end());
  out.insert(out.end(), head_weight.begin(), head_weight.end());
  out.insert(out.end(), head_bias.begin(), head_bias.end());
  return out;
}

ParamNodes bind_params(Tape& tape, const ModelParams& params, bool trainable) {
  auto bind = [&](const Tensor& t) {
    return trainable ? tape.leaf(t) : tape.constant(t);
  };
  ParamNodes n;
  n.node_embedding = bind(params.node_embedding);
  n.relation_embedding = bind(params.relation_embedding);
  n.relation_projection = bind(params.relation_projection);
  for (const auto& t : params.aggregator_weight) n.aggregator_weight.push_back(bind(t));
  for (const auto& t : params.aggregator_bias) n.aggregator_bias.push_back(bind(t));
  for (const auto& t : params.head_weight) n.head_weight.push_back(bind(t));
  for (const auto& t : params.head_bias) n.head_bias.push_back(bind(t));
  return n;
}

std::vector<Tensor> collect_grads(const GradMap& grads, const ParamNodes& nodes) {
  std::vector<Tensor> out;
  for (NodeId id : nodes.all()) out.push_back(grads.at(id));
  return out;
}

PropagationPlan plan_propagation(const ModelParams& params, const CollaborativeKG& ckg,
                                 std::size_t max_fanout, std::uint64_t seed) {
  const std::size_t n = ckg.num_nodes();
  const std::size_t d = params.dims.dim, k = params.dims.relation_dim;
  if (params.node_embedding.rows() != n) {
    throw std::invalid_argument("plan_propagation: parameters do not match graph");
  }
  auto plan_rows = std::make_shared<SparseRows>();
  SparseRows& a = *plan_rows;
  a.rows = n;
  a.cols = n;
  a.offsets.push_back(0);
  PropagationPlan plan;
  plan.has_neighbors.assign(n, 0);

  std::vector<double> scores;
  for (std::uint32_t h = 0; h < n; ++h) {
    const auto sampled = neighbors(ckg, h, max_fanout, seed);
    scores.clear();
    for (const auto& edge : sampled) {
      auto w = params.relation_projection.row(edge.relation);
      auto wh = apply_matrix(w, k, d, params.node_embedding.row(h));
      auto wt = apply_matrix(w, k, d, params.node_embedding.row(edge.neighbor));
      auto er = params.relation_embedding.row(edge.relation);
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += wt[c] * std::tanh(wh[c] + er[c]);
      scores.push_back(s);
    }
    if (!sampled.empty()) {
      plan.has_neighbors[h] = 1;
      const double top = *std::max_element(scores.begin(), scores.end());
      double z = 0.0;
      for (double& s : scores) z += (s = std::exp(s - top));
      for (std::size_t e = 0; e < sampled.size(); ++e) {
        a.columns.push_back(sampled[e].neighbor);
        a.values.push_back(scores[e] / z);
      }
    }
    a.offsets.push_back(a.columns.size());
  }
  plan.attention = std::move(plan_rows);
  return plan;
}

NodeId propagate(Tape& tape, const ParamNodes& params, const PropagationPlan& plan,
                 std::size_t hops) {
  NodeId h = params.node_embedding;
  if (hops == 0) return h;
  if (params.aggregator_weight.size() < hops) {
    throw std::invalid_argument("propagate: model has fewer aggregator layers than hops");
  }
  const Tensor& table = tape.value(h);
  const std::size_t n = table.rows(), d = table.row_size();
  const bool all_connected = std::all_of(plan.has_neighbors.begin(),
                                         plan.has_neighbors.end(),
                                         [](char c) { return c != 0; });
  NodeId keep = 0, pass = 0;
  if (!all_connected) {
    std::vector<double> keep_v(n * d), pass_v(n * d);
    for (std::size_t r = 0; r < n; ++r) {
      const double on = plan.has_neighbors[r] ? 1.0 : 0.0;
      std::fill_n(keep_v.begin() + r * d, d, on);
      std::fill_n(pass_v.begin() + r * d, d, 1.0 - on);
    }
    keep = tape.constant(Tensor({n, d}, std::move(keep_v)));
    pass = tape.constant(Tensor({n, d}, std::move(pass_v)));
  }

  NodeId total = h;
  for (std::size_t l = 0; l < hops; ++l) {
    const NodeId message = ad::sparse_aggregate(tape, plan.attention, h);
    const NodeId mixed = ad::matmul(tape, ad::add(tape, h, message),
                                    params.aggregator_weight[l]);
    NodeId next = ad::tanh(tape, ad::add_bias(tape, mixed, params.aggregator_bias[l]));
    if (!all_connected) {
      next = ad::add(tape, ad::mask_apply(tape, next, keep), ad::mask_apply(tape, h, pass));
    }
    h = next;
    total = ad::add(tape, total, h);
  }
  return ad::scale(tape, total, 1.0 / static_cast<double>(hops + 1));
}

Tensor propagate(const ModelParams& params, const CollaborativeKG& ckg,
                 std::size_t hops, std::size_t max_fanout, std::uint64_t seed) {
  if (hops == 0) return params.node_embedding;
  const PropagationPlan plan = plan_propagation(params, ckg, max_fanout, seed);
  Tape tape;
  const ParamNodes nodes = bind_params(tape, params, false);
  return tape.value(propagate(tape, nodes, plan, hops));
}

Tensor compute_representations(const ModelParams& params, const CollaborativeKG& ckg,
                               const PropagationSettings& settings) {
  return propagate(params, ckg, settings.hops, settings.max_fanout, settings.seed);
}

double score_cf(const Tensor& representations, std::uint32_t user_node,
                std::uint32_t item_node) {
  check_node(representations, user_node);
  check_node(representations, item_node);
  return dot(representations.row(user_node), representations.row(item_node));
}

double transr_energy(const ModelParams& params, std::uint32_t head_node,
                     std::uint32_t relation, std::uint32_t tail_node) {
  check_node(params.node_embedding, head_node);
  check_node(params.node_embedding, tail_node);
  if (relation >= params.relation_embedding.rows()) {
    throw std::out_of_range("relation " + std::to_string(relation) + " out of range");
  }
  const std::size_t d = params.dims.dim, k = params.dims.relation_dim;
  auto w = params.relation_projection.row(relation);
  auto wh = apply_matrix(w, k, d, params.node_embedding.row(head_node));
  auto wt = apply_matrix(w, k, d, params.node_embedding.row(tail_node));
  auto er = params.relation_embedding.row(relation);
  double g = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double diff = wh[c] + er[c] - wt[c];
    g += diff * diff;
  }
  return g;
}

NodeId transr_energies(Tape& tape, const ParamNodes& params, std::uint32_t relation,
                       std::vector<std::size_t> heads, std::vector<std::size_t> tails) {
  if (heads.size() != tails.size() || heads.empty()) {
    throw ShapeError("transr_energies: heads and tails must be equal, non-empty lists");
  }
  const Tensor& projection = tape.value(params.relation_projection);
  const std::size_t k = projection.shape()[1], d = projection.shape()[2];
  const NodeId eh = ad::gather_rows(tape, params.node_embedding, std::move(heads));
  const NodeId et = ad::gather_rows(tape, params.node_embedding, std::move(tails));
  const NodeId w = ad::reshape(
      tape, ad::gather_rows(tape, params.relation_projection, {relation}), {k, d});
  const NodeId er = ad::reshape(
      tape, ad::gather_rows(tape, params.relation_embedding, {relation}), {k});
  // W_r e_h + e_r - W_r e_t == W_r (e_h - e_t) + e_r
  const NodeId projected = ad::matmul_nt(tape, ad::sub(tape, eh, et), w);
  const NodeId y = ad::add_bias(tape, projected, er);
  return ad::row_dot(tape, y, y);
}

NodeId project_head(Tape& tape, const ParamNodes& params, NodeId x,
                    Activation activation) {
  for (std::size_t l = 0; l < params.head_weight.size(); ++l) {
    const NodeId affine = ad::add_bias(tape, ad::matmul(tape, x, params.head_weight[l]),
                                       params.head_bias[l]);
    x = activation == Activation::kTanh ? ad::tanh(tape, affine) : ad::relu(tape, affine);
  }
  return x;
}

Tensor project_head(const ModelParams& params, const Tensor& e) {
  if (params.head_weight.empty()) return e;
  Tape tape;
  const ParamNodes nodes = bind_params(tape, params, false);
  const NodeId x = tape.constant(Tensor({1, e.size()}, e.values()));
  const Tensor& z = tape.value(project_head(tape, nodes, x, params.dims.head_activation));
  return Tensor(e.shape(), z.values());
}

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  }
  Tensor mask = Tensor::filled(shape, 1.0);
  if (rate == 0.0) return mask;
  const double kept = 1.0 / (1.0 - rate);
  std::bernoulli_distribution drop(rate);
  for (double& m : mask.data()) m = drop(rng) ? 0.0 : kept;
  return mask;
}

std::pair<Tensor, Tensor> two_views(const ModelParams& params,
                                    const Tensor& representations,
                                    std::uint32_t node, double dropout_rate,
                                    std::uint64_t seed) {
  check_node(representations, node);
  Rng rng = make_rng(seed, node);
  auto row = representations.row(node);
  const Shape shape{row.size()};
  auto view = [&]() {
    const Tensor mask = dropout_mask(shape, dropout_rate, rng);
    std::vector<double> v(row.size());
    for (std::size_t c = 0; c < v.size(); ++c) v[c] = row[c] * mask[c];
    return project_head(params, Tensor(shape, std::move(v)));
  };
  Tensor first = view();
  Tensor second = view();
  return {std::move(first), std::move(second)};
}

double sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("sim: vectors differ in length");
  const double na = std::sqrt(squared_norm(a)), nb = std::sqrt(squared_norm(b));
  if (na == 0.0 || nb == 0.0) throw std::domain_error("sim: zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

ComplementaryModel::ComplementaryModel(const ModelParams& params, double momentum)
    : embedding_(params.node_embedding), momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw std::invalid_argument("EMA momentum must be in [0, 1]");
  }
}

void ComplementaryModel::update(const ModelParams& params) {
  const Tensor& current = params.node_embedding;
  if (current.shape() != embedding_.shape()) {
    throw ShapeError("complementary model shape mismatch");
  }
  auto dst = embedding_.data();
  auto src = current.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = momentum_ * dst[i] + (1.0 - momentum_) * src[i];
  }
}

double complementary_sim(const ComplementaryModel& model, std::uint32_t node_a,
                         std::uint32_t node_b) {
  check_node(model.embedding(), node_a);
  check_node(model.embedding(), node_b);
  return sim(model.embedding().row(node_a), model.embedding().row(node_b));
}

void save_checkpoint(std::ostream& out, const ModelParams& params) {
  const ModelDims& d = params.dims;
  out << kCheckpointMagic << '\n'
      << "version " << kCheckpointVersion << '\n'
      << "nodes " << d.num_nodes << '\n'
      << "relations " << d.num_relations << '\n'
      << "dim " << d.dim << '\n'
      << "relation_dim " << d.relation_dim << '\n'
      << "hops " << d.hops << '\n'
      << "head_depth " << d.head_depth << '\n'
      << "head_activation " << activation_name(d.head_activation) << '\n';
  const auto tensors = params.tensors();
  const auto names = params.tensor_names();
  out << "tensors " << tensors.size() << '\n';
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    out << "tensor " << names[i] << ' ' << tensors[i]->rank();
    for (std::size_t dim : tensors[i]->shape()) out << ' ' << dim;
    out << '\n';
  }
  out << "end\n";
  for (const Tensor* t : tensors) {
    for (double v : t->data()) write_le(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

ModelParams load_checkpoint(std::istream& in) {
  auto expect_line = [&](std::string_view key) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated header");
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word != key) {
      throw std::runtime_error("checkpoint: expected '" + std::string(key) + "', got '" +
                               word + "'");
    }
    std::string rest;
    std::getline(ls >> std::ws, rest);
    return rest;
  };
  auto as_size = [](const std::string& s) -> std::size_t {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::runtime_error("checkpoint: bad integer '" + s + "'");
    return static_cast<std::size_t>(v);
  };

  std::string magic;
  if (!std::getline(in, magic) || magic != kCheckpointMagic) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  if (as_size(expect_line("version")) != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version");
  }
  ModelDims dims;
  dims.num_nodes = as_size(expect_line("nodes"));
  dims.num_relations = as_size(expect_line("relations"));
  dims.dim = as_size(expect_line("dim"));
  dims.relation_dim = as_size(expect_line("relation_dim"));
  dims.hops = as_size(expect_line("hops"));
  dims.head_depth = as_size(expect_line("head_depth"));
  dims.head_activation = parse_activation(expect_line("head_activation"));

  ModelParams params = init_params(dims, 0);
  const auto tensors = params.tensors();
  const auto names = params.tensor_names();
  if (as_size(expect_line("tensors")) != tensors.size()) {
    throw std::runtime_error("checkpoint: tensor count does not match dims");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    std::istringstream ls(expect_line("tensor"));
    std::string name;
    std::size_t rank = 0;
    ls >> name >> rank;
    Shape shape(rank);
    for (auto& s : shape) ls >> s;
    if (!ls || name != names[i] || shape != tensors[i]->shape()) {
      throw std::runtime_error("checkpoint: unexpected tensor entry for " + names[i]);
    }
  }
  expect_line("end");
  for (Tensor* t : tensors) {
    std::vector<double> v(t->size());
    for (double& x : v) x = read_le(in);
    *t = Tensor(t->shape(), std::move(v));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace kgrec
