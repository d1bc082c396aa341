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

#include "kgrec/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <utility>

#include "kgrec/eval.hpp"
#include "kgrec/random.hpp"

namespace kgrec {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;

// Seed streams.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kEpochStream = 2;
constexpr std::uint64_t kEvalStream = 3;

// Runs `build` and reports a domain error as divergence of `term`.
template <typename F>
NodeId guarded(const char* term, F&& build) {
  try {
    return build();
  } catch (const std::domain_error& e) {
    throw DivergenceError(0, term, e.what());
  }
}

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw std::invalid_argument(std::string(field) + " " + rule);
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate", "must be > 0");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(dim >= 1, "dim", "must be >= 1");
  require(relation_dim >= 1, "relation_dim", "must be >= 1");
  require(max_fanout >= 1, "max_fanout", "must be >= 1");
  require(tau > 0.0 && std::isfinite(tau), "tau", "must be in (0, inf)");
  require(!std::isnan(phi), "phi", "must be a number");
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda", "must be >= 0");
  require(noise_count == 0 || noise_scale > 0.0, "noise_scale", "must be > 0 when noise_count > 0");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate", "must be in [0, 1)");
  require(ema_momentum >= 0.0 && ema_momentum <= 1.0, "ema_momentum", "must be in [0, 1]");
  require(patience >= 1, "patience", "must be >= 1");
  require(max_epochs >= 1, "max_epochs", "must be >= 1");
  require(top_k >= 1, "top_k", "must be >= 1");
  require(clip_norm > 0.0, "clip_norm", "must be > 0");
  require(threads >= 1, "threads", "must be >= 1");
}

DivergenceError::DivergenceError(std::size_t epoch, std::string term, std::string detail)
    : std::runtime_error("non-finite " + term + " at epoch " + std::to_string(epoch) +
                         ": " + detail),
      epoch_(epoch),
      term_(std::move(term)),
      detail_(std::move(detail)) {}

AdamState::AdamState(std::span<const Tensor* const> params, std::vector<char> sparse_rows)
    : sparse_(std::move(sparse_rows)) {
  if (sparse_.size() != params.size()) {
    throw std::invalid_argument("AdamState: one sparse flag per tensor required");
  }
  for (const Tensor* p : params) {
    m_.push_back(Tensor::zeros(p->shape()));
    v_.push_back(Tensor::zeros(p->shape()));
  }
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
               AdamState& state, double lr) {
  if (params.size() != state.m_.size() || grads.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k].shape() || params[k]->shape() != state.m_[k].shape()) {
      throw ShapeError("adam_step: tensor " + std::to_string(k) + " has shape " +
                       shape_string(params[k]->shape()) + " but gradient " +
                       shape_string(grads[k].shape()));
    }
  }
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double c1 = 1.0 - std::pow(kBeta1, t);
  const double c2 = 1.0 - std::pow(kBeta2, t);
  auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m,
                    std::span<double> v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEpsilon);
    }
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto g = grads[k].data();
    auto m = state.m_[k].data();
    auto v = state.v_[k].data();
    if (!state.sparse_[k]) {
      update(p, g, m, v);
      continue;
    }
    const std::size_t width = params[k]->row_size();
    for (std::size_t start = 0; start < p.size(); start += width) {
      auto gr = g.subspan(start, width);
      if (std::all_of(gr.begin(), gr.end(), [](double x) { return x == 0.0; })) continue;
      update(p.subspan(start, width), gr, m.subspan(start, width), v.subspan(start, width));
    }
  }
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += squared_norm(g.data());
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g.data()) x *= f;
    }
  }
  return norm;
}

bool early_stop(const TrainHistory& history, std::size_t patience) {
  if (history.epochs.empty()) throw std::invalid_argument("early_stop: empty history");
  const auto& latest = history.epochs.back();
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& rec : history.epochs) {
    if (rec.valid_recall > best) {
      best = rec.valid_recall;
      best_epoch = rec.epoch;
    }
  }
  return latest.epoch - best_epoch >= patience;
}

PhaseATerms phase_a_objective(Tape& tape, const ParamNodes& params,
                              const PropagationPlan& plan, const CollaborativeKG& ckg,
                              std::span<const BprTriple> batch,
                              const ContrastiveBatch& contrastive,
                              const TrainConfig& config) {
  if (batch.empty()) throw std::invalid_argument("phase_a_objective: empty batch");
  PhaseATerms t{};
  std::vector<std::size_t> users, items, negatives;
  for (const auto& row : batch) {
    users.push_back(ckg.user_node(row.user));
    items.push_back(ckg.item_node(row.positive));
    negatives.push_back(ckg.item_node(row.negative));
  }
  const NodeId reps =
      guarded("propagation", [&] { return propagate(tape, params, plan, config.hops); });
  const NodeId u = ad::gather_rows(tape, reps, users);
  const NodeId i = ad::gather_rows(tape, reps, items);
  const NodeId j = ad::gather_rows(tape, reps, negatives);
  t.cf = guarded("cf", [&] {
    return bpr_loss(tape, ad::row_dot(tape, u, i), ad::row_dot(tape, u, j));
  });

  const NodeId zero = tape.constant(Tensor::scalar(0.0));
  t.ui_inbatch = t.uu_inbatch = t.ui_noised = t.uu_noised = zero;
  const auto& sets = contrastive.sets;
  const Activation act = config.head_activation;
  if (config.use_ui) {
    std::vector<std::size_t> pool;
    for (auto item : sets.item_pool) pool.push_back(ckg.item_node(item));
    const NodeId anchors = project_head(tape, params, u, act);
    const NodeId candidates =
        project_head(tape, params, ad::gather_rows(tape, reps, std::move(pool)), act);
    t.ui_inbatch = guarded("ui_inbatch", [&] {
      return inbatch_loss(tape, anchors, candidates, sets.positive_col,
                          contrastive.ui_weights, config.tau);
    });
    t.ui_noised = guarded("ui_noised", [&] {
      const NodeId positives = ad::gather_rows(tape, candidates, sets.positive_col);
      return noised_loss(tape, anchors, positives, contrastive.item_noise, config.tau);
    });
  }
  if (config.use_uu) {
    std::vector<std::size_t> pool;
    for (auto user : sets.user_pool) pool.push_back(ckg.user_node(user));
    const NodeId p = ad::gather_rows(tape, reps, std::move(pool));
    const NodeId view_a = project_head(
        tape, params, ad::mask_apply(tape, p, tape.constant(contrastive.view_mask_a)), act);
    const NodeId view_b = project_head(
        tape, params, ad::mask_apply(tape, p, tape.constant(contrastive.view_mask_b)), act);
    std::vector<std::size_t> diagonal(sets.user_pool.size());
    std::iota(diagonal.begin(), diagonal.end(), std::size_t{0});
    t.uu_inbatch = guarded("uu_inbatch", [&] {
      return inbatch_loss(tape, view_a, view_b, diagonal, contrastive.uu_weights, config.tau);
    });
    t.uu_noised = guarded("uu_noised", [&] {
      return noised_loss(tape, view_a, view_b, contrastive.user_noise, config.tau);
    });
  }

  t.reg = zero;
  if (config.lambda > 0.0) {
    t.reg = guarded("reg", [&] {
      NodeId sq = ad::add(
          tape, ad::l2_norm_squared(tape, ad::gather_rows(tape, params.node_embedding, users)),
          ad::l2_norm_squared(tape, ad::gather_rows(tape, params.node_embedding, items)));
      sq = ad::add(tape, sq,
                   ad::l2_norm_squared(tape,
                                       ad::gather_rows(tape, params.node_embedding, negatives)));
      std::vector<NodeId> dense;
      for (std::size_t l = 0; l < config.hops; ++l) {
        dense.push_back(params.aggregator_weight[l]);
        dense.push_back(params.aggregator_bias[l]);
      }
      if (config.use_ui || config.use_uu) {
        dense.insert(dense.end(), params.head_weight.begin(), params.head_weight.end());
        dense.insert(dense.end(), params.head_bias.begin(), params.head_bias.end());
      }
      for (NodeId x : dense) sq = ad::add(tape, sq, ad::l2_norm_squared(tape, x));
      return ad::scale(tape, sq, config.lambda);
    });
  }

  t.total = guarded("total", [&] {
    NodeId total = t.cf;
    for (NodeId x : {t.ui_inbatch, t.uu_inbatch, t.ui_noised, t.uu_noised, t.reg}) {
      total = ad::add(tape, total, x);
    }
    return total;
  });
  return t;
}

NodeId phase_b_objective(Tape& tape, const ParamNodes& params, const CollaborativeKG& ckg,
                         std::span<const CorruptedTriple> batch) {
  if (batch.empty()) throw std::invalid_argument("phase_b_objective: empty batch");
  std::map<std::uint32_t, std::vector<std::size_t>> by_relation;
  for (std::size_t k = 0; k < batch.size(); ++k) by_relation[batch[k].relation].push_back(k);
  std::optional<NodeId> total;
  for (const auto& [relation, rows] : by_relation) {
    std::vector<std::size_t> heads, tails, corrupted;
    for (std::size_t k : rows) {
      heads.push_back(ckg.entity_node(batch[k].head));
      tails.push_back(ckg.entity_node(batch[k].tail));
      corrupted.push_back(ckg.entity_node(batch[k].corrupted_tail));
    }
    const std::uint32_t r = relation + 1;  // KG relation -> CKG relation
    const NodeId valid = transr_energies(tape, params, r, heads, tails);
    const NodeId negative = transr_energies(tape, params, r, heads, corrupted);
    const NodeId loss = kg_loss(tape, valid, negative);
    total = total ? ad::add(tape, *total, loss) : loss;
  }
  return *total;
}

ModelParams initial_params(const TrainConfig& config, const CollaborativeKG& ckg) {
  const ModelDims dims = dims_for(ckg, config.dim, config.relation_dim, config.hops,
                                  config.head_depth, config.head_activation);
  return init_params(dims, derive_seed(config.seed, kInitStream));
}

PropagationSettings eval_propagation(const TrainConfig& config) {
  return {config.hops, config.max_fanout, derive_seed(config.seed, kEvalStream)};
}

namespace {

struct Trainer {
  const TrainConfig& config;
  const InteractionDataset& dataset;
  const CollaborativeKG& ckg;
  ModelParams params;
  ComplementaryModel complementary;
  std::vector<Tensor*> all_tensors;
  std::vector<Tensor*> kg_tensors;
  AdamState adam_a;
  AdamState adam_b;
  std::optional<TripleIndex> known;

  Trainer(const TrainConfig& c, const InteractionDataset& d, const CollaborativeKG& g)
      : config(c),
        dataset(d),
        ckg(g),
        params(initial_params(c, g)),
        complementary(params, c.ema_momentum),
        all_tensors(params.tensors()),
        kg_tensors{&params.node_embedding, &params.relation_embedding,
                   &params.relation_projection},
        adam_a(as_const(all_tensors), table_flags(all_tensors.size())),
        adam_b(as_const(kg_tensors), {1, 1, 1}) {}

  static std::vector<const Tensor*> as_const(const std::vector<Tensor*>& v) {
    return {v.begin(), v.end()};
  }
  static std::vector<char> table_flags(std::size_t n) {
    std::vector<char> flags(n, 0);
    flags[0] = flags[1] = flags[2] = 1;  // node, relation, projection tables
    return flags;
  }

  static GradMap gradients(const Tape& tape, NodeId root, std::size_t epoch) {
    try {
      return tape.backward(root);
    } catch (const std::domain_error& e) {
      throw DivergenceError(epoch, "gradient", e.what());
    }
  }

  LossBundle phase_a(std::size_t epoch, std::uint64_t epoch_seed) {
    const PropagationPlan plan =
        plan_propagation(params, ckg, config.max_fanout, derive_seed(epoch_seed, 0));
    Rng rng = make_rng(epoch_seed, 1);
    const auto batches =
        shuffled_batches(std::span<const Interaction>(ckg.interactions()), config.batch_size, rng);
    const ContrastiveOptions options{config.phi, config.noise_count, config.noise_scale,
                                     config.dropout_rate};
    const bool contrastive = config.use_ui || config.use_uu;
    LossBundle sum;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<BprTriple> rows;
      rows.reserve(batches[b].size());
      for (const auto& x : batches[b]) {
        rows.push_back({x.user, x.item, sample_negative_item(dataset, x.user, rng)});
      }
      ContrastiveBatch cb;
      if (contrastive) {
        cb = make_contrastive_batch(rows, ckg, complementary, options,
                                    derive_seed(epoch_seed, 1000 + b));
      }
      Tape tape;
      const ParamNodes nodes = bind_params(tape, params, true);
      PhaseATerms terms;
      try {
        terms = phase_a_objective(tape, nodes, plan, ckg, rows, cb, config);
      } catch (const DivergenceError& e) {
        throw DivergenceError(epoch, e.term(), e.detail());
      }
      sum.cf += tape.value(terms.cf).item();
      sum.ui_inbatch += tape.value(terms.ui_inbatch).item();
      sum.uu_inbatch += tape.value(terms.uu_inbatch).item();
      sum.ui_noised += tape.value(terms.ui_noised).item();
      sum.uu_noised += tape.value(terms.uu_noised).item();
      sum.reg += tape.value(terms.reg).item();

      std::vector<Tensor> grads = collect_grads(gradients(tape, terms.total, epoch), nodes);
      clip_global_norm(grads, config.clip_norm);
      adam_step(all_tensors, grads, adam_a, config.learning_rate);
      complementary.update(params);
    }
    const double n = static_cast<double>(batches.size());
    for (double* x : {&sum.cf, &sum.ui_inbatch, &sum.uu_inbatch, &sum.ui_noised,
                      &sum.uu_noised, &sum.reg}) {
      *x /= n;
    }
    return sum;
  }

  double phase_b(std::size_t epoch, std::uint64_t epoch_seed) {
    const auto& triples = ckg.triples();
    if (!config.use_kg || triples.empty()) return 0.0;
    if (!known) known.emplace(triples);
    Rng rng = make_rng(epoch_seed, 2);
    const auto batches =
        shuffled_batches(std::span<const Triple>(triples), config.batch_size, rng);
    double sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto quads = corrupt_triples(*known, ckg.num_entities(), batches[b],
                                         derive_seed(epoch_seed, 2000 + b));
      Tape tape;
      const ParamNodes nodes = bind_params(tape, params, true);
      NodeId loss;
      try {
        loss = phase_b_objective(tape, nodes, ckg, quads);
      } catch (const std::domain_error& e) {
        throw DivergenceError(epoch, "kg", e.what());
      }
      sum += tape.value(loss).item();
      const GradMap g = gradients(tape, loss, epoch);
      std::vector<Tensor> grads{g.at(nodes.node_embedding), g.at(nodes.relation_embedding),
                                g.at(nodes.relation_projection)};
      clip_global_norm(grads, config.clip_norm);
      adam_step(kg_tensors, grads, adam_b, config.learning_rate);
    }
    return sum / static_cast<double>(batches.size());
  }
};

}  // namespace

TrainResult train(const TrainConfig& config, const InteractionDataset& dataset,
                  const CollaborativeKG& ckg, const EpochCallback& on_epoch) {
  config.validate();
  if (ckg.interactions().empty()) {
    throw std::invalid_argument("train: the graph holds no training interactions");
  }
  if (ckg.num_users() != dataset.num_users || ckg.num_items() != dataset.num_items) {
    throw std::invalid_argument("train: graph and dataset disagree on users or items");
  }
  Trainer trainer(config, dataset, ckg);
  const PropagationSettings eval_settings = eval_propagation(config);
  TrainResult result{trainer.params, {}};
  double best_recall = -1.0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const std::uint64_t epoch_seed =
        derive_seed(derive_seed(config.seed, kEpochStream), epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = trainer.phase_a(epoch, epoch_seed);
    rec.loss.kg = trainer.phase_b(epoch, epoch_seed);
    rec.loss = total_loss(rec.loss);
    if (!std::isfinite(rec.loss.final_loss)) {
      throw DivergenceError(epoch, "final", "epoch mean is not finite");
    }
    const MetricsReport valid = evaluate(trainer.params, ckg, dataset, Split::kValid,
                                         config.top_k, eval_settings, config.threads);
    rec.valid_recall = valid.recall;
    rec.valid_ndcg = valid.ndcg;
    result.history.epochs.push_back(rec);
    if (rec.valid_recall > best_recall) {
      best_recall = rec.valid_recall;
      result.history.best_epoch = epoch;
      result.params = trainer.params;
    }
    if (on_epoch) on_epoch(rec);
    if (early_stop(result.history, config.patience)) {
      result.history.stop_reason = "early_stop";
      return result;
    }
  }
  result.history.stop_reason = "max_epochs";
  return result;
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,cf,ui_inbatch,uu_inbatch,ui_noised,uu_noised,reg,total,kg,final,"
         "valid_recall,valid_ndcg\n";
  for (const auto& rec : history.epochs) {
    const LossBundle& l = rec.loss;
    out << rec.epoch;
    for (double x : {l.cf, l.ui_inbatch, l.uu_inbatch, l.ui_noised, l.uu_noised, l.reg,
                     l.total, l.kg, l.final_loss, rec.valid_recall, rec.valid_ndcg}) {
      out << ',' << format_double(x);
    }
    out << '\n';
  }
}

}  // namespace kgrec
