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


#include <cmath>
#include <sstream>

#include "doctest.h"
#include "kgrec/trainer.hpp"

using namespace kgrec;

namespace {

struct Toy {
  InteractionDataset dataset;
  CollaborativeKG ckg;
};

// Two taste groups over 12 items with a small KG on top.
Toy toy() {
  std::string log, triples, align;
  for (int u = 0; u < 16; ++u) {
    const int base = u < 8 ? 0 : 6;
    for (int k = 0; k < 5; ++k) {
      log += "u" + std::to_string(u) + "\ti" + std::to_string(base + (u + k) % 6) + "\n";
    }
  }
  for (int i = 0; i < 12; ++i) {
    align += "i" + std::to_string(i) + "\te" + std::to_string(i) + "\n";
    triples += "e" + std::to_string(i) + "\tgenre\tg" + std::to_string(i / 6) + "\n";
    triples += "e" + std::to_string(i) + "\tnear\te" + std::to_string((i + 1) % 12) + "\n";
  }
  std::istringstream in(log), kg(triples), al(align);
  Toy t;
  t.dataset = split(parse_interactions(in, "\t"), {0.6, 0.2, 0.2}, 1);
  KnowledgeGraph graph = parse_kg(kg, "\t");
  align_items(graph, t.dataset, parse_alignment(al, "\t"));
  t.ckg = build_ckg(t.dataset, graph);
  return t;
}

TrainConfig small_config() {
  TrainConfig c;
  c.dim = 6;
  c.relation_dim = 4;
  c.batch_size = 16;
  c.noise_count = 3;
  c.max_epochs = 4;
  c.learning_rate = 0.01;
  c.lambda = 1e-3;
  c.tau = 0.5;
  c.top_k = 3;
  return c;
}

ParamNodes nodes_from(std::span<const NodeId> leaves, const ModelDims& d) {
  ParamNodes n;
  std::size_t k = 0;
  n.node_embedding = leaves[k++];
  n.relation_embedding = leaves[k++];
  n.relation_projection = leaves[k++];
  for (std::size_t l = 0; l < d.hops; ++l) n.aggregator_weight.push_back(leaves[k++]);
  for (std::size_t l = 0; l < d.hops; ++l) n.aggregator_bias.push_back(leaves[k++]);
  for (std::size_t l = 0; l < d.head_depth; ++l) n.head_weight.push_back(leaves[k++]);
  for (std::size_t l = 0; l < d.head_depth; ++l) n.head_bias.push_back(leaves[k++]);
  return n;
}

std::vector<Tensor> copies(const ModelParams& p) {
  std::vector<Tensor> out;
  for (const Tensor* t : p.tensors()) out.push_back(*t);
  return out;
}

TrainHistory history_with(std::initializer_list<double> recalls) {
  TrainHistory h;
  std::size_t e = 0;
  for (double r : recalls) {
    EpochRecord rec;
    rec.epoch = e++;
    rec.valid_recall = r;
    h.epochs.push_back(rec);
  }
  return h;
}

}  // namespace

TEST_CASE("TrainConfig defaults and validation") {
  TrainConfig c;
  CHECK(c.learning_rate == 0.001);
  CHECK(c.batch_size == 4096);
  CHECK(c.dim == 64);
  CHECK(c.hops == 2);
  CHECK(c.max_fanout == 8);
  CHECK(c.tau == 0.1);
  CHECK(c.phi == 0.8);
  CHECK(c.patience == 50);
  CHECK(c.top_k == 10);
  CHECK_NOTHROW(c.validate());
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("adam_step") {
  Tensor x = Tensor::vector({0.5});
  std::vector<Tensor*> params{&x};
  const std::vector<const Tensor*> view{&x};
  AdamState state(view, {0});
  adam_step(params, std::vector<Tensor>{Tensor::vector({1.0})}, state, 0.001);
  CHECK(x[0] == doctest::Approx(0.499).epsilon(1e-9));
  CHECK(state.step() == 1);

  // Zero gradient on a fresh state: nothing moves.
  Tensor y = Tensor::vector({2.0, -1.0});
  std::vector<Tensor*> yp{&y};
  AdamState ys(std::vector<const Tensor*>{&y}, {0});
  adam_step(yp, std::vector<Tensor>{Tensor::zeros({2})}, ys, 0.1);
  CHECK(y == Tensor::vector({2.0, -1.0}));

  // Moments decay under a zero gradient.
  adam_step(yp, std::vector<Tensor>{Tensor::vector({1.0, 1.0})}, ys, 0.1);
  const double m1 = ys.first_moment(0)[0], v1 = ys.second_moment(0)[0];
  adam_step(yp, std::vector<Tensor>{Tensor::zeros({2})}, ys, 0.1);
  CHECK(ys.first_moment(0)[0] == doctest::Approx(0.9 * m1));
  CHECK(ys.second_moment(0)[0] == doctest::Approx(0.999 * v1));

  // Sparse tables: rows with zero gradient keep their values and moments.
  Tensor table = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  std::vector<Tensor*> tp{&table};
  AdamState ts(std::vector<const Tensor*>{&table}, {1});
  adam_step(tp, std::vector<Tensor>{Tensor::matrix(3, 2, {0, 0, 1, -1, 0, 0})}, ts, 0.1);
  CHECK(table.at(0, 0) == 1.0);
  CHECK(table.at(2, 1) == 6.0);
  CHECK(table.at(1, 0) == doctest::Approx(2.9));
  CHECK(table.at(1, 1) == doctest::Approx(4.1));
  adam_step(tp, std::vector<Tensor>{Tensor::zeros({3, 2})}, ts, 0.1);
  CHECK(ts.first_moment(0).at(1, 0) == doctest::Approx(0.1));

  // Ten steps on a quadratic bowl.
  Tensor w = Tensor::vector({3.0, -2.0});
  std::vector<Tensor*> wp{&w};
  AdamState ws(std::vector<const Tensor*>{&w}, {0});
  double prev = squared_norm(w.data());
  for (int k = 0; k < 10; ++k) {
    adam_step(wp, std::vector<Tensor>{Tensor::vector({2 * w[0], 2 * w[1]})}, ws, 0.1);
    const double now = squared_norm(w.data());
    CHECK(now < prev);
    prev = now;
  }
  CHECK_THROWS_AS(adam_step(wp, std::vector<Tensor>{Tensor::zeros({3})}, ws, 0.1),
                  ShapeError);
}

TEST_CASE("clip_global_norm") {
  std::vector<Tensor> g{Tensor::vector({3.0}), Tensor::vector({4.0})};
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0][0] == doctest::Approx(0.6));
  CHECK(g[1][0] == doctest::Approx(0.8));
  CHECK(clip_global_norm(g, 5.0) == doctest::Approx(1.0));
  CHECK(g[1][0] == doctest::Approx(0.8));
}

TEST_CASE("early_stop") {
  CHECK_FALSE(early_stop(history_with({0.1, 0.2, 0.3, 0.4, 0.5}), 1));
  CHECK(early_stop(history_with({0.1, 0.2, 0.3, 0.4, 0.3, 0.2, 0.1}), 2));
  // Ties do not count as an increase.
  CHECK(early_stop(history_with({0.1, 0.4, 0.4, 0.4}), 2));
  CHECK_FALSE(early_stop(history_with({0.1, 0.4, 0.4}), 2));
  CHECK_THROWS_AS(early_stop(TrainHistory{}, 2), std::invalid_argument);
}

TEST_CASE("phase-A objective passes a finite-difference check") {
  const Toy t = toy();
  TrainConfig c = small_config();
  c.dim = 4;
  c.relation_dim = 3;
  c.dropout_rate = 0.2;
  const ModelParams p = initial_params(c, t.ckg);
  const PropagationPlan plan = plan_propagation(p, t.ckg, c.max_fanout, 5);
  const std::vector<BprTriple> batch = sample_bpr(t.dataset, 6, 2);
  const ComplementaryModel comp(p, c.ema_momentum);
  const ContrastiveBatch cb = make_contrastive_batch(
      batch, t.ckg, comp, {c.phi, c.noise_count, c.noise_scale, c.dropout_rate}, 8);
  ScalarProgram program = [&](Tape& tape, std::span<const NodeId> leaves) {
    return phase_a_objective(tape, nodes_from(leaves, p.dims), plan, t.ckg, batch, cb, c)
        .total;
  };
  CHECK(fd_check(program, copies(p), 1e-6) <= 1e-4);

  // With lambda = 0 and no contrastive level the objective is exactly BPR.
  TrainConfig plain = c;
  plain.lambda = 0.0;
  plain.use_ui = plain.use_uu = false;
  Tape tape;
  const ParamNodes n = bind_params(tape, p, false);
  const PhaseATerms terms = phase_a_objective(tape, n, plan, t.ckg, batch, cb, plain);
  CHECK(tape.value(terms.total).item() == tape.value(terms.cf).item());
  CHECK(tape.value(terms.reg).item() == 0.0);
}

TEST_CASE("phase B touches only the embedding and relation tables") {
  const Toy t = toy();
  const TrainConfig c = small_config();
  const ModelParams p = initial_params(c, t.ckg);
  const TripleIndex known(t.ckg.triples());
  const auto quads = corrupt_triples(known, t.ckg.num_entities(), t.ckg.triples(), 3);
  Tape tape;
  const ParamNodes n = bind_params(tape, p, true);
  const auto grads = collect_grads(tape.backward(phase_b_objective(tape, n, t.ckg, quads)), n);
  CHECK(squared_norm(grads[0].data()) > 0.0);
  CHECK(squared_norm(grads[1].data()) > 0.0);
  CHECK(squared_norm(grads[2].data()) > 0.0);
  for (std::size_t k = 3; k < grads.size(); ++k) CHECK(squared_norm(grads[k].data()) == 0.0);
  // User rows and the Interact relation never move.
  for (std::uint32_t u = 0; u < t.ckg.num_users(); ++u) {
    CHECK(squared_norm(grads[0].row(u)) == 0.0);
  }
  CHECK(squared_norm(grads[1].row(0)) == 0.0);

  ScalarProgram program = [&](Tape& tp, std::span<const NodeId> leaves) {
    return phase_b_objective(tp, nodes_from(leaves, p.dims), t.ckg, quads);
  };
  CHECK(fd_check(program, copies(p), 1e-6) <= 1e-4);
}

TEST_CASE("training is deterministic and records every epoch") {
  const Toy t = toy();
  const TrainConfig c = small_config();
  std::size_t calls = 0;
  const TrainResult a = train(c, t.dataset, t.ckg, [&](const EpochRecord&) { ++calls; });
  const TrainResult b = train(c, t.dataset, t.ckg);
  CHECK(a.history == b.history);
  CHECK(a.params == b.params);
  CHECK(calls == a.history.epochs.size());
  CHECK(a.history.epochs.size() == 4);
  CHECK(a.history.stop_reason == "max_epochs");
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
    const auto& rec = a.history.epochs[e];
    CHECK(rec.epoch == e);
    CHECK(rec.loss.final_loss == rec.loss.total + rec.loss.kg);
    CHECK(rec.loss.kg > 0.0);
    CHECK(rec.valid_recall <= a.history.epochs[a.history.best_epoch].valid_recall);
  }

  TrainConfig other = c;
  other.seed = 7;
  CHECK_FALSE(train(other, t.dataset, t.ckg).history == a.history);

  std::ostringstream csv;
  write_history_csv(csv, a.history);
  std::istringstream lines(csv.str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 5);
}

TEST_CASE("early stopping ends training patience epochs after the best") {
  const Toy t = toy();
  TrainConfig c = small_config();
  c.learning_rate = 1e-12;  // rankings never change, so epoch 0 stays best
  c.patience = 3;
  c.max_epochs = 20;
  const TrainResult r = train(c, t.dataset, t.ckg);
  CHECK(r.history.stop_reason == "early_stop");
  CHECK(r.history.best_epoch == 0);
  CHECK(r.history.epochs.size() == 4);
}

TEST_CASE("divergence is reported with the epoch and term") {
  const Toy t = toy();
  TrainConfig c = small_config();
  c.learning_rate = 1e300;
  c.max_epochs = 5;
  try {
    train(c, t.dataset, t.ckg);
    FAIL("training did not diverge");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() < 5);
    CHECK_FALSE(e.term().empty());
  }
}

TEST_CASE("format_double is the shortest round-trip form") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
