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

#include "kgrec/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace kgrec {

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

void expect_rank(Op op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got " +
                       shape_string(t.shape()));
  }
}

void expect_same(Op op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return Tensor(x.shape(), std::move(out));
}

// out[m,p] = a[m,n] * b[n,p]
std::vector<double> gemm_nn(std::span<const double> a, std::span<const double> b,
                            std::size_t m, std::size_t n, std::size_t p) {
  std::vector<double> out(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a[i * n + k];
      if (aik == 0.0) continue;
      const double* brow = b.data() + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// out[m,p] = a[m,n] * b[p,n]^T
std::vector<double> gemm_nt(std::span<const double> a, std::span<const double> b,
                            std::size_t m, std::size_t n, std::size_t p) {
  std::vector<double> out(m * p);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      out[i * p + j] = dot(a.subspan(i * n, n), b.subspan(j * n, n));
    }
  }
  return out;
}

// out[n,p] = a[m,n]^T * b[m,p]
std::vector<double> gemm_tn(std::span<const double> a, std::span<const double> b,
                            std::size_t m, std::size_t n, std::size_t p) {
  std::vector<double> out(n * p, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const double* brow = b.data() + k * p;
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = a[k * n + i];
      if (aki == 0.0) continue;
      double* orow = out.data() + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

std::vector<double> transpose_data(std::span<const double> a, std::size_t m,
                                   std::size_t n) {
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  }
  return out;
}

void accumulate(std::vector<Tensor>& adj, std::vector<char>& has, NodeId id,
                Tensor grad) {
  if (!has[id]) {
    adj[id] = std::move(grad);
    has[id] = 1;
    return;
  }
  auto dst = adj[id].data();
  auto src = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kMatvec: return "matvec";
    case Op::kMatmul: return "matmul";
    case Op::kMatmulNT: return "matmul_nt";
    case Op::kTranspose: return "transpose";
    case Op::kDot: return "dot";
    case Op::kScale: return "scale";
    case Op::kSum: return "sum";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kSoftplus: return "softplus";
    case Op::kL2NormSquared: return "l2_norm_squared";
    case Op::kConcat: return "concat";
    case Op::kMaskApply: return "mask_apply";
    case Op::kGatherRows: return "gather_rows";
    case Op::kRowDot: return "row_dot";
    case Op::kNormalizeRows: return "normalize_rows";
    case Op::kAddBias: return "add_bias";
    case Op::kLogSumExpRows: return "logsumexp_rows";
    case Op::kSparseAggregate: return "sparse_aggregate";
    case Op::kReshape: return "reshape";
  }
  return "unknown";
}

NodeId Tape::leaf(Tensor value) {
  nodes_.push_back({Op::kLeaf, {}, {}, std::move(value), true});
  leaves_.push_back(nodes_.size() - 1);
  return nodes_.size() - 1;
}

NodeId Tape::constant(Tensor value) {
  nodes_.push_back({Op::kConstant, {}, {}, std::move(value), false});
  return nodes_.size() - 1;
}

const Tensor& Tape::value(NodeId id) const {
  if (id >= nodes_.size()) {
    throw std::out_of_range("tape node " + std::to_string(id) +
                            " does not exist");
  }
  return nodes_[id].value;
}

NodeId Tape::apply(Op op, std::span<const NodeId> inputs, OpAttr attr) {
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) {
      throw std::out_of_range(std::string(op_name(op)) + ": input node " +
                              std::to_string(in) + " does not exist");
    }
  }
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      shape_fail(op, "expected " + std::to_string(n) + " inputs, got " +
                         std::to_string(inputs.size()));
    }
  };
  auto in = [&](std::size_t k) -> const Tensor& {
    return nodes_[inputs[k]].value;
  };

  Tensor out;
  switch (op) {
    case Op::kLeaf:
    case Op::kConstant:
      shape_fail(op, "use Tape::leaf or Tape::constant");
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      arity(2);
      expect_same(op, in(0), in(1));
      std::vector<double> v(in(0).size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double a = in(0)[i], b = in(1)[i];
        v[i] = op == Op::kAdd ? a + b : op == Op::kSub ? a - b : a * b;
      }
      out = Tensor(in(0).shape(), std::move(v));
      break;
    }
    case Op::kMatvec: {
      arity(2);
      expect_rank(op, in(0), 2);
      expect_rank(op, in(1), 1);
      const std::size_t m = in(0).shape()[0], n = in(0).shape()[1];
      if (in(1).size() != n) {
        shape_fail(op, shape_string(in(0).shape()) + " x " +
                           shape_string(in(1).shape()));
      }
      out = Tensor({m}, gemm_nn(in(0).data(), in(1).data(), m, n, 1));
      break;
    }
    case Op::kMatmul: {
      arity(2);
      expect_rank(op, in(0), 2);
      expect_rank(op, in(1), 2);
      const std::size_t m = in(0).shape()[0], n = in(0).shape()[1];
      if (in(1).shape()[0] != n) {
        shape_fail(op, shape_string(in(0).shape()) + " x " +
                           shape_string(in(1).shape()));
      }
      const std::size_t p = in(1).shape()[1];
      out = Tensor({m, p}, gemm_nn(in(0).data(), in(1).data(), m, n, p));
      break;
    }
    case Op::kMatmulNT: {
      arity(2);
      expect_rank(op, in(0), 2);
      expect_rank(op, in(1), 2);
      const std::size_t m = in(0).shape()[0], n = in(0).shape()[1];
      if (in(1).shape()[1] != n) {
        shape_fail(op, shape_string(in(0).shape()) + " x " +
                           shape_string(in(1).shape()) + "^T");
      }
      const std::size_t p = in(1).shape()[0];
      out = Tensor({m, p}, gemm_nt(in(0).data(), in(1).data(), m, n, p));
      break;
    }
    case Op::kTranspose: {
      arity(1);
      expect_rank(op, in(0), 2);
      const std::size_t m = in(0).shape()[0], n = in(0).shape()[1];
      out = Tensor({n, m}, transpose_data(in(0).data(), m, n));
      break;
    }
    case Op::kDot: {
      arity(2);
      expect_same(op, in(0), in(1));
      out = Tensor::scalar(dot(in(0).data(), in(1).data()));
      break;
    }
    case Op::kScale: {
      arity(1);
      const double c = attr.scalar;
      out = map(in(0), [c](double x) { return c * x; });
      break;
    }
    case Op::kSum: {
      arity(1);
      double s = 0.0;
      for (double x : in(0).data()) s += x;
      out = Tensor::scalar(s);
      break;
    }
    case Op::kExp:
      arity(1);
      out = map(in(0), [](double x) { return std::exp(x); });
      break;
    case Op::kLog:
      arity(1);
      for (double x : in(0).data()) {
        if (!(x > 0.0)) {
          throw std::domain_error("log: input must be strictly positive, got " +
                                  std::to_string(x));
        }
      }
      out = map(in(0), [](double x) { return std::log(x); });
      break;
    case Op::kSigmoid:
      arity(1);
      out = map(in(0), stable_sigmoid);
      break;
    case Op::kTanh:
      arity(1);
      out = map(in(0), [](double x) { return std::tanh(x); });
      break;
    case Op::kRelu:
      arity(1);
      out = map(in(0), [](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case Op::kSoftplus:
      arity(1);
      out = map(in(0), stable_softplus);
      break;
    case Op::kL2NormSquared:
      arity(1);
      out = Tensor::scalar(squared_norm(in(0).data()));
      break;
    case Op::kConcat: {
      if (inputs.empty()) shape_fail(op, "needs at least one input");
      const bool flat = in(0).rank() <= 1;
      if (flat) {
        std::vector<double> v;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (in(k).rank() > 1) shape_fail(op, "mixed ranks");
          v.insert(v.end(), in(k).data().begin(), in(k).data().end());
        }
        const std::size_t n = v.size();
        out = Tensor({n}, std::move(v));
      } else {
        const std::size_t rows = in(0).shape()[0];
        std::size_t cols = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          expect_rank(op, in(k), 2);
          if (in(k).shape()[0] != rows) shape_fail(op, "row counts differ");
          cols += in(k).shape()[1];
        }
        std::vector<double> v(rows * cols);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          const std::size_t c = in(k).shape()[1];
          for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(in(k).data().begin() + r * c, c,
                        v.begin() + r * cols + offset);
          }
          offset += c;
        }
        out = Tensor({rows, cols}, std::move(v));
      }
      break;
    }
    case Op::kMaskApply:
    case Op::kLogSumExpRows:
      if (op == Op::kMaskApply) {
        arity(2);
        expect_same(op, in(0), in(1));
        std::vector<double> v(in(0).size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = in(0)[i] * in(1)[i];
        out = Tensor(in(0).shape(), std::move(v));
      } else {
        arity(2);
        expect_rank(op, in(0), 2);
        expect_same(op, in(0), in(1));
        const std::size_t rows = in(0).shape()[0], cols = in(0).shape()[1];
        std::vector<double> v(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          double top = -std::numeric_limits<double>::infinity();
          for (std::size_t c = 0; c < cols; ++c) {
            const double w = in(1).at(r, c);
            if (w < 0.0) throw std::domain_error("logsumexp_rows: negative weight");
            if (w > 0.0) top = std::max(top, in(0).at(r, c));
          }
          if (!std::isfinite(top)) {
            throw std::domain_error("logsumexp_rows: row " + std::to_string(r) +
                                    " has no positive weight");
          }
          double s = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double w = in(1).at(r, c);
            if (w > 0.0) s += w * std::exp(in(0).at(r, c) - top);
          }
          v[r] = top + std::log(s);
        }
        out = Tensor({rows}, std::move(v));
      }
      break;
    case Op::kGatherRows: {
      arity(1);
      if (!attr.indices) shape_fail(op, "missing indices");
      const Tensor& x = in(0);
      if (x.rank() == 0) shape_fail(op, "cannot gather from a scalar");
      const std::size_t width = x.row_size();
      std::vector<double> v;
      v.reserve(attr.indices->size() * width);
      for (std::size_t idx : *attr.indices) {
        if (idx >= x.rows()) {
          throw std::out_of_range("gather_rows: index " + std::to_string(idx) +
                                  " out of " + std::to_string(x.rows()));
        }
        auto row = x.row(idx);
        v.insert(v.end(), row.begin(), row.end());
      }
      if (attr.indices->empty()) shape_fail(op, "empty index list");
      Shape s = x.shape();
      s[0] = attr.indices->size();
      out = Tensor(std::move(s), std::move(v));
      break;
    }
    case Op::kRowDot: {
      arity(2);
      expect_rank(op, in(0), 2);
      expect_same(op, in(0), in(1));
      const std::size_t rows = in(0).shape()[0];
      std::vector<double> v(rows);
      for (std::size_t r = 0; r < rows; ++r) v[r] = dot(in(0).row(r), in(1).row(r));
      out = Tensor({rows}, std::move(v));
      break;
    }
    case Op::kNormalizeRows: {
      arity(1);
      expect_rank(op, in(0), 2);
      const Tensor& x = in(0);
      std::vector<double> v(x.size());
      const std::size_t d = x.row_size();
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double norm = std::sqrt(squared_norm(x.row(r)));
        if (norm == 0.0) {
          throw std::domain_error("normalize_rows: row " + std::to_string(r) +
                                  " is the zero vector");
        }
        for (std::size_t c = 0; c < d; ++c) v[r * d + c] = x.at(r, c) / norm;
      }
      out = Tensor(x.shape(), std::move(v));
      break;
    }
    case Op::kAddBias: {
      arity(2);
      expect_rank(op, in(0), 2);
      expect_rank(op, in(1), 1);
      const std::size_t d = in(0).shape()[1];
      if (in(1).size() != d) {
        shape_fail(op, shape_string(in(0).shape()) + " + " +
                           shape_string(in(1).shape()));
      }
      std::vector<double> v(in(0).values());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += in(1)[i % d];
      out = Tensor(in(0).shape(), std::move(v));
      break;
    }
    case Op::kSparseAggregate: {
      arity(1);
      if (!attr.sparse) shape_fail(op, "missing sparse matrix");
      const SparseRows& a = *attr.sparse;
      const Tensor& x = in(0);
      expect_rank(op, x, 2);
      if (x.shape()[0] != a.cols) {
        shape_fail(op, "sparse [" + std::to_string(a.rows) + "x" +
                           std::to_string(a.cols) + "] x " +
                           shape_string(x.shape()));
      }
      const std::size_t d = x.shape()[1];
      std::vector<double> v(a.rows * d, 0.0);
      for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
          const double w = a.values[e];
          auto src = x.row(a.columns[e]);
          for (std::size_t c = 0; c < d; ++c) v[r * d + c] += w * src[c];
        }
      }
      out = Tensor({a.rows, d}, std::move(v));
      break;
    }
    case Op::kReshape: {
      arity(1);
      if (shape_size(attr.shape) != in(0).size()) {
        shape_fail(op, shape_string(in(0).shape()) + " -> " +
                           shape_string(attr.shape));
      }
      out = Tensor(attr.shape, in(0).values());
      break;
    }
  }

  bool needs_grad = false;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    // Masks and log-sum-exp weights are fixed inputs by contract.
    if (k == 1 && (op == Op::kMaskApply || op == Op::kLogSumExpRows)) break;
    needs_grad = needs_grad || nodes_[inputs[k]].needs_grad;
  }
  nodes_.push_back({op, std::vector<NodeId>(inputs.begin(), inputs.end()),
                    std::move(attr), std::move(out), needs_grad});
  return nodes_.size() - 1;
}

GradMap Tape::backward(NodeId root) const {
  const Tensor& root_value = value(root);
  if (root_value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got " +
                     shape_string(root_value.shape()));
  }
  std::vector<Tensor> adj(nodes_.size());
  std::vector<char> has(nodes_.size(), 0);
  adj[root] = Tensor(root_value.shape(), {1.0});
  has[root] = 1;

  for (NodeId id = root + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!has[id] || !node.needs_grad) continue;
    if (node.op == Op::kLeaf) continue;
    const Tensor& g = adj[id];
    const Tensor& y = node.value;
    auto input = [&](std::size_t k) -> const Tensor& {
      return nodes_[node.inputs[k]].value;
    };
    auto wants = [&](std::size_t k) {
      return nodes_[node.inputs[k]].needs_grad;
    };
    auto push = [&](std::size_t k, Tensor grad) {
      if (wants(k)) accumulate(adj, has, node.inputs[k], std::move(grad));
    };
    auto elementwise = [&](auto dydx) {
      const Tensor& x = input(0);
      std::vector<double> v(x.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = g[i] * dydx(x[i], y[i]);
      push(0, Tensor(x.shape(), std::move(v)));
    };

    switch (node.op) {
      case Op::kLeaf:
      case Op::kConstant:
        break;
      case Op::kAdd:
        push(0, g);
        push(1, g);
        break;
      case Op::kSub: {
        push(0, g);
        if (wants(1)) push(1, map(g, [](double x) { return -x; }));
        break;
      }
      case Op::kMul: {
        if (wants(0)) {
          std::vector<double> v(g.size());
          for (std::size_t i = 0; i < v.size(); ++i) v[i] = g[i] * input(1)[i];
          push(0, Tensor(g.shape(), std::move(v)));
        }
        if (wants(1)) {
          std::vector<double> v(g.size());
          for (std::size_t i = 0; i < v.size(); ++i) v[i] = g[i] * input(0)[i];
          push(1, Tensor(g.shape(), std::move(v)));
        }
        break;
      }
      case Op::kMatvec: {
        const Tensor& a = input(0);
        const Tensor& x = input(1);
        const std::size_t m = a.shape()[0], n = a.shape()[1];
        if (wants(0)) push(0, Tensor(a.shape(), gemm_nn(g.data(), x.data(), m, 1, n)));
        if (wants(1)) push(1, Tensor(x.shape(), gemm_tn(a.data(), g.data(), m, n, 1)));
        break;
      }
      case Op::kMatmul: {
        const Tensor& a = input(0);
        const Tensor& b = input(1);
        const std::size_t m = a.shape()[0], n = a.shape()[1], p = b.shape()[1];
        if (wants(0)) push(0, Tensor(a.shape(), gemm_nt(g.data(), b.data(), m, p, n)));
        if (wants(1)) push(1, Tensor(b.shape(), gemm_tn(a.data(), g.data(), m, n, p)));
        break;
      }
      case Op::kMatmulNT: {
        const Tensor& a = input(0);
        const Tensor& b = input(1);
        const std::size_t m = a.shape()[0], n = a.shape()[1], p = b.shape()[0];
        if (wants(0)) push(0, Tensor(a.shape(), gemm_nn(g.data(), b.data(), m, p, n)));
        if (wants(1)) push(1, Tensor(b.shape(), gemm_tn(g.data(), a.data(), m, p, n)));
        break;
      }
      case Op::kTranspose: {
        const std::size_t m = input(0).shape()[0], n = input(0).shape()[1];
        push(0, Tensor(input(0).shape(), transpose_data(g.data(), n, m)));
        break;
      }
      case Op::kDot: {
        const double s = g.item();
        if (wants(0)) push(0, map(input(1), [s](double x) { return s * x; }));
        if (wants(1)) push(1, map(input(0), [s](double x) { return s * x; }));
        break;
      }
      case Op::kScale: {
        const double c = node.attr.scalar;
        push(0, map(g, [c](double x) { return c * x; }));
        break;
      }
      case Op::kSum:
        push(0, Tensor::filled(input(0).shape(), g.item()));
        break;
      case Op::kExp:
        elementwise([](double, double out) { return out; });
        break;
      case Op::kLog:
        elementwise([](double x, double) { return 1.0 / x; });
        break;
      case Op::kSigmoid:
        elementwise([](double, double out) { return out * (1.0 - out); });
        break;
      case Op::kTanh:
        elementwise([](double, double out) { return 1.0 - out * out; });
        break;
      case Op::kRelu:
        elementwise([](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
        break;
      case Op::kSoftplus:
        elementwise([](double x, double) { return stable_sigmoid(x); });
        break;
      case Op::kL2NormSquared: {
        const double s = 2.0 * g.item();
        push(0, map(input(0), [s](double x) { return s * x; }));
        break;
      }
      case Op::kConcat: {
        if (y.rank() <= 1) {
          std::size_t offset = 0;
          for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const std::size_t n = input(k).size();
            if (wants(k)) {
              std::vector<double> v(g.data().begin() + offset,
                                    g.data().begin() + offset + n);
              push(k, Tensor(input(k).shape(), std::move(v)));
            }
            offset += n;
          }
        } else {
          const std::size_t rows = y.shape()[0], cols = y.shape()[1];
          std::size_t offset = 0;
          for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const std::size_t c = input(k).shape()[1];
            if (wants(k)) {
              std::vector<double> v(rows * c);
              for (std::size_t r = 0; r < rows; ++r) {
                std::copy_n(g.data().begin() + r * cols + offset, c,
                            v.begin() + r * c);
              }
              push(k, Tensor(input(k).shape(), std::move(v)));
            }
            offset += c;
          }
        }
        break;
      }
      case Op::kMaskApply: {
        std::vector<double> v(g.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = g[i] * input(1)[i];
        push(0, Tensor(g.shape(), std::move(v)));
        break;
      }
      case Op::kGatherRows: {
        const Tensor& x = input(0);
        Tensor grad = Tensor::zeros(x.shape());
        const std::size_t width = x.row_size();
        const auto& idx = *node.attr.indices;
        for (std::size_t k = 0; k < idx.size(); ++k) {
          auto dst = grad.row(idx[k]);
          for (std::size_t c = 0; c < width; ++c) dst[c] += g[k * width + c];
        }
        push(0, std::move(grad));
        break;
      }
      case Op::kRowDot: {
        const Tensor& a = input(0);
        const Tensor& b = input(1);
        const std::size_t d = a.row_size();
        auto side = [&](const Tensor& other) {
          std::vector<double> v(other.size());
          for (std::size_t i = 0; i < v.size(); ++i) v[i] = g[i / d] * other[i];
          return Tensor(other.shape(), std::move(v));
        };
        if (wants(0)) push(0, side(b));
        if (wants(1)) push(1, side(a));
        break;
      }
      case Op::kNormalizeRows: {
        const Tensor& x = input(0);
        const std::size_t d = x.row_size();
        std::vector<double> v(x.size());
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const double norm = std::sqrt(squared_norm(x.row(r)));
          const double yg = dot(y.row(r), g.row(r));
          for (std::size_t c = 0; c < d; ++c) {
            v[r * d + c] = (g.at(r, c) - y.at(r, c) * yg) / norm;
          }
        }
        push(0, Tensor(x.shape(), std::move(v)));
        break;
      }
      case Op::kAddBias: {
        push(0, g);
        if (wants(1)) {
          const std::size_t d = input(1).size();
          std::vector<double> v(d, 0.0);
          for (std::size_t i = 0; i < g.size(); ++i) v[i % d] += g[i];
          push(1, Tensor(input(1).shape(), std::move(v)));
        }
        break;
      }
      case Op::kLogSumExpRows: {
        const Tensor& x = input(0);
        const Tensor& w = input(1);
        std::vector<double> v(x.size(), 0.0);
        const std::size_t cols = x.shape()[1];
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            const double wc = w.at(r, c);
            if (wc > 0.0) v[r * cols + c] = g[r] * wc * std::exp(x.at(r, c) - y[r]);
          }
        }
        push(0, Tensor(x.shape(), std::move(v)));
        break;
      }
      case Op::kSparseAggregate: {
        const SparseRows& a = *node.attr.sparse;
        const Tensor& x = input(0);
        const std::size_t d = x.shape()[1];
        std::vector<double> v(x.size(), 0.0);
        for (std::size_t r = 0; r < a.rows; ++r) {
          for (std::size_t e = a.offsets[r]; e < a.offsets[r + 1]; ++e) {
            const double w = a.values[e];
            double* dst = v.data() + a.columns[e] * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] += w * g.at(r, c);
          }
        }
        push(0, Tensor(x.shape(), std::move(v)));
        break;
      }
      case Op::kReshape:
        push(0, Tensor(input(0).shape(), g.values()));
        break;
    }
  }

  GradMap grads;
  for (NodeId leaf : leaves_) {
    grads.emplace(leaf, has[leaf] ? adj[leaf] : Tensor::zeros(nodes_[leaf].value.shape()));
  }
  return grads;
}

namespace ad {

NodeId add(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kAdd, {a, b}); }
NodeId sub(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kSub, {a, b}); }
NodeId mul(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kMul, {a, b}); }
NodeId matvec(Tape& t, NodeId a, NodeId x) { return t.apply(Op::kMatvec, {a, x}); }
NodeId matmul(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kMatmul, {a, b}); }
NodeId matmul_nt(Tape& t, NodeId a, NodeId b) {
  return t.apply(Op::kMatmulNT, {a, b});
}
NodeId transpose(Tape& t, NodeId a) { return t.apply(Op::kTranspose, {a}); }
NodeId dot(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kDot, {a, b}); }
NodeId scale(Tape& t, NodeId a, double factor) {
  OpAttr attr;
  attr.scalar = factor;
  return t.apply(Op::kScale, {a}, std::move(attr));
}
NodeId sum(Tape& t, NodeId a) { return t.apply(Op::kSum, {a}); }
NodeId mean(Tape& t, NodeId a) {
  return scale(t, sum(t, a), 1.0 / static_cast<double>(t.value(a).size()));
}
NodeId exp(Tape& t, NodeId a) { return t.apply(Op::kExp, {a}); }
NodeId log(Tape& t, NodeId a) { return t.apply(Op::kLog, {a}); }
NodeId sigmoid(Tape& t, NodeId a) { return t.apply(Op::kSigmoid, {a}); }
NodeId tanh(Tape& t, NodeId a) { return t.apply(Op::kTanh, {a}); }
NodeId relu(Tape& t, NodeId a) { return t.apply(Op::kRelu, {a}); }
NodeId softplus(Tape& t, NodeId a) { return t.apply(Op::kSoftplus, {a}); }
NodeId l2_norm_squared(Tape& t, NodeId a) {
  return t.apply(Op::kL2NormSquared, {a});
}
NodeId concat(Tape& t, std::span<const NodeId> parts) {
  return t.apply(Op::kConcat, parts);
}
NodeId mask_apply(Tape& t, NodeId x, NodeId mask) {
  return t.apply(Op::kMaskApply, {x, mask});
}
NodeId gather_rows(Tape& t, NodeId x, std::vector<std::size_t> indices) {
  OpAttr attr;
  attr.indices = std::make_shared<const std::vector<std::size_t>>(std::move(indices));
  return t.apply(Op::kGatherRows, {x}, std::move(attr));
}
NodeId row_dot(Tape& t, NodeId a, NodeId b) { return t.apply(Op::kRowDot, {a, b}); }
NodeId normalize_rows(Tape& t, NodeId x) { return t.apply(Op::kNormalizeRows, {x}); }
NodeId add_bias(Tape& t, NodeId x, NodeId bias) {
  return t.apply(Op::kAddBias, {x, bias});
}
NodeId logsumexp_rows(Tape& t, NodeId x, NodeId weights) {
  return t.apply(Op::kLogSumExpRows, {x, weights});
}
NodeId sparse_aggregate(Tape& t, std::shared_ptr<const SparseRows> a, NodeId x) {
  OpAttr attr;
  attr.sparse = std::move(a);
  return t.apply(Op::kSparseAggregate, {x}, std::move(attr));
}
NodeId reshape(Tape& t, NodeId x, Shape shape) {
  OpAttr attr;
  attr.shape = std::move(shape);
  return t.apply(Op::kReshape, {x}, std::move(attr));
}

}  // namespace ad

double evaluate_program(const ScalarProgram& program,
                        const std::vector<Tensor>& leaves) {
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(leaves.size());
  for (const Tensor& leaf : leaves) ids.push_back(tape.leaf(leaf));
  return tape.value(program(tape, ids)).item();
}

double fd_check(const ScalarProgram& program, const std::vector<Tensor>& leaves,
                double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_check: step must be > 0");
  Tape tape;
  std::vector<NodeId> ids;
  for (const Tensor& leaf : leaves) ids.push_back(tape.leaf(leaf));
  const GradMap grads = tape.backward(program(tape, ids));

  double worst = 0.0;
  std::vector<Tensor> probe = leaves;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const Tensor& analytic = grads.at(ids[l]);
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      const double x0 = leaves[l][i];
      probe[l][i] = x0 + step;
      const double up = evaluate_program(program, probe);
      probe[l][i] = x0 - step;
      const double down = evaluate_program(program, probe);
      probe[l][i] = x0;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace kgrec
