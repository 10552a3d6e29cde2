// Copyright (c) the flowmatch authors
// SPDX-License-Identifier: Apache-2.0
#include "flowmatch/tape.hpp"

#include <cmath>

#include "flowmatch/kernels.hpp"

namespace flowmatch {

namespace k = kernels;

const Tensor& Gradients::get(Var v) const {
  FM_CHECK(has(v), Error, "no gradient recorded for node ", v.id);
  return grads_[v.id];
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

namespace {

enum class BinKind { same, broadcast_row };

BinKind classify_binary(const Tensor& a, const Tensor& b, const char* opname) {
  if (a.same_shape(b)) return BinKind::same;
  if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0])
    return BinKind::broadcast_row;
  throw ShapeError(concat_msg(opname, ": incompatible shapes ", a.shape_str(),
                              " and ", b.shape_str()));
}

Tensor colsum(const Tensor& m) {
  Tensor out = Tensor::zeros({m.cols()});
  for (std::int64_t r = 0; r < m.rows(); ++r)
    k::add(out.data(), m.data() + r * m.cols(), out.data(),
           static_cast<std::size_t>(m.cols()));
  return out;
}

}  // namespace

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  FM_CHECK(av.rank() == 2 && bv.rank() == 2 && av.shape()[1] == bv.shape()[0],
           ShapeError, "matmul: incompatible shapes ", av.shape_str(), " and ",
           bv.shape_str());
  Node n;
  n.op = Op::matmul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = requires_grad(a) || requires_grad(b);
  n.value = Tensor::zeros({av.shape()[0], bv.shape()[1]});
  k::gemm_nn(av.shape()[0], bv.shape()[1], av.shape()[1], av.data(), bv.data(),
             n.value.data(), false);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  const BinKind kind = classify_binary(av, bv, "add");
  Node n;
  n.op = Op::add;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = requires_grad(a) || requires_grad(b);
  n.value = Tensor::zeros(av.shape());
  if (kind == BinKind::same) {
    k::add(av.data(), bv.data(), n.value.data(), av.numel());
  } else {
    for (std::int64_t r = 0; r < av.rows(); ++r)
      k::add(av.data() + r * av.cols(), bv.data(), n.value.data() + r * av.cols(),
             av.cols());
  }
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  const BinKind kind = classify_binary(av, bv, "sub");
  Node n;
  n.op = Op::sub;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = requires_grad(a) || requires_grad(b);
  n.value = Tensor::zeros(av.shape());
  if (kind == BinKind::same) {
    k::sub(av.data(), bv.data(), n.value.data(), av.numel());
  } else {
    for (std::int64_t r = 0; r < av.rows(); ++r)
      k::sub(av.data() + r * av.cols(), bv.data(), n.value.data() + r * av.cols(),
             av.cols());
  }
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  const BinKind kind = classify_binary(av, bv, "mul");
  Node n;
  n.op = Op::mul;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = requires_grad(a) || requires_grad(b);
  n.value = Tensor::zeros(av.shape());
  if (kind == BinKind::same) {
    k::mul(av.data(), bv.data(), n.value.data(), av.numel());
  } else {
    for (std::int64_t r = 0; r < av.rows(); ++r)
      k::mul(av.data() + r * av.cols(), bv.data(), n.value.data() + r * av.cols(),
             av.cols());
  }
  return push(std::move(n));
}

Var Tape::smul(Var a, double s) {
  const Tensor& av = value(a);
  Node n;
  n.op = Op::smul;
  n.a = a.id;
  n.scalar = s;
  n.requires_grad = requires_grad(a);
  n.value = Tensor::zeros(av.shape());
  k::scale(av.data(), s, n.value.data(), av.numel());
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  const Tensor& av = value(a);
  Node n;
  n.op = Op::tanh_op;
  n.a = a.id;
  n.requires_grad = requires_grad(a);
  n.value = Tensor::zeros(av.shape());
  k::tanh_map(av.data(), n.value.data(), av.numel());
  return push(std::move(n));
}

Var Tape::silu(Var a) {
  const Tensor& av = value(a);
  Node n;
  n.op = Op::silu_op;
  n.a = a.id;
  n.requires_grad = requires_grad(a);
  n.value = Tensor::zeros(av.shape());
  k::silu_map(av.data(), n.value.data(), av.numel());
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  FM_CHECK(av.rank() == 2 && bv.rank() == 2 && av.shape()[0] == bv.shape()[0],
           ShapeError, "concat_cols: incompatible shapes ", av.shape_str(),
           " and ", bv.shape_str());
  Node n;
  n.op = Op::concat_cols;
  n.a = a.id;
  n.b = b.id;
  n.requires_grad = requires_grad(a) || requires_grad(b);
  const std::int64_t rows = av.shape()[0];
  const std::int64_t ca = av.shape()[1];
  const std::int64_t cb = bv.shape()[1];
  n.value = Tensor::zeros({rows, ca + cb});
  for (std::int64_t r = 0; r < rows; ++r) {
    double* dst = n.value.data() + r * (ca + cb);
    for (std::int64_t c = 0; c < ca; ++c) dst[c] = av.at(r, c);
    for (std::int64_t c = 0; c < cb; ++c) dst[ca + c] = bv.at(r, c);
  }
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  const Tensor& av = value(a);
  Node n;
  n.op = Op::sum_all;
  n.a = a.id;
  n.requires_grad = requires_grad(a);
  n.value = Tensor::scalar(k::sum(av.data(), av.numel()));
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  const Tensor& av = value(a);
  FM_CHECK(av.numel() > 0, ShapeError, "mean of empty tensor");
  Node n;
  n.op = Op::mean_all;
  n.a = a.id;
  n.requires_grad = requires_grad(a);
  n.value = Tensor::scalar(k::sum(av.data(), av.numel()) /
                           static_cast<double>(av.numel()));
  return push(std::move(n));
}

Var Tape::squared_l2(Var a) {
  const Tensor& av = value(a);
  Node n;
  n.op = Op::squared_l2;
  n.a = a.id;
  n.requires_grad = requires_grad(a);
  n.value = Tensor::scalar(k::sum_sq(av.data(), av.numel()));
  return push(std::move(n));
}

Gradients Tape::backward(Var root) const {
  FM_CHECK(root.valid() && root.id < static_cast<int>(nodes_.size()), Error,
           "backward: root not on tape");
  const Tensor& rv = value(root);
  FM_CHECK(rv.numel() == 1, ShapeError,
           "backward: root must be scalar, got shape ", rv.shape_str());

  Gradients g(nodes_.size());
  if (!nodes_[root.id].requires_grad) return g;
  g.slot(root.id) = Tensor::full(rv.shape(), 1.0);

  auto acc = [&](int id, std::int64_t offset, const double* src, std::int64_t n) {
    Tensor& slot = g.slot(id);
    if (slot.empty()) slot = Tensor::zeros(nodes_[id].value.shape());
    k::add(slot.data() + offset, src, slot.data() + offset, n);
  };
  auto acc_scaled = [&](int id, double s, const double* src, std::int64_t n) {
    Tensor& slot = g.slot(id);
    if (slot.empty()) slot = Tensor::zeros(nodes_[id].value.shape());
    k::axpy(s, src, slot.data(), n);
  };
  auto wants = [&](int id) { return id >= 0 && nodes_[id].requires_grad; };

  for (int i = root.id; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || g.slot(i).empty()) continue;
    const Tensor& gi = g.slot(i);
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        const Tensor& av = nodes_[n.a].value;
        const Tensor& bv = nodes_[n.b].value;
        if (wants(n.a)) {
          Tensor& slot = g.slot(n.a);
          if (slot.empty()) slot = Tensor::zeros(av.shape());
          k::gemm_nt(av.shape()[0], av.shape()[1], bv.shape()[1], gi.data(),
                     bv.data(), slot.data(), true);
        }
        if (wants(n.b)) {
          Tensor& slot = g.slot(n.b);
          if (slot.empty()) slot = Tensor::zeros(bv.shape());
          k::gemm_tn(bv.shape()[0], bv.shape()[1], av.shape()[0], av.data(),
                     gi.data(), slot.data(), true);
        }
        break;
      }
      case Op::add:
      case Op::sub: {
        const double bsign = (n.op == Op::sub) ? -1.0 : 1.0;
        if (wants(n.a)) acc(n.a, 0, gi.data(), gi.numel());
        if (wants(n.b)) {
          const Tensor& bv = nodes_[n.b].value;
          if (bv.same_shape(gi)) {
            acc_scaled(n.b, bsign, gi.data(), gi.numel());
          } else {
            Tensor cs = colsum(gi);
            acc_scaled(n.b, bsign, cs.data(), cs.numel());
          }
        }
        break;
      }
      case Op::mul: {
        const Tensor& av = nodes_[n.a].value;
        const Tensor& bv = nodes_[n.b].value;
        if (bv.same_shape(av)) {
          if (wants(n.a)) {
            Tensor tmp = Tensor::zeros(gi.shape());
            k::mul(gi.data(), bv.data(), tmp.data(), gi.numel());
            acc(n.a, 0, tmp.data(), tmp.numel());
          }
          if (wants(n.b)) {
            Tensor tmp = Tensor::zeros(gi.shape());
            k::mul(gi.data(), av.data(), tmp.data(), gi.numel());
            acc(n.b, 0, tmp.data(), tmp.numel());
          }
        } else {
          // [B,n] * [n]
          if (wants(n.a)) {
            Tensor tmp = Tensor::zeros(gi.shape());
            for (std::int64_t r = 0; r < gi.rows(); ++r)
              k::mul(gi.data() + r * gi.cols(), bv.data(),
                     tmp.data() + r * gi.cols(), gi.cols());
            acc(n.a, 0, tmp.data(), tmp.numel());
          }
          if (wants(n.b)) {
            Tensor tmp = Tensor::zeros(gi.shape());
            k::mul(gi.data(), av.data(), tmp.data(), gi.numel());
            Tensor cs = colsum(tmp);
            acc(n.b, 0, cs.data(), cs.numel());
          }
        }
        break;
      }
      case Op::smul:
        if (wants(n.a)) acc_scaled(n.a, n.scalar, gi.data(), gi.numel());
        break;
      case Op::tanh_op:
        if (wants(n.a)) {
          const Tensor& y = n.value;
          Tensor tmp = Tensor::zeros(gi.shape());
          for (std::int64_t j = 0; j < gi.numel(); ++j)
            tmp[j] = gi[j] * (1.0 - y[j] * y[j]);
          acc(n.a, 0, tmp.data(), tmp.numel());
        }
        break;
      case Op::silu_op:
        if (wants(n.a)) {
          const Tensor& x = nodes_[n.a].value;
          Tensor tmp = Tensor::zeros(gi.shape());
          for (std::int64_t j = 0; j < gi.numel(); ++j) {
            const double s = 1.0 / (1.0 + std::exp(-x[j]));
            tmp[j] = gi[j] * s * (1.0 + x[j] * (1.0 - s));
          }
          acc(n.a, 0, tmp.data(), tmp.numel());
        }
        break;
      case Op::concat_cols: {
        const Tensor& av = nodes_[n.a].value;
        const Tensor& bv = nodes_[n.b].value;
        const std::int64_t ca = av.shape()[1];
        const std::int64_t cb = bv.shape()[1];
        for (std::int64_t r = 0; r < gi.rows(); ++r) {
          const double* grow = gi.data() + r * (ca + cb);
          if (wants(n.a)) acc(n.a, r * ca, grow, ca);
          if (wants(n.b)) acc(n.b, r * cb, grow + ca, cb);
        }
        break;
      }
      case Op::sum_all:
        if (wants(n.a)) {
          const Tensor& av = nodes_[n.a].value;
          Tensor tmp = Tensor::full(av.shape(), gi.value());
          acc(n.a, 0, tmp.data(), tmp.numel());
        }
        break;
      case Op::mean_all:
        if (wants(n.a)) {
          const Tensor& av = nodes_[n.a].value;
          Tensor tmp =
              Tensor::full(av.shape(), gi.value() / static_cast<double>(av.numel()));
          acc(n.a, 0, tmp.data(), tmp.numel());
        }
        break;
      case Op::squared_l2:
        if (wants(n.a)) {
          const Tensor& av = nodes_[n.a].value;
          acc_scaled(n.a, 2.0 * gi.value(), av.data(), av.numel());
        }
        break;
    }
  }
  return g;
}

}  // namespace flowmatch
