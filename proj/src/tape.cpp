#include "lga/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace lga {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "subtract";
    case Op::Mul: return "multiply";
    case Op::Div: return "divide";
    case Op::MatMul: return "matmul";
    case Op::Scale: return "scale";
    case Op::AddConst: return "add-constant";
    case Op::Neg: return "negate";
    case Op::Exp: return "exp";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Square: return "square";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Reshape: return "reshape";
    case Op::Concat: return "concat";
    case Op::BroadcastTo: return "broadcast-to";
    case Op::Max: return "max";
    case Op::SoftmaxCE: return "softmax-cross-entropy";
    case Op::SmoothL1: return "smooth-l1";
  }
  return "?";
}

namespace {

using Shape4 = std::array<std::size_t, 4>;

Shape4 pad4(const std::vector<std::size_t>& s) {
  Shape4 p{1, 1, 1, 1};
  for (std::size_t i = 0; i < s.size(); ++i) p[4 - s.size() + i] = s[i];
  return p;
}

// Trailing-axis broadcast: each aligned pair of extents must be equal or one
// of them 1. Returns the broadcast shape with the larger rank.
bool broadcast_shape(const std::vector<std::size_t>& a,
                     const std::vector<std::size_t>& b,
                     std::vector<std::size_t>& out) {
  std::size_t r = std::max(a.size(), b.size());
  out.assign(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
    std::size_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (ea != eb && ea != 1 && eb != 1) return false;
    out[r - 1 - i] = std::max(ea, eb);
  }
  return true;
}

// Element strides of `in` viewed inside broadcast shape `out` (0 on broadcast axes).
Shape4 bcast_strides(const std::vector<std::size_t>& in, const Shape4& out4) {
  Shape4 in4 = pad4(in);
  Shape4 st{0, 0, 0, 0};
  std::size_t acc = 1;
  for (int d = 3; d >= 0; --d) {
    st[d] = (in4[d] == 1 && out4[d] != 1) ? 0 : acc;
    acc *= in4[d];
  }
  return st;
}

// Iterate the padded output shape, handing (out_index, a_index, b_index) to body.
template <class Body>
void for_bcast(const Shape4& out4, const Shape4& sa, const Shape4& sb, Body body) {
  std::size_t io = 0;
  for (std::size_t i0 = 0; i0 < out4[0]; ++i0)
    for (std::size_t i1 = 0; i1 < out4[1]; ++i1)
      for (std::size_t i2 = 0; i2 < out4[2]; ++i2) {
        std::size_t base_a = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
        std::size_t base_b = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
        for (std::size_t i3 = 0; i3 < out4[3]; ++i3, ++io)
          body(io, base_a + i3 * sa[3], base_b + i3 * sb[3]);
      }
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit axis_split(const std::vector<std::size_t>& s, int axis) {
  AxisSplit a{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) a.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

std::vector<std::size_t> drop_axis(const std::vector<std::size_t>& s, int axis) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (static_cast<int>(i) != axis) out.push_back(s[i]);
  if (out.empty()) out.push_back(1);
  return out;
}

std::vector<double> softmax_of(const Tensor& logits) {
  std::size_t n = logits.size();
  double m = logits[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
  std::vector<double> p(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

[[noreturn]] void fail(Op op, const std::string& what) {
  throw std::invalid_argument(std::string(op_name(op)) + ": " + what);
}

}  // namespace

NodeId Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{Op::Leaf, {}, {}, std::move(value), requires_grad});
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::reshape(NodeId a, std::vector<std::size_t> shape) {
  Attrs at;
  at.shape = std::move(shape);
  return apply(Op::Reshape, {a}, std::move(at));
}

NodeId Tape::broadcast_to(NodeId a, std::vector<std::size_t> shape) {
  Attrs at;
  at.shape = std::move(shape);
  return apply(Op::BroadcastTo, {a}, std::move(at));
}

NodeId Tape::concat(const std::vector<NodeId>& parts, int axis) {
  Attrs at;
  at.axis = axis;
  return apply(Op::Concat, parts, std::move(at));
}

NodeId Tape::apply(Op op, const std::vector<NodeId>& inputs, Attrs attrs) {
  if (op == Op::Leaf) throw std::invalid_argument("apply: leaf nodes use Tape::leaf");
  for (NodeId id : inputs)
    if (id >= nodes_.size()) throw std::invalid_argument("apply: input node not on tape");
  Tensor value = forward(op, inputs, attrs);
  nodes_.push_back(Node{op, inputs, std::move(attrs), std::move(value), false});
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor Tape::forward(Op op, const std::vector<NodeId>& in, const Attrs& attrs) const {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) fail(op, "expects " + std::to_string(n) + " inputs");
  };
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      arity(2);
      const Tensor& a = value(in[0]);
      const Tensor& b = value(in[1]);
      if (a.same_shape(b)) {
        std::vector<double> out(a.size());
        const double* pa = a.data();
        const double* pb = b.data();
        switch (op) {
          case Op::Add: for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i]; break;
          case Op::Sub: for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i]; break;
          case Op::Mul: for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i]; break;
          default:      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] / pb[i]; break;
        }
        return Tensor::from_computed(a.shape(), std::move(out));
      }
      std::vector<std::size_t> os;
      if (!broadcast_shape(a.shape(), b.shape(), os))
        fail(op, "incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
      Shape4 o4 = pad4(os);
      Shape4 sa = bcast_strides(a.shape(), o4);
      Shape4 sb = bcast_strides(b.shape(), o4);
      std::vector<double> out(Tensor::extent_product(os));
      const double* pa = a.data();
      const double* pb = b.data();
      switch (op) {
        case Op::Add: for_bcast(o4, sa, sb, [&](std::size_t io, std::size_t ia, std::size_t ib) { out[io] = pa[ia] + pb[ib]; }); break;
        case Op::Sub: for_bcast(o4, sa, sb, [&](std::size_t io, std::size_t ia, std::size_t ib) { out[io] = pa[ia] - pb[ib]; }); break;
        case Op::Mul: for_bcast(o4, sa, sb, [&](std::size_t io, std::size_t ia, std::size_t ib) { out[io] = pa[ia] * pb[ib]; }); break;
        default:      for_bcast(o4, sa, sb, [&](std::size_t io, std::size_t ia, std::size_t ib) { out[io] = pa[ia] / pb[ib]; }); break;
      }
      return Tensor::from_computed(os, std::move(out));
    }
    case Op::MatMul: {
      arity(2);
      const Tensor& a = value(in[0]);
      const Tensor& b = value(in[1]);
      if (a.rank() != 2 || b.rank() != 2) fail(op, "requires rank-2 operands");
      std::size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
      if (k != k2)
        fail(op, "inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
      std::vector<double> out(m * n, 0.0);
      const double* pa = a.data();
      const double* pb = b.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        double* orow = out.data() + i * n;
        if (n == 1) {
          // Four-way unrolled dot product: fixed reassociation, so results
          // stay deterministic while the partial sums pipeline.
          double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
          std::size_t kk = 0;
          for (; kk + 4 <= k; kk += 4) {
            a0 += arow[kk] * pb[kk];
            a1 += arow[kk + 1] * pb[kk + 1];
            a2 += arow[kk + 2] * pb[kk + 2];
            a3 += arow[kk + 3] * pb[kk + 3];
          }
          for (; kk < k; ++kk) a0 += arow[kk] * pb[kk];
          orow[0] = (a0 + a1) + (a2 + a3);
        } else {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            const double* brow = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
          }
        }
      }
      return Tensor::from_computed({m, n}, std::move(out));
    }
    case Op::Scale:
    case Op::AddConst:
    case Op::Neg:
    case Op::Exp:
    case Op::Tanh:
    case Op::Relu:
    case Op::Square: {
      arity(1);
      const Tensor& a = value(in[0]);
      std::vector<double> out(a.size());
      const double* pa = a.data();
      double c = attrs.scalar;
      switch (op) {
        case Op::Scale:    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * c; break;
        case Op::AddConst: for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + c; break;
        case Op::Neg:      for (std::size_t i = 0; i < out.size(); ++i) out[i] = -pa[i]; break;
        case Op::Exp:      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(pa[i]); break;
        case Op::Tanh:     for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(pa[i]); break;
        case Op::Relu:     for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] > 0.0 ? pa[i] : 0.0; break;
        default:           for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pa[i]; break;
      }
      return Tensor::from_computed(a.shape(), std::move(out));
    }
    case Op::Sum:
    case Op::Mean: {
      arity(1);
      const Tensor& a = value(in[0]);
      if (attrs.axis == -1) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
        if (op == Op::Mean) acc /= static_cast<double>(a.size());
        return Tensor::scalar(acc);
      }
      if (attrs.axis < 0 || attrs.axis >= static_cast<int>(a.rank()))
        fail(op, "axis out of range");
      AxisSplit sp = axis_split(a.shape(), attrs.axis);
      std::vector<double> out(sp.outer * sp.inner, 0.0);
      const double* pa = a.data();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t x = 0; x < sp.n; ++x)
          for (std::size_t i = 0; i < sp.inner; ++i)
            out[o * sp.inner + i] += pa[(o * sp.n + x) * sp.inner + i];
      if (op == Op::Mean)
        for (double& v : out) v /= static_cast<double>(sp.n);
      return Tensor::from_computed(drop_axis(a.shape(), attrs.axis), std::move(out));
    }
    case Op::Reshape: {
      arity(1);
      return value(in[0]).reshaped(attrs.shape);
    }
    case Op::Concat: {
      if (in.empty()) fail(op, "empty input list");
      const Tensor& first = value(in[0]);
      int ax = attrs.axis;
      if (ax < 0 || ax >= static_cast<int>(first.rank())) fail(op, "axis out of range");
      std::vector<std::size_t> os = first.shape();
      os[static_cast<std::size_t>(ax)] = 0;
      for (NodeId id : in) {
        const Tensor& t = value(id);
        if (t.rank() != first.rank()) fail(op, "rank mismatch");
        for (std::size_t d = 0; d < t.rank(); ++d)
          if (static_cast<int>(d) != ax && t.shape()[d] != first.shape()[d])
            fail(op, "non-concat extents differ");
        os[static_cast<std::size_t>(ax)] += t.shape()[static_cast<std::size_t>(ax)];
      }
      AxisSplit osp = axis_split(os, ax);
      std::vector<double> out(Tensor::extent_product(os));
      std::size_t off = 0;
      for (NodeId id : in) {
        const Tensor& t = value(id);
        std::size_t tn = t.shape()[static_cast<std::size_t>(ax)];
        const double* pt = t.data();
        for (std::size_t o = 0; o < osp.outer; ++o)
          std::copy(pt + o * tn * osp.inner, pt + (o + 1) * tn * osp.inner,
                    out.begin() + static_cast<std::ptrdiff_t>((o * osp.n + off) * osp.inner));
        off += tn;
      }
      return Tensor::from_computed(os, std::move(out));
    }
    case Op::BroadcastTo: {
      arity(1);
      const Tensor& a = value(in[0]);
      std::vector<std::size_t> os;
      if (!broadcast_shape(a.shape(), attrs.shape, os) || os != attrs.shape)
        fail(op, "cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(attrs.shape));
      Shape4 o4 = pad4(os);
      Shape4 sa = bcast_strides(a.shape(), o4);
      std::vector<double> out(Tensor::extent_product(os));
      const double* pa = a.data();
      for_bcast(o4, sa, sa, [&](std::size_t io, std::size_t ia, std::size_t) { out[io] = pa[ia]; });
      return Tensor::from_computed(os, std::move(out));
    }
    case Op::Max: {
      arity(2);
      const Tensor& a = value(in[0]);
      const Tensor& b = value(in[1]);
      if (!a.same_shape(b)) fail(op, "shape mismatch");
      std::vector<double> out(a.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] >= b[i] ? a[i] : b[i];
      return Tensor::from_computed(a.shape(), std::move(out));
    }
    case Op::SoftmaxCE: {
      arity(1);
      const Tensor& logits = value(in[0]);
      if (logits.rank() != 1) fail(op, "logits must be rank-1");
      if (attrs.label < 0 || attrs.label >= static_cast<int>(logits.size()))
        fail(op, "label out of range");
      double m = logits[0];
      for (std::size_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
      double z = 0.0;
      for (std::size_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - m);
      double loss = m + std::log(z) - logits[static_cast<std::size_t>(attrs.label)];
      return Tensor::scalar(std::max(loss, 0.0));
    }
    case Op::SmoothL1: {
      arity(1);
      const Tensor& pred = value(in[0]);
      if (!attrs.has_aux || !pred.same_shape(attrs.aux)) fail(op, "target shape mismatch");
      double beta = attrs.scalar;
      if (beta <= 0.0) fail(op, "beta must be positive");
      double acc = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - attrs.aux[i];
        double ad = std::abs(d);
        acc += ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
      }
      return Tensor::scalar(acc);
    }
    default:
      fail(op, "unknown op kind");
  }
}

// Reverse sweep over the adjoint buffers; `live[id]` marks buffers that have
// received a contribution (they are allocated lazily). Nodes with an entry in
// `external` accumulate straight into that caller-owned storage instead; the
// root adjoint is seeded with `seed`, which scales every leaf gradient by
// linearity.
void Tape::sweep(NodeId root, std::vector<std::vector<double>>& grad,
                 std::vector<bool>& live, const std::vector<double*>& external,
                 double seed) const {
  auto buf = [&](NodeId id) -> double* {
    if (!external.empty() && external[id]) {
      live[id] = true;
      return external[id];
    }
    if (!live[id]) {
      grad[id].assign(nodes_[id].value.size(), 0.0);
      live[id] = true;
    }
    return grad[id].data();
  };
  buf(root)[0] += seed;

  for (NodeId id = root + 1; id-- > 0;) {
    if (!live[id]) continue;
    const Node& n = nodes_[id];
    if (n.op == Op::Leaf) continue;
    const std::vector<double>& g = grad[id];

    switch (n.op) {
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        const Tensor& a = value(n.inputs[0]);
        const Tensor& b = value(n.inputs[1]);
        if (a.same_shape(b)) {
          double* ga = buf(n.inputs[0]);
          double* gb = buf(n.inputs[1]);
          const double* pa = a.data();
          const double* pb = b.data();
          switch (n.op) {
            case Op::Add:
              for (std::size_t i = 0; i < g.size(); ++i) { ga[i] += g[i]; gb[i] += g[i]; }
              break;
            case Op::Sub:
              for (std::size_t i = 0; i < g.size(); ++i) { ga[i] += g[i]; gb[i] -= g[i]; }
              break;
            case Op::Mul:
              for (std::size_t i = 0; i < g.size(); ++i) { ga[i] += g[i] * pb[i]; gb[i] += g[i] * pa[i]; }
              break;
            default:
              for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] / pb[i];
                gb[i] -= g[i] * pa[i] / (pb[i] * pb[i]);
              }
              break;
          }
        } else {
          Shape4 o4 = pad4(n.value.shape());
          Shape4 sa = bcast_strides(a.shape(), o4);
          Shape4 sb = bcast_strides(b.shape(), o4);
          double* ga = buf(n.inputs[0]);
          double* gb = buf(n.inputs[1]);
          const double* pa = a.data();
          const double* pb = b.data();
          switch (n.op) {
            case Op::Add:
              for_bcast(o4, sa, sb, [&](std::size_t io, std::size_t ia, std::size_t ib) { ga[ia] += g[io]; gb[ib] += g[io]; });
              break;
            case Op::Sub:
              for_bcast(o4, sa, sb, [&](std::size_t io, std::size_t ia, std::size_t ib) { ga[ia] += g[io]; gb[ib] -= g[io]; });
              break;
            case Op::Mul:
              for_bcast(o4, sa, sb, [&](std::size_t io, std::size_t ia, std::size_t ib) { ga[ia] += g[io] * pb[ib]; gb[ib] += g[io] * pa[ia]; });
              break;
            default:
              for_bcast(o4, sa, sb, [&](std::size_t io, std::size_t ia, std::size_t ib) {
                ga[ia] += g[io] / pb[ib];
                gb[ib] -= g[io] * pa[ia] / (pb[ib] * pb[ib]);
              });
              break;
          }
        }
        break;
      }
      case Op::MatMul: {
        const Tensor& a = value(n.inputs[0]);
        const Tensor& b = value(n.inputs[1]);
        std::size_t m = a.shape()[0], k = a.shape()[1], nn = b.shape()[1];
        double* ga = buf(n.inputs[0]);
        double* gb = buf(n.inputs[1]);
        const double* pa = a.data();
        const double* pb = b.data();
        // gA[i,kk] += sum_j g[i,j] B[kk,j];  gB[kk,j] += sum_i A[i,kk] g[i,j]
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data() + i * nn;
          const double* arow = pa + i * k;
          double* garow = ga + i * k;
          if (nn == 1) {
            double gv = grow[0];
            for (std::size_t kk = 0; kk < k; ++kk) {
              garow[kk] += gv * pb[kk];
              gb[kk] += gv * arow[kk];
            }
          } else {
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double* brow = pb + kk * nn;
              double* gbrow = gb + kk * nn;
              double av = arow[kk];
              double acc = 0.0;
              for (std::size_t j = 0; j < nn; ++j) {
                acc += grow[j] * brow[j];
                gbrow[j] += av * grow[j];
              }
              garow[kk] += acc;
            }
          }
        }
        break;
      }
      case Op::Scale: {
        double* ga = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.attrs.scalar;
        break;
      }
      case Op::AddConst: {
        double* ga = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::Neg: {
        double* ga = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
        break;
      }
      case Op::Exp: {
        double* ga = buf(n.inputs[0]);
        const double* out = n.value.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * out[i];
        break;
      }
      case Op::Tanh: {
        double* ga = buf(n.inputs[0]);
        const double* out = n.value.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - out[i] * out[i]);
        break;
      }
      case Op::Relu: {
        double* ga = buf(n.inputs[0]);
        const double* pin = value(n.inputs[0]).data();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (pin[i] > 0.0) ga[i] += g[i];
        break;
      }
      case Op::Square: {
        double* ga = buf(n.inputs[0]);
        const double* pin = value(n.inputs[0]).data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * pin[i] * g[i];
        break;
      }
      case Op::Sum:
      case Op::Mean: {
        const Tensor& a = value(n.inputs[0]);
        double* ga = buf(n.inputs[0]);
        if (n.attrs.axis == -1) {
          double gv = g[0];
          if (n.op == Op::Mean) gv /= static_cast<double>(a.size());
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gv;
        } else {
          AxisSplit sp = axis_split(a.shape(), n.attrs.axis);
          double inv = n.op == Op::Mean ? 1.0 / static_cast<double>(sp.n) : 1.0;
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t x = 0; x < sp.n; ++x)
              for (std::size_t i = 0; i < sp.inner; ++i)
                ga[(o * sp.n + x) * sp.inner + i] += g[o * sp.inner + i] * inv;
        }
        break;
      }
      case Op::Reshape: {
        double* ga = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::Concat: {
        AxisSplit osp = axis_split(n.value.shape(), n.attrs.axis);
        std::size_t off = 0;
        for (NodeId id2 : n.inputs) {
          const Tensor& t = value(id2);
          std::size_t tn = t.shape()[static_cast<std::size_t>(n.attrs.axis)];
          double* gi = buf(id2);
          for (std::size_t o = 0; o < osp.outer; ++o)
            for (std::size_t x = 0; x < tn * osp.inner; ++x)
              gi[o * tn * osp.inner + x] += g[(o * osp.n + off) * osp.inner + x];
          off += tn;
        }
        break;
      }
      case Op::BroadcastTo: {
        const Tensor& a = value(n.inputs[0]);
        Shape4 o4 = pad4(n.value.shape());
        Shape4 sa = bcast_strides(a.shape(), o4);
        double* ga = buf(n.inputs[0]);
        for_bcast(o4, sa, sa, [&](std::size_t io, std::size_t ia, std::size_t) { ga[ia] += g[io]; });
        break;
      }
      case Op::Max: {
        // Ties route to the first (lowest-index) input.
        const double* pa = value(n.inputs[0]).data();
        const double* pb = value(n.inputs[1]).data();
        double* ga = buf(n.inputs[0]);
        double* gb = buf(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (pa[i] >= pb[i]) ga[i] += g[i];
          else gb[i] += g[i];
        }
        break;
      }
      case Op::SoftmaxCE: {
        const Tensor& logits = value(n.inputs[0]);
        std::vector<double> p = softmax_of(logits);
        double* ga = buf(n.inputs[0]);
        double gv = g[0];
        for (std::size_t i = 0; i < p.size(); ++i)
          ga[i] += gv * (p[i] - (static_cast<int>(i) == n.attrs.label ? 1.0 : 0.0));
        break;
      }
      case Op::SmoothL1: {
        const Tensor& pred = value(n.inputs[0]);
        double* ga = buf(n.inputs[0]);
        double beta = n.attrs.scalar;
        double gv = g[0];
        for (std::size_t i = 0; i < pred.size(); ++i) {
          double d = pred[i] - n.attrs.aux[i];
          double dd = std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
          ga[i] += gv * dd;
        }
        break;
      }
      case Op::Leaf:
        break;
    }
  }
}

GradientMap Tape::backward(NodeId root) const {
  if (root >= nodes_.size()) throw std::invalid_argument("backward: root not on tape");
  if (!nodes_[root].value.is_scalar())
    throw std::invalid_argument("backward: root is not scalar-shaped");

  std::vector<std::vector<double>> grad(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  sweep(root, grad, live, {}, 1.0);

  GradientMap out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].op != Op::Leaf || !nodes_[id].requires_grad) continue;
    if (live[id])
      out.emplace(id, Tensor::from_computed(nodes_[id].value.shape(), std::move(grad[id])));
    else
      out.emplace(id, Tensor::zeros(nodes_[id].value.shape()));
  }
  return out;
}

void Tape::backward_accumulate(NodeId root,
                               const std::vector<std::pair<NodeId, double*>>& sinks,
                               double scale) const {
  if (root >= nodes_.size()) throw std::invalid_argument("backward: root not on tape");
  if (!nodes_[root].value.is_scalar())
    throw std::invalid_argument("backward: root is not scalar-shaped");

  // Leaf sinks accumulate in place during the sweep (with the root adjoint
  // seeded at `scale`); interior-node sinks fall back to a copy afterwards.
  std::vector<double*> external(nodes_.size(), nullptr);
  for (const auto& [id, dst] : sinks) {
    if (id >= nodes_.size()) throw std::invalid_argument("backward: sink not on tape");
    if (nodes_[id].op == Op::Leaf) external[id] = dst;
  }
  std::vector<std::vector<double>> grad(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  sweep(root, grad, live, external, scale);

  for (const auto& [id, dst] : sinks) {
    if (external[id] || !live[id]) continue;
    const std::vector<double>& g = grad[id];  // already scaled via the seed
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
}

std::vector<std::uint8_t> Tape::activation_pattern() const {
  std::vector<std::uint8_t> pat;
  for (const Node& n : nodes_) {
    if (n.op == Op::Relu) {
      const Tensor& in = value(n.inputs[0]);
      for (std::size_t i = 0; i < in.size(); ++i) pat.push_back(in[i] > 0.0 ? 1 : 0);
    } else if (n.op == Op::Max) {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      for (std::size_t i = 0; i < a.size(); ++i) pat.push_back(a[i] >= b[i] ? 1 : 0);
    } else if (n.op == Op::SmoothL1) {
      const Tensor& pred = value(n.inputs[0]);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - n.attrs.aux[i];
        pat.push_back(std::abs(d) < n.attrs.scalar ? 1 : (d > 0.0 ? 2 : 3));
      }
    }
  }
  return pat;
}

NodeId softmax_cross_entropy(Tape& tape, NodeId logits, int label) {
  Attrs a;
  a.label = label;
  return tape.apply(Op::SoftmaxCE, {logits}, std::move(a));
}

NodeId smooth_l1(Tape& tape, NodeId pred, const Tensor& target, double beta) {
  Attrs a;
  a.scalar = beta;
  a.aux = target;
  a.has_aux = true;
  return tape.apply(Op::SmoothL1, {pred}, std::move(a));
}

}  // namespace lga
