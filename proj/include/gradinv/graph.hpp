#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gradinv/tensor.hpp"

namespace gradinv {

// Primitive operations. Everything differentiable in the library is built
// from these; each one's vector-Jacobian product is again expressed with
// them, so gradients of gradients stay inside the same graph.
enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatmul,
  kSigmoid,
  kTanh,
  kExp,
  kLog,
  kNeg,
  kScale,
  kSum,
  kMean,
  kReshape,
  kBroadcast,
  kSlice,
  kConcat,
  kMaxConst,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kMatmul: return "matmul";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kNeg: return "neg";
    case Op::kScale: return "scale";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kReshape: return "reshape";
    case Op::kBroadcast: return "broadcast";
    case Op::kSlice: return "slice";
    case Op::kConcat: return "concat";
    case Op::kMaxConst: return "max_const";
  }
  return "?";
}

struct NodeId {
  std::uint32_t index = UINT32_MAX;
  bool valid() const noexcept { return index != UINT32_MAX; }
  friend bool operator==(NodeId a, NodeId b) { return a.index == b.index; }
};

struct MatmulAttrs {
  bool trans_a = false;
  bool trans_b = false;
};

struct ScaleAttrs {
  double factor = 1.0;
};

struct SumAttrs {
  std::vector<std::size_t> axes;  // sorted, unique
  bool keepdims = false;
};

struct SliceRange {
  std::size_t start = 0;
  std::size_t stop = 0;  // exclusive
  std::size_t step = 1;
};

struct SliceAttrs {
  std::vector<SliceRange> ranges;  // one per dimension
};

struct ConcatAttrs {
  std::size_t axis = 0;
};

struct MaxConstAttrs {
  double floor = 0.0;
};

using Attrs = std::variant<std::monostate, MatmulAttrs, ScaleAttrs, SumAttrs,
                           SliceAttrs, ConcatAttrs, MaxConstAttrs>;

struct Node {
  Op op = Op::kLeaf;
  std::vector<NodeId> parents;
  Attrs attrs;
  Tensor value;
};

inline std::size_t slice_extent(const SliceRange& r) {
  if (r.stop <= r.start) return 0;
  return (r.stop - r.start - 1) / r.step + 1;
}

// Append-only record of a differentiable computation. Values are computed
// eagerly when a node is appended; parents always have smaller indices, so
// the node order is a topological order by construction. A Graph is
// single-threaded; distinct Graphs are independent.
class Graph {
 public:
  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[id.index]; }
  Op op(NodeId id) const { return nodes_[id.index].op; }
  const Tensor& value(NodeId id) const { return nodes_[id.index].value; }

  NodeId leaf(Tensor value) {
    return append(Op::kLeaf, {}, {}, std::move(value));
  }

  NodeId zeros(Shape shape) { return leaf(Tensor(std::move(shape))); }

  NodeId add(NodeId a, NodeId b) { return binary(Op::kAdd, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::kSub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::kMul, a, b); }
  NodeId div(NodeId a, NodeId b) { return binary(Op::kDiv, a, b); }

  NodeId matmul(NodeId a, NodeId b, bool trans_a = false,
                bool trans_b = false) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2) {
      throw ShapeError(std::string("matmul wants rank-2 operands, got ") +
                       shape_str(ta.shape()) + " and " + shape_str(tb.shape()));
    }
    const std::size_t m = trans_a ? ta.extent(1) : ta.extent(0);
    const std::size_t k = trans_a ? ta.extent(0) : ta.extent(1);
    const std::size_t kb = trans_b ? tb.extent(1) : tb.extent(0);
    const std::size_t n = trans_b ? tb.extent(0) : tb.extent(1);
    if (k != kb) {
      throw ShapeError("matmul inner extents differ: " + shape_str(ta.shape()) +
                       (trans_a ? "^T" : "") + " x " + shape_str(tb.shape()) +
                       (trans_b ? "^T" : ""));
    }
    Tensor out(Shape{m, n});
    const auto& A = ta.data();
    const auto& B = tb.data();
    auto& C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = &C[i * n];
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? A[p * m + i] : A[i * k + p];
        if (trans_b) {
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * B[j * k + p];
        } else {
          const double* brow = &B[p * n];
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
    return append(Op::kMatmul, {a, b}, MatmulAttrs{trans_a, trans_b},
                  std::move(out));
  }

  NodeId sigmoid(NodeId x) {
    return unary(Op::kSigmoid, x,
                 [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  }
  NodeId tanh(NodeId x) {
    return unary(Op::kTanh, x, [](double v) { return std::tanh(v); });
  }
  NodeId exp(NodeId x) {
    return unary(Op::kExp, x, [](double v) { return std::exp(v); });
  }
  NodeId log(NodeId x) {
    return unary(Op::kLog, x, [](double v) { return std::log(v); });
  }
  NodeId neg(NodeId x) {
    return unary(Op::kNeg, x, [](double v) { return -v; });
  }

  NodeId scale(NodeId x, double factor) {
    Tensor out(value(x).shape());
    const auto& in = value(x).data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * factor;
    return append(Op::kScale, {x}, ScaleAttrs{factor}, std::move(out));
  }

  NodeId max_const(NodeId x, double floor) {
    Tensor out(value(x).shape());
    const auto& in = value(x).data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::max(in[i], floor);
    return append(Op::kMaxConst, {x}, MaxConstAttrs{floor}, std::move(out));
  }

  // Sum over the given axes; empty axes means over everything (scalar out).
  NodeId sum(NodeId x, std::vector<std::size_t> axes = {},
             bool keepdims = false) {
    const Tensor& in = value(x);
    if (axes.empty()) {
      axes.resize(in.rank());
      for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    }
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    for (std::size_t a : axes) {
      if (a >= in.rank()) {
        throw ShapeError("sum axis " + std::to_string(a) +
                         " out of range for " + shape_str(in.shape()));
      }
    }
    Tensor out(reduced_shape(in.shape(), axes, keepdims));
    reduce_sum(in, axes, out);
    return append(Op::kSum, {x}, SumAttrs{std::move(axes), keepdims},
                  std::move(out));
  }

  // Mean over all elements.
  NodeId mean(NodeId x) {
    const Tensor& in = value(x);
    double total = 0.0;
    for (double v : in.data()) total += v;
    Tensor out = Tensor::scalar(total / static_cast<double>(in.numel()));
    return append(Op::kMean, {x}, {}, std::move(out));
  }

  NodeId reshape(NodeId x, Shape shape) {
    const Tensor& in = value(x);
    if (shape_numel(shape) != in.numel()) {
      throw ShapeError("reshape " + shape_str(in.shape()) + " -> " +
                       shape_str(shape) + " changes element count");
    }
    Tensor out(std::move(shape), in.data());
    return append(Op::kReshape, {x}, {}, std::move(out));
  }

  // Right-aligned broadcast: trailing dims must match or be 1 in the input.
  NodeId broadcast(NodeId x, Shape shape) {
    const Tensor& in = value(x);
    const std::size_t lead = shape.size() - std::min(in.rank(), shape.size());
    if (in.rank() > shape.size()) {
      throw ShapeError("broadcast cannot drop dims: " + shape_str(in.shape()) +
                       " -> " + shape_str(shape));
    }
    for (std::size_t i = 0; i < in.rank(); ++i) {
      const std::size_t from = in.extent(i);
      const std::size_t to = shape[lead + i];
      if (from != to && from != 1) {
        throw ShapeError("broadcast mismatch: " + shape_str(in.shape()) +
                         " -> " + shape_str(shape));
      }
    }
    Tensor out(shape);
    broadcast_fill(in, out);
    return append(Op::kBroadcast, {x}, {}, std::move(out));
  }

  NodeId slice(NodeId x, std::vector<SliceRange> ranges) {
    const Tensor& in = value(x);
    if (ranges.size() != in.rank()) {
      throw ShapeError("slice wants one range per dim of " +
                       shape_str(in.shape()));
    }
    Shape out_shape(ranges.size());
    for (std::size_t d = 0; d < ranges.size(); ++d) {
      const SliceRange& r = ranges[d];
      if (r.step == 0 || r.stop > in.extent(d) || r.start >= r.stop) {
        throw ShapeError("slice range [" + std::to_string(r.start) + "," +
                         std::to_string(r.stop) + ":" + std::to_string(r.step) +
                         ") invalid for dim " + std::to_string(d) + " of " +
                         shape_str(in.shape()));
      }
      out_shape[d] = slice_extent(r);
    }
    Tensor out(out_shape);
    copy_slice(in, ranges, out);
    return append(Op::kSlice, {x}, SliceAttrs{std::move(ranges)},
                  std::move(out));
  }

  NodeId concat(std::span<const NodeId> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const Tensor& first = value(parts[0]);
    if (axis >= first.rank()) {
      throw ShapeError("concat axis " + std::to_string(axis) +
                       " out of range for " + shape_str(first.shape()));
    }
    Shape out_shape = first.shape();
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const Tensor& t = value(parts[i]);
      if (t.rank() != first.rank()) {
        throw ShapeError("concat rank mismatch");
      }
      for (std::size_t d = 0; d < t.rank(); ++d) {
        if (d == axis) continue;
        if (t.extent(d) != first.extent(d)) {
          throw ShapeError("concat extents differ off-axis: " +
                           shape_str(first.shape()) + " vs " +
                           shape_str(t.shape()));
        }
      }
      out_shape[axis] += t.extent(axis);
    }
    Tensor out(out_shape);
    // Copy block-wise: outer = dims before axis, inner = dims after.
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
    for (std::size_t d = axis + 1; d < out_shape.size(); ++d)
      inner *= out_shape[d];
    const std::size_t out_row = out_shape[axis] * inner;
    std::size_t offset = 0;
    for (NodeId p : parts) {
      const Tensor& t = value(p);
      const std::size_t part_row = t.extent(axis) * inner;
      for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(t.data().begin() + o * part_row, part_row,
                    out.data().begin() + o * out_row + offset);
      }
      offset += part_row;
    }
    return append(Op::kConcat, {parts.begin(), parts.end()},
                  ConcatAttrs{axis}, std::move(out));
  }

  NodeId concat(std::initializer_list<NodeId> parts, std::size_t axis) {
    return concat(std::span<const NodeId>(parts.begin(), parts.size()), axis);
  }

  // Reverse-mode gradients of a scalar node. Results are themselves graph
  // nodes, so a second backward over them yields second-order derivatives.
  // Nodes unreachable from `output` get a zero gradient.
  std::vector<NodeId> backward_nodes(NodeId output,
                                     std::span<const NodeId> wrt) {
    const Tensor& out_val = value(output);
    if (!out_val.is_scalar()) {
      throw ShapeError("backward needs a scalar output, got " +
                       shape_str(out_val.shape()));
    }
    const std::size_t top = output.index;
    std::vector<char> needed(top + 1, 0);
    needed[top] = 1;
    for (std::size_t k = top + 1; k-- > 0;) {
      if (!needed[k]) continue;
      for (NodeId p : nodes_[k].parents) needed[p.index] = 1;
    }
    std::vector<NodeId> adjoint(top + 1, NodeId{});
    adjoint[top] = leaf(Tensor(out_val.shape(), 1.0));
    for (std::size_t k = top + 1; k-- > 0;) {
      if (!needed[k] || !adjoint[k].valid()) continue;
      propagate(NodeId{static_cast<std::uint32_t>(k)}, adjoint[k], adjoint);
    }
    std::vector<NodeId> grads;
    grads.reserve(wrt.size());
    for (NodeId w : wrt) {
      if (w.index <= top && adjoint[w.index].valid()) {
        grads.push_back(adjoint[w.index]);
      } else {
        grads.push_back(zeros(value(w).shape()));
      }
    }
    return grads;
  }

  std::vector<Tensor> backward(NodeId output, std::span<const NodeId> wrt) {
    std::vector<NodeId> ids = backward_nodes(output, wrt);
    std::vector<Tensor> out;
    out.reserve(ids.size());
    for (NodeId id : ids) out.push_back(value(id));
    return out;
  }

 private:
  NodeId append(Op op, std::vector<NodeId> parents, Attrs attrs,
                Tensor value) {
    nodes_.push_back(
        Node{op, std::move(parents), std::move(attrs), std::move(value)});
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <typename F>
  NodeId unary(Op op, NodeId x, F f) {
    const Tensor& in = value(x);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out[i] = f(in[i]);
    return append(op, {x}, {}, std::move(out));
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) {
      throw ShapeError(std::string(op_name(op)) + " shape mismatch: " +
                       shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
    }
    Tensor out(ta.shape());
    const auto& x = ta.data();
    const auto& y = tb.data();
    auto& z = out.data();
    switch (op) {
      case Op::kAdd:
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
        break;
      case Op::kSub:
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] - y[i];
        break;
      case Op::kMul:
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
        break;
      case Op::kDiv:
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] / y[i];
        break;
      default:
        throw Error("not a binary op");
    }
    return append(op, {a, b}, {}, std::move(out));
  }

  static Shape reduced_shape(const Shape& in, const std::vector<std::size_t>& axes,
                             bool keepdims) {
    Shape out;
    std::size_t ai = 0;
    for (std::size_t d = 0; d < in.size(); ++d) {
      const bool reduced = ai < axes.size() && axes[ai] == d;
      if (reduced) {
        ++ai;
        if (keepdims) out.push_back(1);
      } else {
        out.push_back(in[d]);
      }
    }
    return out;
  }

  static void reduce_sum(const Tensor& in, const std::vector<std::size_t>& axes,
                         Tensor& out) {
    const Shape& shape = in.shape();
    std::vector<char> is_reduced(shape.size(), 0);
    for (std::size_t a : axes) is_reduced[a] = 1;
    // Strides into the output for the kept dims.
    std::vector<std::size_t> out_stride(shape.size(), 0);
    std::size_t acc = 1;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (!is_reduced[d]) {
        out_stride[d] = acc;
        acc *= shape[d];
      }
    }
    std::vector<std::size_t> idx(shape.size(), 0);
    std::size_t out_off = 0;
    for (std::size_t flat = 0; flat < in.numel(); ++flat) {
      out[out_off] += in[flat];
      for (std::size_t d = shape.size(); d-- > 0;) {
        out_off += out_stride[d];
        if (++idx[d] < shape[d]) break;
        idx[d] = 0;
        out_off -= out_stride[d] * shape[d];
      }
    }
  }

  static void broadcast_fill(const Tensor& in, Tensor& out) {
    const Shape& os = out.shape();
    const std::size_t lead = os.size() - in.rank();
    std::vector<std::size_t> in_strides = strides_of(in.shape());
    std::vector<std::size_t> step(os.size(), 0);
    for (std::size_t d = 0; d < in.rank(); ++d) {
      step[lead + d] = in.extent(d) == 1 ? 0 : in_strides[d];
    }
    std::vector<std::size_t> idx(os.size(), 0);
    std::size_t in_off = 0;
    for (std::size_t flat = 0; flat < out.numel(); ++flat) {
      out[flat] = in[in_off];
      for (std::size_t d = os.size(); d-- > 0;) {
        in_off += step[d];
        if (++idx[d] < os[d]) break;
        idx[d] = 0;
        in_off -= step[d] * os[d];
      }
    }
  }

  static void copy_slice(const Tensor& in, const std::vector<SliceRange>& ranges,
                         Tensor& out) {
    const std::vector<std::size_t> in_strides = strides_of(in.shape());
    const Shape& os = out.shape();
    std::size_t base = 0;
    std::vector<std::size_t> step(os.size(), 0);
    for (std::size_t d = 0; d < os.size(); ++d) {
      base += ranges[d].start * in_strides[d];
      step[d] = ranges[d].step * in_strides[d];
    }
    std::vector<std::size_t> idx(os.size(), 0);
    std::size_t in_off = base;
    for (std::size_t flat = 0; flat < out.numel(); ++flat) {
      out[flat] = in[in_off];
      for (std::size_t d = os.size(); d-- > 0;) {
        in_off += step[d];
        if (++idx[d] < os[d]) break;
        idx[d] = 0;
        in_off -= step[d] * os[d];
      }
    }
  }

  void accumulate(std::vector<NodeId>& adjoint, NodeId parent,
                  NodeId contribution) {
    NodeId& slot = adjoint[parent.index];
    slot = slot.valid() ? add(slot, contribution) : contribution;
  }

  // Contribution of `node`'s adjoint to its parents' adjoints. Every rule
  // below emits only primitive ops, which is what keeps the graph closed
  // under differentiation. Node fields are copied up front: emitting ops
  // appends to nodes_ and may reallocate it.
  void propagate(NodeId id, NodeId g, std::vector<NodeId>& adjoint) {
    const Op op = nodes_[id.index].op;
    const std::vector<NodeId> parents = nodes_[id.index].parents;
    const Attrs attrs = nodes_[id.index].attrs;
    const Shape out_shape = nodes_[id.index].value.shape();
    switch (op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        accumulate(adjoint, parents[0], g);
        accumulate(adjoint, parents[1], g);
        break;
      }
      case Op::kSub: {
        accumulate(adjoint, parents[0], g);
        accumulate(adjoint, parents[1], neg(g));
        break;
      }
      case Op::kMul: {
        const NodeId a = parents[0], b = parents[1];
        accumulate(adjoint, a, mul(g, b));
        accumulate(adjoint, b, mul(g, a));
        break;
      }
      case Op::kDiv: {
        const NodeId a = parents[0], b = parents[1];
        accumulate(adjoint, a, div(g, b));
        accumulate(adjoint, b, neg(div(mul(g, a), mul(b, b))));
        break;
      }
      case Op::kMatmul: {
        const auto at = std::get<MatmulAttrs>(attrs);
        const NodeId a = parents[0], b = parents[1];
        if (!at.trans_a && !at.trans_b) {
          accumulate(adjoint, a, matmul(g, b, false, true));
          accumulate(adjoint, b, matmul(a, g, true, false));
        } else if (at.trans_a && !at.trans_b) {
          accumulate(adjoint, a, matmul(b, g, false, true));
          accumulate(adjoint, b, matmul(a, g, false, false));
        } else if (!at.trans_a && at.trans_b) {
          accumulate(adjoint, a, matmul(g, b, false, false));
          accumulate(adjoint, b, matmul(g, a, true, false));
        } else {
          accumulate(adjoint, a, matmul(b, g, true, true));
          accumulate(adjoint, b, matmul(g, a, true, true));
        }
        break;
      }
      case Op::kSigmoid: {
        // d/dx sigma = s - s^2
        accumulate(adjoint, parents[0], mul(g, sub(id, mul(id, id))));
        break;
      }
      case Op::kTanh: {
        // d/dx tanh = 1 - t^2, folded as g - g*t^2
        accumulate(adjoint, parents[0], sub(g, mul(g, mul(id, id))));
        break;
      }
      case Op::kExp: {
        accumulate(adjoint, parents[0], mul(g, id));
        break;
      }
      case Op::kLog: {
        accumulate(adjoint, parents[0], div(g, parents[0]));
        break;
      }
      case Op::kNeg: {
        accumulate(adjoint, parents[0], neg(g));
        break;
      }
      case Op::kScale: {
        const double f = std::get<ScaleAttrs>(attrs).factor;
        accumulate(adjoint, parents[0], scale(g, f));
        break;
      }
      case Op::kSum: {
        const auto at = std::get<SumAttrs>(attrs);
        const Shape in_shape = value(parents[0]).shape();
        NodeId gk = g;
        if (!at.keepdims) {
          gk = reshape(g, reduced_shape(in_shape, at.axes, true));
        }
        accumulate(adjoint, parents[0], broadcast(gk, in_shape));
        break;
      }
      case Op::kMean: {
        const Shape in_shape = value(parents[0]).shape();
        const double inv = 1.0 / static_cast<double>(shape_numel(in_shape));
        accumulate(adjoint, parents[0], broadcast(scale(g, inv), in_shape));
        break;
      }
      case Op::kReshape: {
        const Shape in_shape = value(parents[0]).shape();
        accumulate(adjoint, parents[0], reshape(g, in_shape));
        break;
      }
      case Op::kBroadcast: {
        const Shape in_shape = value(parents[0]).shape();
        const std::size_t lead = out_shape.size() - in_shape.size();
        std::vector<std::size_t> axes;
        for (std::size_t d = 0; d < out_shape.size(); ++d) {
          if (d < lead || (in_shape[d - lead] == 1 && out_shape[d] != 1)) {
            axes.push_back(d);
          }
        }
        NodeId s = axes.empty() ? g : sum(g, axes, true);
        accumulate(adjoint, parents[0], reshape(s, in_shape));
        break;
      }
      case Op::kSlice: {
        accumulate(adjoint, parents[0],
                   unslice(g, std::get<SliceAttrs>(attrs).ranges,
                           value(parents[0]).shape(), out_shape));
        break;
      }
      case Op::kConcat: {
        const std::size_t axis = std::get<ConcatAttrs>(attrs).axis;
        std::size_t offset = 0;
        for (NodeId p : parents) {
          const Shape pshape = value(p).shape();
          std::vector<SliceRange> ranges(pshape.size());
          for (std::size_t d = 0; d < pshape.size(); ++d) {
            ranges[d] = d == axis
                            ? SliceRange{offset, offset + pshape[d], 1}
                            : SliceRange{0, out_shape[d], 1};
          }
          accumulate(adjoint, p, slice(g, std::move(ranges)));
          offset += pshape[axis];
        }
        break;
      }
      case Op::kMaxConst: {
        // Subgradient: pass-through where the input exceeds the floor.
        const double floor = std::get<MaxConstAttrs>(attrs).floor;
        const Tensor& in = value(parents[0]);
        Tensor mask(in.shape());
        for (std::size_t i = 0; i < in.numel(); ++i) {
          mask[i] = in[i] > floor ? 1.0 : 0.0;
        }
        const NodeId mask_leaf = leaf(std::move(mask));
        accumulate(adjoint, parents[0], mul(g, mask_leaf));
        break;
      }
    }
  }

  // Adjoint of a slice: route g back into a zero tensor of the input's
  // shape, one dimension at a time (dilate strided dims, pad the rest).
  NodeId unslice(NodeId g, const std::vector<SliceRange> ranges,
                 const Shape in_shape, const Shape out_extents) {
    NodeId cur = g;
    for (std::size_t d = 0; d < ranges.size(); ++d) {
      const SliceRange& r = ranges[d];
      const std::size_t n = out_extents[d];
      Shape cur_shape = value(cur).shape();
      if (r.step > 1 && n > 1) {
        // Dilate: [.., n, ..] -> [.., (n-1)*step+1, ..]
        Shape split = cur_shape;
        split.insert(split.begin() + d + 1, 1);
        cur = reshape(cur, split);
        Shape zshape = split;
        zshape[d + 1] = r.step - 1;
        cur = concat({cur, zeros(zshape)}, d + 1);
        Shape merged = cur_shape;
        merged[d] = n * r.step;
        cur = reshape(cur, merged);
        std::vector<SliceRange> trim(merged.size());
        for (std::size_t t = 0; t < merged.size(); ++t) {
          trim[t] = SliceRange{0, merged[t], 1};
        }
        trim[d].stop = (n - 1) * r.step + 1;
        cur = slice(cur, std::move(trim));
        cur_shape[d] = (n - 1) * r.step + 1;
      }
      const std::size_t covered = r.step > 1 ? (n - 1) * r.step + 1 : n;
      const std::size_t left = r.start;
      const std::size_t right = in_shape[d] - r.start - covered;
      if (left > 0 || right > 0) {
        std::vector<NodeId> parts;
        if (left > 0) {
          Shape s = cur_shape;
          s[d] = left;
          parts.push_back(zeros(s));
        }
        parts.push_back(cur);
        if (right > 0) {
          Shape s = cur_shape;
          s[d] = right;
          parts.push_back(zeros(s));
        }
        cur = concat(std::span<const NodeId>(parts), d);
        cur_shape[d] = in_shape[d];
      }
    }
    return cur;
  }

  std::deque<Node> nodes_;
};

}  // namespace gradinv
