#pragma once

#include <vector>

#include "gradinv/graph.hpp"

namespace gradinv::nn {

inline std::vector<SliceRange> full_ranges(const Shape& shape) {
  std::vector<SliceRange> r(shape.size());
  for (std::size_t d = 0; d < shape.size(); ++d) {
    r[d] = SliceRange{0, shape[d], 1};
  }
  return r;
}

// Zero-pad the two trailing (spatial) dims of a [1,C,H,W] tensor.
inline NodeId pad2d(Graph& g, NodeId x, std::size_t pad) {
  if (pad == 0) return x;
  Shape s = g.value(x).shape();
  Shape rows = s;
  rows[2] = pad;
  x = g.concat({g.zeros(rows), x, g.zeros(rows)}, 2);
  s[2] += 2 * pad;
  Shape cols = s;
  cols[3] = pad;
  x = g.concat({g.zeros(cols), x, g.zeros(cols)}, 3);
  return x;
}

// 2-D cross-correlation (no kernel flip) of a [1,Cin,H,W] input with a
// [Cout,Cin,K,K] kernel, built from slice/matmul/concat primitives. One
// matmul per kernel offset: out[co,i,j] = sum_{ci,ki,kj} k[co,ci,ki,kj] *
// xp[ci, i*s+ki, j*s+kj].
inline NodeId conv2d(Graph& g, NodeId x, NodeId kernel, std::size_t stride,
                     std::size_t pad) {
  const Tensor& xv = g.value(x);
  const Tensor& kv = g.value(kernel);
  if (xv.rank() != 4 || kv.rank() != 4) {
    throw ShapeError("conv2d wants [1,C,H,W] input and [Co,Ci,K,K] kernel, got " +
                     shape_str(xv.shape()) + " and " + shape_str(kv.shape()));
  }
  if (xv.extent(0) != 1) {
    throw ShapeError("conv2d supports a single image, got batch " +
                     std::to_string(xv.extent(0)));
  }
  if (xv.extent(1) != kv.extent(1)) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(xv.shape()) +
                     " vs kernel " + shape_str(kv.shape()));
  }
  const std::size_t cin = xv.extent(1);
  const std::size_t cout = kv.extent(0);
  const std::size_t kh = kv.extent(2);
  const std::size_t kw = kv.extent(3);
  const std::size_t hp = xv.extent(2) + 2 * pad;
  const std::size_t wp = xv.extent(3) + 2 * pad;
  if (hp < kh || wp < kw) {
    throw ShapeError("conv2d input " + shape_str(xv.shape()) +
                     " too small for kernel " + shape_str(kv.shape()) +
                     " with pad " + std::to_string(pad));
  }
  const std::size_t hout = (hp - kh) / stride + 1;
  const std::size_t wout = (wp - kw) / stride + 1;

  const NodeId xp = pad2d(g, x, pad);
  NodeId acc{};
  for (std::size_t ki = 0; ki < kh; ++ki) {
    for (std::size_t kj = 0; kj < kw; ++kj) {
      NodeId patch = g.slice(
          xp, {SliceRange{0, 1, 1}, SliceRange{0, cin, 1},
               SliceRange{ki, ki + (hout - 1) * stride + 1, stride},
               SliceRange{kj, kj + (wout - 1) * stride + 1, stride}});
      patch = g.reshape(patch, {cin, hout * wout});
      NodeId ktap = g.slice(kernel, {SliceRange{0, cout, 1},
                                     SliceRange{0, cin, 1},
                                     SliceRange{ki, ki + 1, 1},
                                     SliceRange{kj, kj + 1, 1}});
      ktap = g.reshape(ktap, {cout, cin});
      const NodeId term = g.matmul(ktap, patch);
      acc = acc.valid() ? g.add(acc, term) : term;
    }
  }
  return g.reshape(acc, {1, cout, hout, wout});
}

// 2x2 average pooling, stride 2, on [1,C,H,W]; H and W must be even.
inline NodeId avgpool2(Graph& g, NodeId x) {
  const Shape xs = g.value(x).shape();
  if (xs.size() != 4) {
    throw ShapeError("avgpool2 wants [1,C,H,W], got " + shape_str(xs));
  }
  const std::size_t c = xs[1], h = xs[2], w = xs[3];
  if (h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0) {
    throw ShapeError("avgpool2 needs even spatial dims, got " + shape_str(xs));
  }
  auto corner = [&](std::size_t di, std::size_t dj) {
    return g.slice(x, {SliceRange{0, 1, 1}, SliceRange{0, c, 1},
                       SliceRange{di, h, 2}, SliceRange{dj, w, 2}});
  };
  const NodeId s = g.add(g.add(corner(0, 0), corner(0, 1)),
                         g.add(corner(1, 0), corner(1, 1)));
  return g.scale(s, 0.25);
}

// Fully connected layer on a [1,in] row: y = x W^T + b with W [out,in].
inline NodeId dense(Graph& g, NodeId x, NodeId weight, NodeId bias) {
  const std::size_t out = g.value(weight).extent(0);
  NodeId y = g.matmul(x, weight, false, true);
  return g.add(y, g.reshape(bias, {1, out}));
}

// Conv bias: [1,C,H,W] + per-channel bias [C].
inline NodeId add_channel_bias(Graph& g, NodeId x, NodeId bias) {
  const Shape s = g.value(x).shape();
  const NodeId b = g.reshape(bias, {s[1], 1, 1});
  return g.add(x, g.broadcast(b, s));
}

inline NodeId softplus(Graph& g, NodeId x) {
  const Shape s = g.value(x).shape();
  return g.log(g.add(g.exp(x), g.leaf(Tensor(s, 1.0))));
}

// Softmax over a vector [C]. The max of the current values is subtracted
// as a detached constant; softmax is shift-invariant, so this changes no
// derivative while keeping exp() in range.
inline NodeId softmax(Graph& g, NodeId z) {
  const Shape zs = g.value(z).shape();
  const double zmax = g.value(z).max();
  const NodeId shift = g.broadcast(g.leaf(Tensor::scalar(zmax)), zs);
  const NodeId e = g.exp(g.sub(z, shift));
  return g.div(e, g.broadcast(g.sum(e), zs));
}

inline NodeId log_softmax(Graph& g, NodeId z) {
  const Shape shape = g.value(z).shape();
  const double zmax = g.value(z).max();
  const NodeId shift = g.broadcast(g.leaf(Tensor::scalar(zmax)), shape);
  const NodeId zs = g.sub(z, shift);
  const NodeId lse = g.log(g.sum(g.exp(zs)));
  return g.sub(zs, g.broadcast(lse, shape));
}

// Cross-entropy of a class distribution against logits:
// -sum_c target_c * log softmax(logits)_c. Smooth in both arguments.
inline NodeId cross_entropy(Graph& g, NodeId logits, NodeId target_probs) {
  return g.neg(g.sum(g.mul(target_probs, log_softmax(g, logits))));
}

}  // namespace gradinv::nn
