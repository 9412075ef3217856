#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "gradinv/graph.hpp"
#include "gradinv/nn.hpp"
#include "gradinv/rng.hpp"

namespace gradinv {

enum class Arch { kLenet5, kMlp, kTinyResnet };

enum class LayerKind : std::uint32_t {
  kConv = 0,
  kAvgPool = 1,
  kDense = 2,
  kActivation = 3,
  kFlatten = 4,
  kResidual = 5,
};

enum class Activation : std::uint32_t {
  kSigmoid = 0,
  kTanh = 1,
  kSoftplus = 2,
};

struct LayerSpec {
  LayerKind kind = LayerKind::kActivation;
  std::size_t out_channels = 0;  // conv / residual
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t units = 0;  // dense
  Activation act = Activation::kSigmoid;

  static LayerSpec conv(std::size_t out, std::size_t k, std::size_t stride = 1,
                        std::size_t pad = 0) {
    LayerSpec s;
    s.kind = LayerKind::kConv;
    s.out_channels = out;
    s.kernel = k;
    s.stride = stride;
    s.pad = pad;
    return s;
  }
  static LayerSpec avgpool() { return LayerSpec{LayerKind::kAvgPool}; }
  static LayerSpec dense(std::size_t units) {
    LayerSpec s;
    s.kind = LayerKind::kDense;
    s.units = units;
    return s;
  }
  static LayerSpec activation(Activation a) {
    LayerSpec s;
    s.kind = LayerKind::kActivation;
    s.act = a;
    return s;
  }
  static LayerSpec flatten() { return LayerSpec{LayerKind::kFlatten}; }
  static LayerSpec residual(std::size_t channels) {
    LayerSpec s;
    s.kind = LayerKind::kResidual;
    s.out_channels = channels;
    s.kernel = 3;
    s.pad = 1;
    return s;
  }
};

struct Model {
  std::vector<LayerSpec> layers;
  std::size_t in_channels = 1;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t classes = 0;

  Shape input_shape() const { return {in_channels, in_h, in_w}; }
};

// One parameterized layer: a weight tensor and a bias tensor.
struct ParamLayer {
  std::string name;
  Tensor weight;
  Tensor bias;
};

struct ModelParams {
  std::vector<ParamLayer> layers;

  std::size_t count() const {
    std::size_t n = 0;
    for (const ParamLayer& l : layers) n += l.weight.numel() + l.bias.numel();
    return n;
  }
};

// Per-layer gradients with the exact same shapes as ModelParams; this is
// what a federated client would share, and all an attacker observes.
struct GradientLayer {
  std::string name;
  Tensor weight;
  Tensor bias;

  std::size_t count() const { return weight.numel() + bias.numel(); }
};

struct GradientSet {
  std::vector<GradientLayer> layers;

  bool shapes_match(const ModelParams& params) const {
    if (layers.size() != params.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].name != params.layers[i].name ||
          !layers[i].weight.same_shape(params.layers[i].weight) ||
          !layers[i].bias.same_shape(params.layers[i].bias)) {
        return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    for (const GradientLayer& l : layers) {
      if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
    }
    return true;
  }
};

namespace detail {

struct Dims {
  std::size_t c, h, w;
  bool flat = false;
  std::size_t features = 0;
};

inline Dims walk_layer(const Model& model, const LayerSpec& l, Dims d,
                       const std::string& name) {
  switch (l.kind) {
    case LayerKind::kConv: {
      if (d.flat) throw ShapeError(name + ": conv after flatten");
      const std::size_t hp = d.h + 2 * l.pad;
      const std::size_t wp = d.w + 2 * l.pad;
      if (hp < l.kernel || wp < l.kernel) {
        throw ShapeError(name + ": input " + std::to_string(d.h) + "x" +
                         std::to_string(d.w) + " too small for the conv stack");
      }
      d.c = l.out_channels;
      d.h = (hp - l.kernel) / l.stride + 1;
      d.w = (wp - l.kernel) / l.stride + 1;
      return d;
    }
    case LayerKind::kResidual: {
      if (d.flat) throw ShapeError(name + ": residual after flatten");
      if (d.c != l.out_channels) {
        throw ShapeError(name + ": residual channels " +
                         std::to_string(l.out_channels) + " != input " +
                         std::to_string(d.c));
      }
      return d;  // 3x3 pad-1 convs preserve the shape
    }
    case LayerKind::kAvgPool: {
      if (d.flat) throw ShapeError(name + ": pool after flatten");
      if (d.h % 2 != 0 || d.w % 2 != 0 || d.h == 0 || d.w == 0) {
        throw ShapeError(name + ": input " + std::to_string(d.h) + "x" +
                         std::to_string(d.w) + " too small for the conv stack");
      }
      d.h /= 2;
      d.w /= 2;
      return d;
    }
    case LayerKind::kFlatten: {
      d.features = d.flat ? d.features : d.c * d.h * d.w;
      d.flat = true;
      return d;
    }
    case LayerKind::kDense: {
      if (!d.flat) throw ShapeError(name + ": dense before flatten");
      d.features = l.units;
      return d;
    }
    case LayerKind::kActivation:
      return d;
  }
  throw Error("unknown layer kind");
  (void)model;
}

inline std::string layer_name(const LayerSpec& l, std::size_t position) {
  switch (l.kind) {
    case LayerKind::kConv: return "conv" + std::to_string(position);
    case LayerKind::kResidual: return "res" + std::to_string(position);
    case LayerKind::kDense: return "fc" + std::to_string(position);
    case LayerKind::kAvgPool: return "pool" + std::to_string(position);
    case LayerKind::kFlatten: return "flatten" + std::to_string(position);
    case LayerKind::kActivation: return "act" + std::to_string(position);
  }
  return "layer" + std::to_string(position);
}

inline Tensor init_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = (rng.uniform01() * 2.0 - 1.0) * bound;
  return t;
}

}  // namespace detail

// Instantiates parameters for a model. Weights and biases are drawn
// uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline ModelParams init_params(const Model& model, Rng& rng) {
  ModelParams params;
  detail::Dims d{model.in_channels, model.in_h, model.in_w};
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    const std::string name = detail::layer_name(l, i + 1);
    switch (l.kind) {
      case LayerKind::kConv: {
        const std::size_t fan_in = d.c * l.kernel * l.kernel;
        params.layers.push_back(
            {name,
             detail::init_uniform(rng, {l.out_channels, d.c, l.kernel, l.kernel},
                                  fan_in),
             detail::init_uniform(rng, {l.out_channels}, fan_in)});
        break;
      }
      case LayerKind::kResidual: {
        const std::size_t fan_in = d.c * l.kernel * l.kernel;
        const Shape kshape{l.out_channels, d.c, l.kernel, l.kernel};
        params.layers.push_back(
            {name + ".conv1", detail::init_uniform(rng, kshape, fan_in),
             detail::init_uniform(rng, {l.out_channels}, fan_in)});
        params.layers.push_back(
            {name + ".conv2", detail::init_uniform(rng, kshape, fan_in),
             detail::init_uniform(rng, {l.out_channels}, fan_in)});
        break;
      }
      case LayerKind::kDense: {
        const std::size_t fan_in = d.features;
        params.layers.push_back(
            {name, detail::init_uniform(rng, {l.units, fan_in}, fan_in),
             detail::init_uniform(rng, {l.units}, fan_in)});
        break;
      }
      default:
        break;
    }
    d = detail::walk_layer(model, l, d, name);
  }
  return params;
}

inline Model make_lenet5(Shape in_shape, std::size_t classes) {
  Model m;
  m.in_channels = in_shape.at(0);
  m.in_h = in_shape.at(1);
  m.in_w = in_shape.at(2);
  m.classes = classes;
  if (m.in_h < 16 || m.in_w < 16) {
    throw ShapeError("lenet5 input " + std::to_string(m.in_h) + "x" +
                     std::to_string(m.in_w) +
                     " too small for the conv stack (needs >= 16x16)");
  }
  m.layers = {LayerSpec::conv(6, 5),
              LayerSpec::activation(Activation::kSigmoid),
              LayerSpec::avgpool(),
              LayerSpec::conv(16, 5),
              LayerSpec::activation(Activation::kSigmoid),
              LayerSpec::avgpool(),
              LayerSpec::flatten(),
              LayerSpec::dense(120),
              LayerSpec::activation(Activation::kSigmoid),
              LayerSpec::dense(84),
              LayerSpec::activation(Activation::kSigmoid),
              LayerSpec::dense(classes)};
  return m;
}

inline Model make_mlp(Shape in_shape, std::vector<std::size_t> hidden,
                      std::size_t classes) {
  Model m;
  m.in_channels = in_shape.at(0);
  m.in_h = in_shape.at(1);
  m.in_w = in_shape.at(2);
  m.classes = classes;
  m.layers.push_back(LayerSpec::flatten());
  for (std::size_t h : hidden) {
    m.layers.push_back(LayerSpec::dense(h));
    m.layers.push_back(LayerSpec::activation(Activation::kSigmoid));
  }
  m.layers.push_back(LayerSpec::dense(classes));
  return m;
}

// Small smooth residual network: a qualitative stand-in for deeper
// architectures, all-softplus so it stays twice differentiable.
inline Model make_tiny_resnet(Shape in_shape, std::size_t classes) {
  Model m;
  m.in_channels = in_shape.at(0);
  m.in_h = in_shape.at(1);
  m.in_w = in_shape.at(2);
  m.classes = classes;
  m.layers = {LayerSpec::conv(8, 3, 1, 1),
              LayerSpec::activation(Activation::kSoftplus),
              LayerSpec::residual(8),
              LayerSpec::residual(8),
              LayerSpec::avgpool(),
              LayerSpec::flatten(),
              LayerSpec::dense(120),
              LayerSpec::activation(Activation::kSoftplus),
              LayerSpec::dense(classes)};
  return m;
}

inline std::pair<Model, ModelParams> build_model(Arch arch, Shape in_shape,
                                                 std::size_t classes,
                                                 Rng& rng) {
  Model m;
  switch (arch) {
    case Arch::kLenet5: m = make_lenet5(std::move(in_shape), classes); break;
    case Arch::kMlp: m = make_mlp(std::move(in_shape), {128}, classes); break;
    case Arch::kTinyResnet:
      m = make_tiny_resnet(std::move(in_shape), classes);
      break;
  }
  ModelParams p = init_params(m, rng);
  return {std::move(m), std::move(p)};
}

// How the dummy label enters the loss.
struct Target {
  Tensor values;  // [classes]
  bool is_logits = false;

  static Target logits(Tensor t) { return {std::move(t), true}; }
  static Target probabilities(Tensor t) { return {std::move(t), false}; }
  static Target one_hot(std::size_t label, std::size_t classes) {
    Tensor t(Shape{classes});
    t[label] = 1.0;
    return {std::move(t), false};
  }
};

// A fully built loss graph with handles to every differentiable input.
struct LossGraph {
  Graph graph;
  NodeId x;         // [1,C,H,W] image leaf
  NodeId y;         // [classes] target leaf (logits or probabilities)
  NodeId logits;    // model output [classes]
  NodeId loss;      // scalar
  std::vector<std::pair<NodeId, NodeId>> params;  // (weight, bias) leaves
};

namespace detail {

inline NodeId apply_activation(Graph& g, NodeId x, Activation a) {
  switch (a) {
    case Activation::kSigmoid: return g.sigmoid(x);
    case Activation::kTanh: return g.tanh(x);
    case Activation::kSoftplus: return nn::softplus(g, x);
  }
  throw Error("unknown activation");
}

}  // namespace detail

// Builds forward pass + cross-entropy loss into a fresh graph. Layer
// outputs are checked for finiteness; a non-finite activation raises a
// NumericError naming the layer.
inline LossGraph build_loss_graph(const Model& model, const ModelParams& params,
                                  const Tensor& image, const Target& target) {
  if (image.shape() != model.input_shape()) {
    throw ShapeError("image shape " + shape_str(image.shape()) +
                     " does not match model input " +
                     shape_str(model.input_shape()));
  }
  if (target.values.numel() != model.classes) {
    throw ShapeError("target length " + std::to_string(target.values.numel()) +
                     " != class count " + std::to_string(model.classes));
  }
  LossGraph lg;
  Graph& g = lg.graph;
  lg.x = g.leaf(image);
  lg.y = g.leaf(target.values);

  std::size_t pi = 0;
  auto next_param = [&](const std::string& name) {
    if (pi >= params.layers.size() || params.layers[pi].name != name) {
      throw ShapeError("parameter list does not match model layers at " + name);
    }
    const ParamLayer& pl = params.layers[pi++];
    auto leaves = std::make_pair(g.leaf(pl.weight), g.leaf(pl.bias));
    lg.params.push_back(leaves);
    return leaves;
  };

  NodeId h = g.reshape(lg.x, {1, model.in_channels, model.in_h, model.in_w});
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& l = model.layers[i];
    const std::string name = detail::layer_name(l, i + 1);
    switch (l.kind) {
      case LayerKind::kConv: {
        auto [w, b] = next_param(name);
        h = nn::add_channel_bias(g, nn::conv2d(g, h, w, l.stride, l.pad), b);
        break;
      }
      case LayerKind::kResidual: {
        auto [w1, b1] = next_param(name + ".conv1");
        auto [w2, b2] = next_param(name + ".conv2");
        NodeId inner = nn::add_channel_bias(
            g, nn::conv2d(g, h, w1, l.stride, l.pad), b1);
        inner = nn::softplus(g, inner);
        inner = nn::add_channel_bias(g, nn::conv2d(g, inner, w2, l.stride, l.pad),
                                     b2);
        h = nn::softplus(g, g.add(inner, h));
        break;
      }
      case LayerKind::kAvgPool:
        h = nn::avgpool2(g, h);
        break;
      case LayerKind::kFlatten:
        h = g.reshape(h, {1, g.value(h).numel()});
        break;
      case LayerKind::kDense: {
        auto [w, b] = next_param(name);
        h = nn::dense(g, h, w, b);
        break;
      }
      case LayerKind::kActivation:
        h = detail::apply_activation(g, h, l.act);
        break;
    }
    if (!g.value(h).all_finite()) {
      throw NumericError("non-finite activation", name);
    }
  }
  lg.logits = g.reshape(h, {model.classes});
  const NodeId target_probs =
      target.is_logits ? nn::softmax(g, lg.y) : lg.y;
  lg.loss = nn::cross_entropy(g, lg.logits, target_probs);
  if (!g.value(lg.loss).all_finite()) {
    throw NumericError("non-finite loss", "loss");
  }
  return lg;
}

// The victim side of the exchange: gradients of the training loss at the
// true image and label. This is the attacker's only observable besides the
// weights themselves.
inline GradientSet victim_gradients(const Model& model,
                                    const ModelParams& params,
                                    const Tensor& image, const Target& label) {
  LossGraph lg = build_loss_graph(model, params, image, label);
  std::vector<NodeId> wrt;
  wrt.reserve(lg.params.size() * 2);
  for (auto [w, b] : lg.params) {
    wrt.push_back(w);
    wrt.push_back(b);
  }
  const std::vector<Tensor> grads = lg.graph.backward(lg.loss, wrt);
  GradientSet out;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    out.layers.push_back(
        {params.layers[i].name, grads[2 * i], grads[2 * i + 1]});
  }
  if (!out.all_finite()) {
    throw NumericError("non-finite gradient", "victim_gradients");
  }
  return out;
}

inline GradientSet victim_gradients(const Model& model,
                                    const ModelParams& params,
                                    const Tensor& image, std::size_t label) {
  return victim_gradients(model, params, image,
                          Target::one_hot(label, model.classes));
}

// ---------------------------------------------------------------------------
// Checkpoint format: "GLKW", version u32, input dims, layer count, then per
// layer a kind tag, its dims, and row-major f64 weights and biases. All
// integers and doubles little-endian; round-trips are bit-exact.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError("checkpoint truncated");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError("checkpoint truncated");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

inline void put_tensor(std::ostream& os, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u64(os, d);
  put_u64(os, t.numel());
  for (double v : t.data()) put_f64(os, v);
}

inline Tensor get_tensor(std::istream& is) {
  const std::uint32_t rank = get_u32(is);
  if (rank > 8) throw IoError("checkpoint tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) shape[i] = get_u64(is);
  const std::uint64_t n = get_u64(is);
  if (n != shape_numel(shape)) {
    throw IoError("checkpoint tensor length mismatch");
  }
  std::vector<double> data(n);
  for (double& v : data) v = get_f64(is);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const Model& model,
                            const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("GLKW", 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u64(os, model.in_channels);
  detail::put_u64(os, model.in_h);
  detail::put_u64(os, model.in_w);
  detail::put_u64(os, model.classes);
  detail::put_u32(os, static_cast<std::uint32_t>(model.layers.size()));
  for (const LayerSpec& l : model.layers) {
    detail::put_u32(os, static_cast<std::uint32_t>(l.kind));
    detail::put_u32(os, static_cast<std::uint32_t>(l.act));
    detail::put_u64(os, l.out_channels);
    detail::put_u64(os, l.kernel);
    detail::put_u64(os, l.stride);
    detail::put_u64(os, l.pad);
    detail::put_u64(os, l.units);
  }
  detail::put_u32(os, static_cast<std::uint32_t>(params.layers.size()));
  for (const ParamLayer& pl : params.layers) {
    detail::put_u32(os, static_cast<std::uint32_t>(pl.name.size()));
    os.write(pl.name.data(), static_cast<std::streamsize>(pl.name.size()));
    detail::put_tensor(os, pl.weight);
    detail::put_tensor(os, pl.bias);
  }
  if (!os) throw IoError("write failed for " + path);
}

inline std::pair<Model, ModelParams> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "GLKW") {
    throw IoError(path + ": bad checkpoint magic");
  }
  const std::uint32_t version = detail::get_u32(is);
  if (version != kCheckpointVersion) {
    throw IoError(path + ": unsupported checkpoint version " +
                  std::to_string(version));
  }
  Model model;
  model.in_channels = detail::get_u64(is);
  model.in_h = detail::get_u64(is);
  model.in_w = detail::get_u64(is);
  model.classes = detail::get_u64(is);
  const std::uint32_t n_layers = detail::get_u32(is);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const std::uint32_t kind = detail::get_u32(is);
    if (kind > static_cast<std::uint32_t>(LayerKind::kResidual)) {
      throw IoError(path + ": bad layer kind tag");
    }
    l.kind = static_cast<LayerKind>(kind);
    const std::uint32_t act = detail::get_u32(is);
    if (act > static_cast<std::uint32_t>(Activation::kSoftplus)) {
      throw IoError(path + ": bad activation tag");
    }
    l.act = static_cast<Activation>(act);
    l.out_channels = detail::get_u64(is);
    l.kernel = detail::get_u64(is);
    l.stride = detail::get_u64(is);
    l.pad = detail::get_u64(is);
    l.units = detail::get_u64(is);
    model.layers.push_back(l);
  }
  ModelParams params;
  const std::uint32_t n_params = detail::get_u32(is);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::uint32_t name_len = detail::get_u32(is);
    if (name_len > 4096) throw IoError(path + ": bad layer name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw IoError(path + ": checkpoint truncated");
    }
    Tensor w = detail::get_tensor(is);
    Tensor b = detail::get_tensor(is);
    params.layers.push_back({std::move(name), std::move(w), std::move(b)});
  }
  return {std::move(model), std::move(params)};
}

}  // namespace gradinv
