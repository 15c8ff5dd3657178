#include "core/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace plab {

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kRelu: return "relu";
    case Op::kReluMask: return "relu_mask";
    case Op::kMatVec: return "matvec";
    case Op::kMatVecT: return "matvec_t";
    case Op::kOuter: return "outer";
    case Op::kConv2d: return "conv2d";
    case Op::kConvInputGrad: return "conv_input_grad";
    case Op::kConvKernelGrad: return "conv_kernel_grad";
    case Op::kChannelBroadcast: return "channel_broadcast";
    case Op::kChannelSum: return "channel_sum";
    case Op::kGather: return "gather";
    case Op::kScatterAdd: return "scatter_add";
    case Op::kConcat: return "concat";
    case Op::kReshape: return "reshape";
    case Op::kSum: return "sum";
    case Op::kSoftmax: return "softmax";
    case Op::kSoftmaxXent: return "softmax_xent";
    case Op::kSqrt: return "sqrt";
    case Op::kRecip: return "recip";
  }
  return "?";
}

NodeId Graph::push(Node n) {
  const auto id = static_cast<NodeId>(nodes_.size());
  for (NodeId in : n.inputs) {
    if (in < 0 || in >= id) {
      throw GraphError(id, std::string(op_name(n.op)) + ": input id " + std::to_string(in) +
                               " out of range");
    }
  }
  nodes_.push_back(std::move(n));
  return id;
}

const Shape& Graph::in_shape(NodeId id, NodeId) const { return nodes_[static_cast<std::size_t>(id)].shape; }

void Graph::check_same(NodeId a, NodeId b, const char* what) const {
  if (shape_of(a) != shape_of(b)) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     std::string(what) + ": shape mismatch " + shape_str(shape_of(a)) + " vs " +
                         shape_str(shape_of(b)));
  }
}

NodeId Graph::input(Shape shape, bool differentiable) {
  Node n{Op::kInput, {}, std::move(shape)};
  n.differentiable = differentiable;
  const NodeId id = push(std::move(n));
  input_ids_.push_back(id);
  return id;
}

NodeId Graph::constant(Tensor t, bool differentiable) {
  return constant(std::make_shared<const Tensor>(std::move(t)), differentiable);
}

NodeId Graph::constant(std::shared_ptr<const Tensor> t, bool differentiable) {
  Node n{Op::kConst, {}, t->shape};
  n.value = std::move(t);
  n.differentiable = differentiable;
  return push(std::move(n));
}

NodeId Graph::scalar(double v) { return constant(Tensor::scalar(v)); }

NodeId Graph::add(NodeId a, NodeId b) {
  check_same(a, b, "add");
  return push(Node{Op::kAdd, {a, b}, shape_of(a)});
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check_same(a, b, "mul");
  return push(Node{Op::kMul, {a, b}, shape_of(a)});
}

NodeId Graph::scale(NodeId t, NodeId s) {
  if (!shape_of(s).empty()) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "scale: scale factor must be a scalar, got " + shape_str(shape_of(s)));
  }
  return push(Node{Op::kScale, {t, s}, shape_of(t)});
}

NodeId Graph::scale_by(NodeId t, double c) { return scale(t, scalar(c)); }

NodeId Graph::relu(NodeId x) { return push(Node{Op::kRelu, {x}, shape_of(x)}); }
NodeId Graph::relu_mask(NodeId x) { return push(Node{Op::kReluMask, {x}, shape_of(x)}); }
NodeId Graph::sum(NodeId x) { return push(Node{Op::kSum, {x}, Shape{}}); }
NodeId Graph::sqrt(NodeId x) { return push(Node{Op::kSqrt, {x}, shape_of(x)}); }
NodeId Graph::recip(NodeId x) { return push(Node{Op::kRecip, {x}, shape_of(x)}); }

NodeId Graph::matvec(NodeId w, NodeId x) {
  const Shape& ws = shape_of(w);
  const Shape& xs = shape_of(x);
  if (ws.size() != 2 || xs.size() != 1 || ws[1] != xs[0]) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "matvec: incompatible shapes " + shape_str(ws) + " and " + shape_str(xs));
  }
  return push(Node{Op::kMatVec, {w, x}, Shape{ws[0]}});
}

NodeId Graph::matvec_t(NodeId w, NodeId u) {
  const Shape& ws = shape_of(w);
  const Shape& us = shape_of(u);
  if (ws.size() != 2 || us.size() != 1 || ws[0] != us[0]) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "matvec_t: incompatible shapes " + shape_str(ws) + " and " + shape_str(us));
  }
  return push(Node{Op::kMatVecT, {w, u}, Shape{ws[1]}});
}

NodeId Graph::outer(NodeId a, NodeId b) {
  const Shape& as = shape_of(a);
  const Shape& bs = shape_of(b);
  if (as.size() != 1 || bs.size() != 1) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "outer: expects two vectors, got " + shape_str(as) + " and " + shape_str(bs));
  }
  return push(Node{Op::kOuter, {a, b}, Shape{as[0], bs[0]}});
}

NodeId Graph::affine(NodeId w, NodeId x, NodeId b) {
  NodeId y = matvec(w, x);
  if (b >= 0) {
    check_same(y, b, "affine bias");
    y = add(y, b);
  }
  return y;
}

NodeId Graph::conv2d(NodeId x, NodeId k, NodeId bias, int pad) {
  const Shape& xs = shape_of(x);
  const Shape& ks = shape_of(k);
  if (xs.size() != 3 || ks.size() != 4 || ks[1] != xs[0]) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "conv2d: incompatible shapes " + shape_str(xs) + " and " + shape_str(ks));
  }
  const std::int64_t co = ks[0];
  const std::int64_t ho = xs[1] + 2 * pad - ks[2] + 1;
  const std::int64_t wo = xs[2] + 2 * pad - ks[3] + 1;
  if (ho <= 0 || wo <= 0) {
    throw GraphError(static_cast<NodeId>(nodes_.size()), "conv2d: kernel larger than padded input");
  }
  Node n{Op::kConv2d, {x, k}, Shape{co, ho, wo}};
  n.a0 = pad;
  // push may grow the node table; xs and ks are invalid past this point.
  NodeId y = push(std::move(n));
  if (bias >= 0) {
    if (shape_of(bias) != Shape{co}) {
      throw GraphError(static_cast<NodeId>(nodes_.size()),
                       "conv2d: bias shape " + shape_str(shape_of(bias)) + " does not match " +
                           std::to_string(co) + " output channels");
    }
    y = add(y, channel_broadcast(bias, static_cast<int>(ho), static_cast<int>(wo)));
  }
  return y;
}

NodeId Graph::conv_input_grad(NodeId u, NodeId k, int pad) {
  const Shape& us = shape_of(u);
  const Shape& ks = shape_of(k);
  if (us.size() != 3 || ks.size() != 4 || ks[0] != us[0]) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "conv_input_grad: incompatible shapes " + shape_str(us) + " and " + shape_str(ks));
  }
  const std::int64_t h = us[1] + ks[2] - 1 - 2 * pad;
  const std::int64_t w = us[2] + ks[3] - 1 - 2 * pad;
  if (h <= 0 || w <= 0) {
    throw GraphError(static_cast<NodeId>(nodes_.size()), "conv_input_grad: degenerate shape");
  }
  Node n{Op::kConvInputGrad, {u, k}, Shape{ks[1], h, w}};
  n.a0 = pad;
  return push(std::move(n));
}

NodeId Graph::conv_kernel_grad(NodeId x, NodeId u, int kh, int kw, int pad) {
  const Shape& xs = shape_of(x);
  const Shape& us = shape_of(u);
  if (xs.size() != 3 || us.size() != 3) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "conv_kernel_grad: incompatible shapes " + shape_str(xs) + " and " + shape_str(us));
  }
  if (us[1] != xs[1] + 2 * pad - kh + 1 || us[2] != xs[2] + 2 * pad - kw + 1) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "conv_kernel_grad: adjoint shape " + shape_str(us) +
                         " inconsistent with input " + shape_str(xs));
  }
  Node n{Op::kConvKernelGrad, {x, u}, Shape{us[0], xs[0], kh, kw}};
  n.a0 = pad;
  n.a1 = kh;
  n.a2 = kw;
  return push(std::move(n));
}

NodeId Graph::channel_broadcast(NodeId b, int h, int w) {
  const Shape& bs = shape_of(b);
  if (bs.size() != 1 || h <= 0 || w <= 0) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "channel_broadcast: expects a vector, got " + shape_str(bs));
  }
  Node n{Op::kChannelBroadcast, {b}, Shape{bs[0], h, w}};
  n.a1 = h;
  n.a2 = w;
  return push(std::move(n));
}

NodeId Graph::channel_sum(NodeId t) {
  const Shape& ts = shape_of(t);
  if (ts.size() != 3) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "channel_sum: expects [C,H,W], got " + shape_str(ts));
  }
  return push(Node{Op::kChannelSum, {t}, Shape{ts[0]}});
}

NodeId Graph::gather(NodeId x, std::shared_ptr<const IndexMap> map, Shape out_shape) {
  const std::int64_t src = shape_size(shape_of(x));
  if (static_cast<std::int64_t>(map->size()) != shape_size(out_shape)) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "gather: map length " + std::to_string(map->size()) +
                         " does not cover output " + shape_str(out_shape));
  }
  for (std::int64_t idx : *map) {
    if (idx >= src) {
      throw GraphError(static_cast<NodeId>(nodes_.size()),
                       "gather: map index " + std::to_string(idx) + " exceeds source size " +
                           std::to_string(src));
    }
  }
  Node n{Op::kGather, {x}, std::move(out_shape)};
  n.map = std::move(map);
  return push(std::move(n));
}

NodeId Graph::scatter_add(NodeId u, std::shared_ptr<const IndexMap> map, Shape out_shape) {
  const std::int64_t dst = shape_size(out_shape);
  if (static_cast<std::int64_t>(map->size()) != shape_size(shape_of(u))) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "scatter_add: map length " + std::to_string(map->size()) +
                         " does not cover input " + shape_str(shape_of(u)));
  }
  for (std::int64_t idx : *map) {
    if (idx >= dst) {
      throw GraphError(static_cast<NodeId>(nodes_.size()),
                       "scatter_add: map index " + std::to_string(idx) + " exceeds target size " +
                           std::to_string(dst));
    }
  }
  Node n{Op::kScatterAdd, {u}, std::move(out_shape)};
  n.map = std::move(map);
  return push(std::move(n));
}

NodeId Graph::embedding(NodeId table, std::span<const int> token_ids) {
  const Shape& ts = shape_of(table);
  if (ts.size() != 2) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "embedding: table must be [V,d], got " + shape_str(ts));
  }
  const std::int64_t v = ts[0], d = ts[1];
  auto map = std::make_shared<IndexMap>();
  map->reserve(token_ids.size() * static_cast<std::size_t>(d));
  for (int tok : token_ids) {
    if (tok < 0 || tok >= v) {
      throw GraphError(static_cast<NodeId>(nodes_.size()),
                       "embedding: token id " + std::to_string(tok) + " outside vocabulary of " +
                           std::to_string(v));
    }
    for (std::int64_t j = 0; j < d; ++j) map->push_back(tok * d + j);
  }
  return gather(table, std::move(map), Shape{static_cast<std::int64_t>(token_ids.size()), d});
}

NodeId Graph::mean_pool(NodeId x, int k) {
  const Shape& xs = shape_of(x);
  if (xs.size() != 3 || k <= 0 || xs[1] % k != 0 || xs[2] % k != 0) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "mean_pool: window " + std::to_string(k) + " does not tile " + shape_str(xs));
  }
  const std::int64_t c = xs[0], h = xs[1], w = xs[2];
  const std::int64_t ho = h / k, wo = w / k;
  // Rearrange [C,H,W] into [C*Ho*Wo, k*k] window rows, then average each row
  // by summing scaled columns. One gather plus k*k shifted adds.
  auto map = std::make_shared<IndexMap>();
  map->reserve(static_cast<std::size_t>(c * ho * wo * k * k));
  for (std::int64_t ci = 0; ci < c; ++ci)
    for (std::int64_t oy = 0; oy < ho; ++oy)
      for (std::int64_t ox = 0; ox < wo; ++ox)
        for (std::int64_t dy = 0; dy < k; ++dy)
          for (std::int64_t dx = 0; dx < k; ++dx)
            map->push_back((ci * h + oy * k + dy) * w + ox * k + dx);
  NodeId windows = gather(x, std::move(map), Shape{c * ho * wo, static_cast<std::int64_t>(k) * k});
  // Column extraction maps reuse the window layout.
  NodeId acc = -1;
  const std::int64_t rows = c * ho * wo;
  for (std::int64_t col = 0; col < static_cast<std::int64_t>(k) * k; ++col) {
    auto colmap = std::make_shared<IndexMap>();
    colmap->reserve(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) colmap->push_back(r * k * k + col);
    NodeId column = gather(windows, std::move(colmap), Shape{rows});
    acc = (acc < 0) ? column : add(acc, column);
  }
  NodeId mean = scale_by(acc, 1.0 / (static_cast<double>(k) * k));
  return reshape(mean, Shape{c, ho, wo});
}

NodeId Graph::row_mean(NodeId x) {
  const Shape& xs = shape_of(x);
  if (xs.size() != 2 || xs[0] <= 0) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "row_mean: expects a non-empty [n,d], got " + shape_str(xs));
  }
  const std::int64_t n = xs[0], d = xs[1];
  NodeId acc = -1;
  for (std::int64_t r = 0; r < n; ++r) {
    auto map = std::make_shared<IndexMap>();
    map->reserve(static_cast<std::size_t>(d));
    for (std::int64_t j = 0; j < d; ++j) map->push_back(r * d + j);
    NodeId row = gather(x, std::move(map), Shape{d});
    acc = (acc < 0) ? row : add(acc, row);
  }
  return scale_by(acc, 1.0 / static_cast<double>(n));
}

NodeId Graph::concat(std::span<const NodeId> parts) {
  if (parts.empty()) {
    throw GraphError(static_cast<NodeId>(nodes_.size()), "concat: no inputs");
  }
  std::int64_t total = 0;
  for (NodeId p : parts) {
    if (shape_of(p).size() != 1) {
      throw GraphError(static_cast<NodeId>(nodes_.size()),
                       "concat: expects vectors, got " + shape_str(shape_of(p)));
    }
    total += shape_of(p)[0];
  }
  Node n{Op::kConcat, {parts.begin(), parts.end()}, Shape{total}};
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, Shape shape) {
  if (shape_size(shape) != shape_size(shape_of(x))) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "reshape: cannot view " + shape_str(shape_of(x)) + " as " + shape_str(shape));
  }
  return push(Node{Op::kReshape, {x}, std::move(shape)});
}

NodeId Graph::flatten(NodeId x) { return reshape(x, Shape{shape_size(shape_of(x))}); }

NodeId Graph::softmax(NodeId logits) {
  const Shape& s = shape_of(logits);
  if (s.size() != 1) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "softmax: expects a vector, got " + shape_str(s));
  }
  return push(Node{Op::kSoftmax, {logits}, s});
}

NodeId Graph::softmax_cross_entropy(NodeId logits, int target) {
  const Shape& s = shape_of(logits);
  if (s.size() != 1 || target < 0 || target >= s[0]) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "softmax_cross_entropy: target " + std::to_string(target) +
                         " invalid for logits " + shape_str(s));
  }
  Node n{Op::kSoftmaxXent, {logits}, Shape{}};
  n.a0 = target;
  return push(std::move(n));
}

NodeId Graph::add_raw(int op_id, std::span<const NodeId> inputs, Shape shape) {
  if (op_id < 0 || op_id > static_cast<int>(Op::kRecip)) {
    throw GraphError(static_cast<NodeId>(nodes_.size()),
                     "unknown primitive id " + std::to_string(op_id));
  }
  switch (static_cast<Op>(op_id)) {
    case Op::kAdd: return add(inputs[0], inputs[1]);
    case Op::kMul: return mul(inputs[0], inputs[1]);
    case Op::kRelu: return relu(inputs[0]);
    case Op::kSum: return sum(inputs[0]);
    case Op::kMatVec: return matvec(inputs[0], inputs[1]);
    case Op::kReshape: return reshape(inputs[0], std::move(shape));
    case Op::kConcat: return concat(inputs);
    default:
      throw GraphError(static_cast<NodeId>(nodes_.size()),
                       std::string("primitive ") + op_name(static_cast<Op>(op_id)) +
                           " carries attributes and cannot be added in raw form");
  }
}

// ---------------------------------------------------------------------------
// Evaluation kernels.

namespace {

void conv2d_run(const Tensor& x, const Tensor& k, int pad, Tensor& out) {
  const std::int64_t ci = x.shape[0], h = x.shape[1], w = x.shape[2];
  const std::int64_t co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
  const std::int64_t ho = out.shape[1], wo = out.shape[2];
  std::fill(out.data.begin(), out.data.end(), 0.0);
  for (std::int64_t oc = 0; oc < co; ++oc) {
    double* dst = out.data.data() + oc * ho * wo;
    for (std::int64_t ic = 0; ic < ci; ++ic) {
      const double* src = x.data.data() + ic * h * w;
      const double* ker = k.data.data() + ((oc * ci + ic) * kh) * kw;
      for (std::int64_t dy = 0; dy < kh; ++dy) {
        for (std::int64_t dx = 0; dx < kw; ++dx) {
          const double kv = ker[dy * kw + dx];
          if (kv == 0.0) continue;
          for (std::int64_t oy = 0; oy < ho; ++oy) {
            const std::int64_t iy = oy + dy - pad;
            if (iy < 0 || iy >= h) continue;
            const std::int64_t x0 = std::max<std::int64_t>(0, pad - dx);
            const std::int64_t x1 = std::min<std::int64_t>(wo, w + pad - dx);
            const double* srow = src + iy * w + (x0 + dx - pad);
            double* drow = dst + oy * wo + x0;
            for (std::int64_t i = 0; i < x1 - x0; ++i) drow[i] += kv * srow[i];
          }
        }
      }
    }
  }
}

// Full correlation with the flipped kernel, channels transposed. Equivalent
// to routing each adjoint element back to the input positions it read.
void conv_input_grad_run(const Tensor& u, const Tensor& k, int pad, Tensor& out) {
  const std::int64_t co = u.shape[0], ho = u.shape[1], wo = u.shape[2];
  const std::int64_t ci = out.shape[0], h = out.shape[1], w = out.shape[2];
  const std::int64_t kh = k.shape[2], kw = k.shape[3];
  std::fill(out.data.begin(), out.data.end(), 0.0);
  for (std::int64_t oc = 0; oc < co; ++oc) {
    const double* src = u.data.data() + oc * ho * wo;
    for (std::int64_t ic = 0; ic < ci; ++ic) {
      double* dst = out.data.data() + ic * h * w;
      const double* ker = k.data.data() + ((oc * ci + ic) * kh) * kw;
      for (std::int64_t dy = 0; dy < kh; ++dy) {
        for (std::int64_t dx = 0; dx < kw; ++dx) {
          const double kv = ker[dy * kw + dx];
          if (kv == 0.0) continue;
          for (std::int64_t oy = 0; oy < ho; ++oy) {
            const std::int64_t iy = oy + dy - pad;
            if (iy < 0 || iy >= h) continue;
            const std::int64_t x0 = std::max<std::int64_t>(0, pad - dx);
            const std::int64_t x1 = std::min<std::int64_t>(wo, w + pad - dx);
            const double* srow = src + oy * wo + x0;
            double* drow = dst + iy * w + (x0 + dx - pad);
            for (std::int64_t i = 0; i < x1 - x0; ++i) drow[i] += kv * srow[i];
          }
        }
      }
    }
  }
}

void conv_kernel_grad_run(const Tensor& x, const Tensor& u, int pad, Tensor& out) {
  const std::int64_t ci = x.shape[0], h = x.shape[1], w = x.shape[2];
  const std::int64_t co = u.shape[0], ho = u.shape[1], wo = u.shape[2];
  const std::int64_t kh = out.shape[2], kw = out.shape[3];
  std::fill(out.data.begin(), out.data.end(), 0.0);
  for (std::int64_t oc = 0; oc < co; ++oc) {
    const double* adj = u.data.data() + oc * ho * wo;
    for (std::int64_t ic = 0; ic < ci; ++ic) {
      const double* src = x.data.data() + ic * h * w;
      double* ker = out.data.data() + ((oc * ci + ic) * kh) * kw;
      for (std::int64_t dy = 0; dy < kh; ++dy) {
        for (std::int64_t dx = 0; dx < kw; ++dx) {
          double acc = 0.0;
          for (std::int64_t oy = 0; oy < ho; ++oy) {
            const std::int64_t iy = oy + dy - pad;
            if (iy < 0 || iy >= h) continue;
            const std::int64_t x0 = std::max<std::int64_t>(0, pad - dx);
            const std::int64_t x1 = std::min<std::int64_t>(wo, w + pad - dx);
            const double* arow = adj + oy * wo + x0;
            const double* srow = src + iy * w + (x0 + dx - pad);
            for (std::int64_t i = 0; i < x1 - x0; ++i) acc += arow[i] * srow[i];
          }
          ker[dy * kw + dx] = acc;
        }
      }
    }
  }
}

}  // namespace

Evaluation Graph::evaluate(std::span<const Tensor> inputs) const {
  if (inputs.size() != input_ids_.size()) {
    throw GraphError(-1, "evaluate: expected " + std::to_string(input_ids_.size()) +
                             " inputs, got " + std::to_string(inputs.size()));
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape != shape_of(input_ids_[i])) {
      throw GraphError(input_ids_[i], "evaluate: input " + std::to_string(i) + " has shape " +
                                          shape_str(inputs[i].shape) + ", declared " +
                                          shape_str(shape_of(input_ids_[i])));
    }
  }

  Evaluation ev;
  ev.values.resize(nodes_.size());
  std::size_t next_input = 0;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    Tensor& out = ev.values[id];
    const auto in = [&](int i) -> const Tensor& {
      return ev.values[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(i)])];
    };
    switch (n.op) {
      case Op::kInput:
        out = inputs[next_input++];
        break;
      case Op::kConst:
        out = *n.value;
        break;
      case Op::kAdd: {
        out = in(0);
        const Tensor& b = in(1);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
        break;
      }
      case Op::kMul: {
        out = in(0);
        const Tensor& b = in(1);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
        break;
      }
      case Op::kScale: {
        out = in(0);
        const double s = in(1).scalar_value();
        for (double& v : out.data) v *= s;
        break;
      }
      case Op::kRelu: {
        out = in(0);
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        break;
      }
      case Op::kReluMask: {
        out = in(0);
        for (double& v : out.data) v = v > 0.0 ? 1.0 : 0.0;
        break;
      }
      case Op::kMatVec: {
        const Tensor& w = in(0);
        const Tensor& x = in(1);
        const std::int64_t m = w.shape[0], k = w.shape[1];
        out = Tensor::zeros(n.shape);
        for (std::int64_t r = 0; r < m; ++r) {
          const double* row = w.data.data() + r * k;
          double acc = 0.0;
          for (std::int64_t c = 0; c < k; ++c) acc += row[c] * x.data[static_cast<std::size_t>(c)];
          out.data[static_cast<std::size_t>(r)] = acc;
        }
        break;
      }
      case Op::kMatVecT: {
        const Tensor& w = in(0);
        const Tensor& u = in(1);
        const std::int64_t m = w.shape[0], k = w.shape[1];
        out = Tensor::zeros(n.shape);
        for (std::int64_t r = 0; r < m; ++r) {
          const double* row = w.data.data() + r * k;
          const double uv = u.data[static_cast<std::size_t>(r)];
          if (uv == 0.0) continue;
          for (std::int64_t c = 0; c < k; ++c) out.data[static_cast<std::size_t>(c)] += uv * row[c];
        }
        break;
      }
      case Op::kOuter: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        out = Tensor::zeros(n.shape);
        const std::int64_t m = a.shape[0], k = b.shape[0];
        for (std::int64_t r = 0; r < m; ++r) {
          const double av = a.data[static_cast<std::size_t>(r)];
          double* row = out.data.data() + r * k;
          for (std::int64_t c = 0; c < k; ++c) row[c] = av * b.data[static_cast<std::size_t>(c)];
        }
        break;
      }
      case Op::kConv2d:
        out = Tensor::zeros(n.shape);
        conv2d_run(in(0), in(1), n.a0, out);
        break;
      case Op::kConvInputGrad:
        out = Tensor::zeros(n.shape);
        conv_input_grad_run(in(0), in(1), n.a0, out);
        break;
      case Op::kConvKernelGrad:
        out = Tensor::zeros(n.shape);
        conv_kernel_grad_run(in(0), in(1), n.a0, out);
        break;
      case Op::kChannelBroadcast: {
        const Tensor& b = in(0);
        out = Tensor::zeros(n.shape);
        const std::int64_t hw = static_cast<std::int64_t>(n.a1) * n.a2;
        for (std::int64_t c = 0; c < b.shape[0]; ++c) {
          std::fill_n(out.data.data() + c * hw, hw, b.data[static_cast<std::size_t>(c)]);
        }
        break;
      }
      case Op::kChannelSum: {
        const Tensor& t = in(0);
        out = Tensor::zeros(n.shape);
        const std::int64_t hw = t.shape[1] * t.shape[2];
        for (std::int64_t c = 0; c < t.shape[0]; ++c) {
          const double* src = t.data.data() + c * hw;
          double acc = 0.0;
          for (std::int64_t i = 0; i < hw; ++i) acc += src[i];
          out.data[static_cast<std::size_t>(c)] = acc;
        }
        break;
      }
      case Op::kGather: {
        const Tensor& x = in(0);
        out = Tensor::zeros(n.shape);
        const IndexMap& m = *n.map;
        for (std::size_t i = 0; i < m.size(); ++i) {
          out.data[i] = m[i] < 0 ? 0.0 : x.data[static_cast<std::size_t>(m[i])];
        }
        break;
      }
      case Op::kScatterAdd: {
        const Tensor& u = in(0);
        out = Tensor::zeros(n.shape);
        const IndexMap& m = *n.map;
        for (std::size_t i = 0; i < m.size(); ++i) {
          if (m[i] >= 0) out.data[static_cast<std::size_t>(m[i])] += u.data[i];
        }
        break;
      }
      case Op::kConcat: {
        out = Tensor::zeros(n.shape);
        std::size_t off = 0;
        for (NodeId p : n.inputs) {
          const Tensor& t = ev.values[static_cast<std::size_t>(p)];
          std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
          off += t.data.size();
        }
        break;
      }
      case Op::kReshape:
        out = in(0);
        out.shape = n.shape;
        break;
      case Op::kSum: {
        const Tensor& x = in(0);
        double acc = 0.0;
        for (double v : x.data) acc += v;
        out = Tensor::scalar(acc);
        break;
      }
      case Op::kSoftmax: {
        const Tensor& z = in(0);
        out = Tensor::zeros(n.shape);
        double mx = z.data[0];
        for (double v : z.data) mx = std::max(mx, v);
        double denom = 0.0;
        for (std::size_t i = 0; i < z.data.size(); ++i) {
          out.data[i] = std::exp(z.data[i] - mx);
          denom += out.data[i];
        }
        for (double& v : out.data) v /= denom;
        break;
      }
      case Op::kSoftmaxXent: {
        const Tensor& z = in(0);
        double mx = z.data[0];
        for (double v : z.data) mx = std::max(mx, v);
        double denom = 0.0;
        for (double v : z.data) denom += std::exp(v - mx);
        const double t = z.data[static_cast<std::size_t>(n.a0)];
        out = Tensor::scalar(std::log(denom) - (t - mx));
        break;
      }
      case Op::kSqrt: {
        out = in(0);
        for (double& v : out.data) v = std::sqrt(v);
        break;
      }
      case Op::kRecip: {
        out = in(0);
        for (double& v : out.data) v = 1.0 / v;
        break;
      }
    }
  }
  return ev;
}

}  // namespace plab
