#include "core/grad.hpp"

#include <cmath>
#include <unordered_set>

namespace plab {

double GradientVector::norm() const {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

double dot(const GradientVector& a, const GradientVector& b) {
  if (a.values.size() != b.values.size()) {
    throw std::invalid_argument("gradient vectors have different lengths");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) acc += a.values[i] * b.values[i];
  return acc;
}

double cosine_alignment(const GradientVector& a, const GradientVector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kDegenerateNorm || nb < kDegenerateNorm) {
    throw DegenerateGradient("gradient norm below 1e-12, cosine alignment undefined");
  }
  return dot(a, b) / ((na + kCosineStabilizer) * (nb + kCosineStabilizer));
}

NodeId append_alignment_loss(Graph& g, NodeId a, NodeId b) {
  const NodeId d = g.sum(g.mul(a, b));
  const NodeId na = g.sqrt(g.sum(g.mul(a, a)));
  const NodeId nb = g.sqrt(g.sum(g.mul(b, b)));
  const NodeId sig = g.scalar(kCosineStabilizer);
  const NodeId denom = g.mul(g.add(na, sig), g.add(nb, sig));
  const NodeId cosv = g.mul(d, g.recip(denom));
  return g.add(g.scalar(1.0), g.scale_by(cosv, -1.0));
}

namespace {

// Contiguous-slice gather used to split a concat adjoint.
NodeId slice1d(Graph& g, NodeId v, std::int64_t off, std::int64_t len) {
  auto map = std::make_shared<IndexMap>();
  map->reserve(static_cast<std::size_t>(len));
  for (std::int64_t i = 0; i < len; ++i) map->push_back(off + i);
  return g.gather(v, std::move(map), Shape{len});
}

}  // namespace

std::vector<NodeId> append_gradient(Graph& g, NodeId scalar, std::span<const NodeId> wrt) {
  const auto n = static_cast<NodeId>(g.size());
  if (scalar < 0 || scalar >= n) throw GraphError(scalar, "gradient: node id out of range");
  if (!g.shape_of(scalar).empty()) {
    throw GraphError(scalar, "gradient: differentiated node must be a scalar, got " +
                                 shape_str(g.shape_of(scalar)));
  }
  std::unordered_set<NodeId> wrt_set;
  for (NodeId w : wrt) {
    if (w < 0 || w >= n) throw GraphError(w, "gradient: node id out of range");
    const Node& node = g.node(w);
    if (!node.differentiable || (node.op != Op::kInput && node.op != Op::kConst)) {
      throw GraphError(w, "gradient requested on non-differentiable node " +
                              std::to_string(w) + " (" + op_name(node.op) + ")");
    }
    wrt_set.insert(w);
  }

  // dep[id]: some requested node is reachable from id. Adjoints are only
  // propagated along dep edges, so unrelated subgraphs grow no nodes.
  std::vector<char> dep(static_cast<std::size_t>(n), 0);
  for (NodeId id = 0; id < n; ++id) {
    if (wrt_set.count(id)) {
      dep[static_cast<std::size_t>(id)] = 1;
      continue;
    }
    for (NodeId in : g.node(id).inputs) {
      if (dep[static_cast<std::size_t>(in)]) {
        dep[static_cast<std::size_t>(id)] = 1;
        break;
      }
    }
  }

  std::vector<NodeId> adj(static_cast<std::size_t>(n), -1);
  adj[static_cast<std::size_t>(scalar)] = g.scalar(1.0);

  const auto accumulate = [&](NodeId target, NodeId contribution) {
    NodeId& slot = adj[static_cast<std::size_t>(target)];
    slot = (slot < 0) ? contribution : g.add(slot, contribution);
  };

  for (NodeId id = scalar; id >= 0; --id) {
    const NodeId a = adj[static_cast<std::size_t>(id)];
    if (a < 0) continue;
    // Snapshot: backward builders append nodes, invalidating references.
    const Op op = g.node(id).op;
    const std::vector<NodeId> in = g.node(id).inputs;
    const auto want = [&](std::size_t i) { return dep[static_cast<std::size_t>(in[i])] != 0; };
    switch (op) {
      case Op::kInput:
      case Op::kConst:
        break;
      case Op::kAdd:
        if (want(0)) accumulate(in[0], a);
        if (want(1)) accumulate(in[1], a);
        break;
      case Op::kMul:
        if (want(0)) accumulate(in[0], g.mul(a, in[1]));
        if (want(1)) accumulate(in[1], g.mul(a, in[0]));
        break;
      case Op::kScale:
        if (want(0)) accumulate(in[0], g.scale(a, in[1]));
        if (want(1)) accumulate(in[1], g.sum(g.mul(a, in[0])));
        break;
      case Op::kRelu:
        // Subgradient at zero is taken as zero; the mask itself is treated
        // as locally constant, so no second-order term flows through it.
        if (want(0)) accumulate(in[0], g.mul(a, g.relu_mask(in[0])));
        break;
      case Op::kReluMask:
        break;
      case Op::kMatVec:
        if (want(0)) accumulate(in[0], g.outer(a, in[1]));
        if (want(1)) accumulate(in[1], g.matvec_t(in[0], a));
        break;
      case Op::kMatVecT:
        if (want(0)) accumulate(in[0], g.outer(in[1], a));
        if (want(1)) accumulate(in[1], g.matvec(in[0], a));
        break;
      case Op::kOuter:
        if (want(0)) accumulate(in[0], g.matvec(a, in[1]));
        if (want(1)) accumulate(in[1], g.matvec_t(a, in[0]));
        break;
      case Op::kConv2d: {
        const int pad = g.node(id).a0;
        const Shape ks = g.shape_of(in[1]);
        if (want(0)) accumulate(in[0], g.conv_input_grad(a, in[1], pad));
        if (want(1)) {
          accumulate(in[1], g.conv_kernel_grad(in[0], a, static_cast<int>(ks[2]),
                                               static_cast<int>(ks[3]), pad));
        }
        break;
      }
      case Op::kConvInputGrad: {
        const int pad = g.node(id).a0;
        if (want(0)) accumulate(in[0], g.conv2d(a, in[1], -1, pad));
        if (want(1)) {
          const Shape ks = g.shape_of(in[1]);
          accumulate(in[1], g.conv_kernel_grad(a, in[0], static_cast<int>(ks[2]),
                                               static_cast<int>(ks[3]), pad));
        }
        break;
      }
      case Op::kConvKernelGrad: {
        const int pad = g.node(id).a0;
        if (want(0)) accumulate(in[0], g.conv_input_grad(in[1], a, pad));
        if (want(1)) accumulate(in[1], g.conv2d(in[0], a, -1, pad));
        break;
      }
      case Op::kChannelBroadcast:
        if (want(0)) accumulate(in[0], g.channel_sum(a));
        break;
      case Op::kChannelSum: {
        const Shape ts = g.shape_of(in[0]);
        if (want(0)) {
          accumulate(in[0], g.channel_broadcast(a, static_cast<int>(ts[1]),
                                                static_cast<int>(ts[2])));
        }
        break;
      }
      case Op::kGather:
        if (want(0)) accumulate(in[0], g.scatter_add(a, g.node(id).map, g.shape_of(in[0])));
        break;
      case Op::kScatterAdd:
        if (want(0)) accumulate(in[0], g.gather(a, g.node(id).map, g.shape_of(in[0])));
        break;
      case Op::kConcat: {
        std::int64_t off = 0;
        for (std::size_t i = 0; i < in.size(); ++i) {
          const std::int64_t len = g.shape_of(in[i])[0];
          if (want(i)) accumulate(in[i], slice1d(g, a, off, len));
          off += len;
        }
        break;
      }
      case Op::kReshape:
        if (want(0)) accumulate(in[0], g.reshape(a, g.shape_of(in[0])));
        break;
      case Op::kSum:
        if (want(0)) {
          accumulate(in[0], g.scale(g.constant(Tensor::full(g.shape_of(in[0]), 1.0)), a));
        }
        break;
      case Op::kSoftmax: {
        if (want(0)) {
          // dz = s * (a - <a, s>), reusing the forward node as s.
          const NodeId dotn = g.sum(g.mul(a, id));
          const NodeId centered = g.add(
              g.mul(id, a), g.scale(id, g.scale_by(dotn, -1.0)));
          accumulate(in[0], centered);
        }
        break;
      }
      case Op::kSoftmaxXent: {
        if (want(0)) {
          const Shape zs = g.shape_of(in[0]);
          Tensor onehot = Tensor::zeros(zs);
          onehot.data[static_cast<std::size_t>(g.node(id).a0)] = -1.0;
          const NodeId diff = g.add(g.softmax(in[0]), g.constant(std::move(onehot)));
          accumulate(in[0], g.scale(diff, a));
        }
        break;
      }
      case Op::kSqrt:
        if (want(0)) accumulate(in[0], g.mul(a, g.scale_by(g.recip(id), 0.5)));
        break;
      case Op::kRecip:
        if (want(0)) accumulate(in[0], g.scale_by(g.mul(a, g.mul(id, id)), -1.0));
        break;
    }
  }

  std::vector<NodeId> out;
  out.reserve(wrt.size());
  for (NodeId w : wrt) {
    const NodeId a = adj[static_cast<std::size_t>(w)];
    out.push_back(a >= 0 ? a : g.constant(Tensor::zeros(g.shape_of(w))));
  }
  return out;
}

GradientVector compute_gradient(const Graph& g, NodeId scalar, std::span<const NodeId> wrt,
                                std::span<const Tensor> inputs) {
  Graph work = g;
  const std::vector<NodeId> grads = append_gradient(work, scalar, wrt);
  Evaluation ev = work.evaluate(inputs);
  GradientVector gv;
  std::size_t total = 0;
  for (NodeId id : grads) total += static_cast<std::size_t>(shape_size(work.shape_of(id)));
  gv.values.reserve(total);
  for (NodeId id : grads) {
    const Tensor& t = ev.at(id);
    gv.values.insert(gv.values.end(), t.data.begin(), t.data.end());
  }
  return gv;
}

}  // namespace plab
