#include "hvacf/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hvacf/errors.hpp"

namespace hvacf::grad {

namespace {

bool is_binary(OpKind k) {
  switch (k) {
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
    case OpKind::div:
    case OpKind::safe_div:
    case OpKind::row_dot:
    case OpKind::matmul_nt:
      return true;
    default:
      return false;
  }
}

bool is_unary(OpKind k) {
  switch (k) {
    case OpKind::neg:
    case OpKind::square:
    case OpKind::sqrt:
    case OpKind::exp:
    case OpKind::log:
    case OpKind::tanh:
    case OpKind::atanh:
    case OpKind::relu:
    case OpKind::abs:
    case OpKind::row_sum:
    case OpKind::row_norm:
    case OpKind::sum_all:
      return true;
    default:
      return false;
  }
}

std::size_t broadcast_dim(std::size_t a, std::size_t b, OpKind kind) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw InvalidInput(std::string(op_name(kind)) + ": incompatible shapes for broadcast");
}

// Index of (r, c) in t under broadcasting.
inline std::size_t bidx(const Tensor& t, std::size_t r, std::size_t c) {
  return (t.rows == 1 ? 0 : r) * t.cols + (t.cols == 1 ? 0 : c);
}

template <class F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, OpKind kind, F f) {
  Tensor out(broadcast_dim(a.rows, b.rows, kind), broadcast_dim(a.cols, b.cols, kind));
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      out(r, c) = f(a.data[bidx(a, r, c)], b.data[bidx(b, r, c)]);
  return out;
}

Tensor& ensure(std::vector<Tensor>& adj, NodeId id, std::size_t rows, std::size_t cols) {
  Tensor& t = adj[id];
  if (t.empty()) t = Tensor(rows, cols);
  return t;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::safe_div: return "safe_div";
    case OpKind::neg: return "neg";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::square: return "square";
    case OpKind::sqrt: return "sqrt";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::tanh: return "tanh";
    case OpKind::atanh: return "atanh";
    case OpKind::relu: return "relu";
    case OpKind::abs: return "abs";
    case OpKind::max_const: return "max_const";
    case OpKind::clip: return "clip";
    case OpKind::row_sum: return "row_sum";
    case OpKind::row_dot: return "row_dot";
    case OpKind::row_norm: return "row_norm";
    case OpKind::sum_all: return "sum_all";
    case OpKind::matmul_nt: return "matmul_nt";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::segment_softmax: return "segment_softmax";
    case OpKind::segment_sum: return "segment_sum";
    case OpKind::ball_project: return "ball_project";
  }
  return "unknown";
}

Tape::Tape(std::span<const Tensor> params) : params_(params) {}

const Tensor& Tape::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.kind == OpKind::leaf ? params_[n.slot] : n.value;
}

NodeId Tape::push(Node node) {
  if (node.kind != OpKind::leaf && !node.value.all_finite())
    throw NumericError("non-finite forward value in op '" + std::string(op_name(node.kind)) +
                       "'");
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::param(std::size_t slot) {
  if (slot >= params_.size()) throw std::out_of_range("Tape::param: slot out of range");
  Node n;
  n.kind = OpKind::leaf;
  n.slot = slot;
  return push(std::move(n));
}

NodeId Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::record(OpKind kind, std::initializer_list<NodeId> inputs) {
  const std::size_t arity = inputs.size();
  if (!((arity == 1 && is_unary(kind)) || (arity == 2 && is_binary(kind))))
    throw std::logic_error("Tape::record: wrong arity for op '" + std::string(op_name(kind)) +
                           "'");
  for (NodeId id : inputs)
    if (id >= nodes_.size()) throw std::logic_error("Tape::record: input not on tape");

  Node n;
  n.kind = kind;
  n.arity = static_cast<std::uint8_t>(arity);
  std::copy(inputs.begin(), inputs.end(), n.in);
  const Tensor& a = value(n.in[0]);

  switch (kind) {
    case OpKind::add:
      n.value = map_binary(a, value(n.in[1]), kind, [](double x, double y) { return x + y; });
      break;
    case OpKind::sub:
      n.value = map_binary(a, value(n.in[1]), kind, [](double x, double y) { return x - y; });
      break;
    case OpKind::mul:
      n.value = map_binary(a, value(n.in[1]), kind, [](double x, double y) { return x * y; });
      break;
    case OpKind::div:
      n.value = map_binary(a, value(n.in[1]), kind, [](double x, double y) { return x / y; });
      break;
    case OpKind::safe_div:
      n.value = map_binary(a, value(n.in[1]), kind,
                           [](double x, double y) { return y == 0.0 ? 0.0 : x / y; });
      break;
    case OpKind::neg: n.value = map_unary(a, [](double x) { return -x; }); break;
    case OpKind::square: n.value = map_unary(a, [](double x) { return x * x; }); break;
    case OpKind::sqrt: n.value = map_unary(a, [](double x) { return std::sqrt(x); }); break;
    case OpKind::exp: n.value = map_unary(a, [](double x) { return std::exp(x); }); break;
    case OpKind::log: n.value = map_unary(a, [](double x) { return std::log(x); }); break;
    case OpKind::tanh: n.value = map_unary(a, [](double x) { return std::tanh(x); }); break;
    case OpKind::atanh: n.value = map_unary(a, [](double x) { return std::atanh(x); }); break;
    case OpKind::relu:
      n.value = map_unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case OpKind::abs: n.value = map_unary(a, [](double x) { return std::fabs(x); }); break;
    case OpKind::row_sum: {
      n.value = Tensor(a.rows, 1);
      for (std::size_t r = 0; r < a.rows; ++r) {
        double s = 0.0;
        for (double v : a.row(r)) s += v;
        n.value.data[r] = s;
      }
      break;
    }
    case OpKind::row_dot: {
      const Tensor& b = value(n.in[1]);
      if (!a.same_shape(b)) throw InvalidInput("row_dot: shape mismatch");
      n.value = Tensor(a.rows, 1);
      for (std::size_t r = 0; r < a.rows; ++r) {
        auto x = a.row(r);
        auto y = b.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) s += x[c] * y[c];
        n.value.data[r] = s;
      }
      break;
    }
    case OpKind::row_norm: {
      n.value = Tensor(a.rows, 1);
      for (std::size_t r = 0; r < a.rows; ++r) {
        double s = 0.0;
        for (double v : a.row(r)) s += v * v;
        n.value.data[r] = std::sqrt(s);
      }
      break;
    }
    case OpKind::sum_all: {
      double s = 0.0;
      for (double v : a.data) s += v;
      n.value = Tensor::scalar(s);
      break;
    }
    case OpKind::matmul_nt: {
      const Tensor& b = value(n.in[1]);
      if (a.cols != b.cols) throw InvalidInput("matmul_nt: inner dimension mismatch");
      n.value = Tensor(a.rows, b.rows);
      for (std::size_t r = 0; r < a.rows; ++r) {
        auto x = a.row(r);
        for (std::size_t c = 0; c < b.rows; ++c) {
          auto y = b.row(c);
          double s = 0.0;
          for (std::size_t k = 0; k < a.cols; ++k) s += x[k] * y[k];
          n.value(r, c) = s;
        }
      }
      break;
    }
    default:
      throw std::logic_error("Tape::record: op requires attributes");
  }
  return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double k) {
  Node n;
  n.kind = OpKind::scale;
  n.arity = 1;
  n.in[0] = x;
  n.k1 = k;
  n.value = map_unary(value(x), [k](double v) { return v * k; });
  return push(std::move(n));
}

NodeId Tape::add_scalar(NodeId x, double k) {
  Node n;
  n.kind = OpKind::add_scalar;
  n.arity = 1;
  n.in[0] = x;
  n.k1 = k;
  n.value = map_unary(value(x), [k](double v) { return v + k; });
  return push(std::move(n));
}

NodeId Tape::max_const(NodeId x, double k) {
  Node n;
  n.kind = OpKind::max_const;
  n.arity = 1;
  n.in[0] = x;
  n.k1 = k;
  n.value = map_unary(value(x), [k](double v) { return v > k ? v : k; });
  return push(std::move(n));
}

NodeId Tape::clip(NodeId x, double lo, double hi) {
  Node n;
  n.kind = OpKind::clip;
  n.arity = 1;
  n.in[0] = x;
  n.k1 = lo;
  n.k2 = hi;
  n.value = map_unary(value(x), [lo, hi](double v) { return std::clamp(v, lo, hi); });
  return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId x, std::vector<std::uint32_t> rows) {
  const Tensor& src = value(x);
  Node n;
  n.kind = OpKind::gather_rows;
  n.arity = 1;
  n.in[0] = x;
  n.value = Tensor(rows.size(), src.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= src.rows) throw InvalidInput("gather_rows: row index out of range");
    std::copy_n(src.row(rows[i]).begin(), src.cols, n.value.row(i).begin());
  }
  n.index = std::make_shared<const std::vector<std::uint32_t>>(std::move(rows));
  return push(std::move(n));
}

NodeId Tape::segment_softmax(NodeId x, std::vector<std::uint32_t> offsets) {
  const Tensor& in = value(x);
  if (in.cols != 1) throw InvalidInput("segment_softmax: input must be a column");
  if (offsets.empty() || offsets.back() != in.rows)
    throw InvalidInput("segment_softmax: offsets do not cover the input");
  Node n;
  n.kind = OpKind::segment_softmax;
  n.arity = 1;
  n.in[0] = x;
  n.value = Tensor(in.rows, 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::uint32_t b = offsets[s], e = offsets[s + 1];
    if (b == e) continue;
    double mx = in.data[b];
    for (std::uint32_t i = b; i < e; ++i) mx = std::max(mx, in.data[i]);
    double z = 0.0;
    for (std::uint32_t i = b; i < e; ++i) z += (n.value.data[i] = std::exp(in.data[i] - mx));
    for (std::uint32_t i = b; i < e; ++i) n.value.data[i] /= z;
  }
  n.index = std::make_shared<const std::vector<std::uint32_t>>(std::move(offsets));
  return push(std::move(n));
}

NodeId Tape::segment_sum(NodeId x, std::vector<std::uint32_t> offsets) {
  const Tensor& in = value(x);
  if (offsets.empty() || offsets.back() != in.rows)
    throw InvalidInput("segment_sum: offsets do not cover the input");
  Node n;
  n.kind = OpKind::segment_sum;
  n.arity = 1;
  n.in[0] = x;
  n.value = Tensor(offsets.size() - 1, in.cols);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    auto out = n.value.row(s);
    for (std::uint32_t i = offsets[s]; i < offsets[s + 1]; ++i) {
      auto src = in.row(i);
      for (std::size_t c = 0; c < in.cols; ++c) out[c] += src[c];
    }
  }
  n.index = std::make_shared<const std::vector<std::uint32_t>>(std::move(offsets));
  return push(std::move(n));
}

NodeId Tape::ball_project(NodeId x, double max_norm) {
  const Tensor& in = value(x);
  Node n;
  n.kind = OpKind::ball_project;
  n.arity = 1;
  n.in[0] = x;
  n.k1 = max_norm;
  n.value = in;
  for (std::size_t r = 0; r < in.rows; ++r) {
    double s = 0.0;
    for (double v : in.row(r)) s += v * v;
    const double norm = std::sqrt(s);
    if (norm > max_norm)
      for (double& v : n.value.row(r)) v *= max_norm / norm;
  }
  return push(std::move(n));
}

GradientMap Tape::backward(NodeId root) const {
  if (root >= nodes_.size()) throw std::logic_error("Tape::backward: root not on tape");
  const Tensor& rv = value(root);
  if (rv.rows != 1 || rv.cols != 1)
    throw std::logic_error("Tape::backward: root must be a 1x1 scalar");

  std::vector<Tensor> adj(nodes_.size());
  adj[root] = Tensor::scalar(1.0);

  GradientMap out;
  out.grads.reserve(params_.size());
  for (const Tensor& p : params_) out.grads.emplace_back(p.rows, p.cols);

  for (std::size_t i = root + 1; i-- > 0;) {
    if (adj[i].empty()) continue;
    const Node& n = nodes_[i];
    if (n.kind == OpKind::leaf) {
      Tensor& g = out.grads[n.slot];
      for (std::size_t k = 0; k < g.size(); ++k) g.data[k] += adj[i].data[k];
      continue;
    }
    if (n.kind == OpKind::constant) continue;
    backprop(n, n.value, adj[i], adj);
    adj[i] = Tensor();
  }
  return out;
}

void Tape::backprop(const Node& n, const Tensor& out, const Tensor& g,
                    std::vector<Tensor>& adj) const {
  const Tensor& a = value(n.in[0]);

  // Accumulates f(r, c) into the adjoint of input `which`, reducing over
  // broadcast dimensions.
  auto accumulate_bcast = [&](int which, auto f) {
    const Tensor& t = value(n.in[which]);
    Tensor& ga = ensure(adj, n.in[which], t.rows, t.cols);
    for (std::size_t r = 0; r < out.rows; ++r)
      for (std::size_t c = 0; c < out.cols; ++c) ga.data[bidx(t, r, c)] += f(r, c);
  };
  auto accumulate_unary = [&](auto f) {
    Tensor& ga = ensure(adj, n.in[0], a.rows, a.cols);
    for (std::size_t k = 0; k < a.size(); ++k) ga.data[k] += f(k);
  };

  switch (n.kind) {
    case OpKind::add:
      accumulate_bcast(0, [&](auto r, auto c) { return g(r, c); });
      accumulate_bcast(1, [&](auto r, auto c) { return g(r, c); });
      break;
    case OpKind::sub:
      accumulate_bcast(0, [&](auto r, auto c) { return g(r, c); });
      accumulate_bcast(1, [&](auto r, auto c) { return -g(r, c); });
      break;
    case OpKind::mul: {
      const Tensor& b = value(n.in[1]);
      accumulate_bcast(0, [&](auto r, auto c) { return g(r, c) * b.data[bidx(b, r, c)]; });
      accumulate_bcast(1, [&](auto r, auto c) { return g(r, c) * a.data[bidx(a, r, c)]; });
      break;
    }
    case OpKind::div: {
      const Tensor& b = value(n.in[1]);
      accumulate_bcast(0, [&](auto r, auto c) { return g(r, c) / b.data[bidx(b, r, c)]; });
      accumulate_bcast(1, [&](auto r, auto c) {
        const double y = b.data[bidx(b, r, c)];
        return -g(r, c) * a.data[bidx(a, r, c)] / (y * y);
      });
      break;
    }
    case OpKind::safe_div: {
      const Tensor& b = value(n.in[1]);
      accumulate_bcast(0, [&](auto r, auto c) {
        const double y = b.data[bidx(b, r, c)];
        return y == 0.0 ? 0.0 : g(r, c) / y;
      });
      accumulate_bcast(1, [&](auto r, auto c) {
        const double y = b.data[bidx(b, r, c)];
        return y == 0.0 ? 0.0 : -g(r, c) * a.data[bidx(a, r, c)] / (y * y);
      });
      break;
    }
    case OpKind::neg: accumulate_unary([&](auto k) { return -g.data[k]; }); break;
    case OpKind::scale: accumulate_unary([&](auto k) { return g.data[k] * n.k1; }); break;
    case OpKind::add_scalar: accumulate_unary([&](auto k) { return g.data[k]; }); break;
    case OpKind::square:
      accumulate_unary([&](auto k) { return 2.0 * a.data[k] * g.data[k]; });
      break;
    case OpKind::sqrt:
      accumulate_unary([&](auto k) {
        return out.data[k] == 0.0 ? 0.0 : g.data[k] / (2.0 * out.data[k]);
      });
      break;
    case OpKind::exp: accumulate_unary([&](auto k) { return g.data[k] * out.data[k]; }); break;
    case OpKind::log: accumulate_unary([&](auto k) { return g.data[k] / a.data[k]; }); break;
    case OpKind::tanh:
      accumulate_unary([&](auto k) { return g.data[k] * (1.0 - out.data[k] * out.data[k]); });
      break;
    case OpKind::atanh:
      accumulate_unary([&](auto k) { return g.data[k] / (1.0 - a.data[k] * a.data[k]); });
      break;
    case OpKind::relu:
      accumulate_unary([&](auto k) { return a.data[k] > 0.0 ? g.data[k] : 0.0; });
      break;
    case OpKind::abs:
      accumulate_unary([&](auto k) {
        const double x = a.data[k];
        return x > 0.0 ? g.data[k] : (x < 0.0 ? -g.data[k] : 0.0);
      });
      break;
    case OpKind::max_const:
      accumulate_unary([&](auto k) { return a.data[k] > n.k1 ? g.data[k] : 0.0; });
      break;
    case OpKind::clip:
      accumulate_unary([&](auto k) {
        const double x = a.data[k];
        return (x >= n.k1 && x <= n.k2) ? g.data[k] : 0.0;
      });
      break;
    case OpKind::row_sum:
      accumulate_unary([&](auto k) { return g.data[k / a.cols]; });
      break;
    case OpKind::row_dot: {
      const Tensor& b = value(n.in[1]);
      Tensor& ga = ensure(adj, n.in[0], a.rows, a.cols);
      Tensor& gb = ensure(adj, n.in[1], b.rows, b.cols);
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double gr = g.data[k / a.cols];
        ga.data[k] += gr * b.data[k];
        gb.data[k] += gr * a.data[k];
      }
      break;
    }
    case OpKind::row_norm:
      accumulate_unary([&](auto k) {
        const double nr = out.data[k / a.cols];
        return nr == 0.0 ? 0.0 : g.data[k / a.cols] * a.data[k] / nr;
      });
      break;
    case OpKind::sum_all: {
      const double s = g.data[0];
      accumulate_unary([&](auto) { return s; });
      break;
    }
    case OpKind::matmul_nt: {
      const Tensor& b = value(n.in[1]);
      Tensor& ga = ensure(adj, n.in[0], a.rows, a.cols);
      Tensor& gb = ensure(adj, n.in[1], b.rows, b.cols);
      for (std::size_t r = 0; r < a.rows; ++r) {
        auto ar = a.row(r);
        auto gar = ga.row(r);
        for (std::size_t c = 0; c < b.rows; ++c) {
          const double gv = g(r, c);
          if (gv == 0.0) continue;
          auto br = b.row(c);
          auto gbr = gb.row(c);
          for (std::size_t k = 0; k < a.cols; ++k) {
            gar[k] += gv * br[k];
            gbr[k] += gv * ar[k];
          }
        }
      }
      break;
    }
    case OpKind::gather_rows: {
      Tensor& ga = ensure(adj, n.in[0], a.rows, a.cols);
      const auto& rows = *n.index;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto dst = ga.row(rows[i]);
        auto src = g.row(i);
        for (std::size_t c = 0; c < a.cols; ++c) dst[c] += src[c];
      }
      break;
    }
    case OpKind::segment_softmax: {
      Tensor& ga = ensure(adj, n.in[0], a.rows, a.cols);
      const auto& off = *n.index;
      for (std::size_t s = 0; s + 1 < off.size(); ++s) {
        double dot = 0.0;
        for (std::uint32_t i = off[s]; i < off[s + 1]; ++i) dot += g.data[i] * out.data[i];
        for (std::uint32_t i = off[s]; i < off[s + 1]; ++i)
          ga.data[i] += out.data[i] * (g.data[i] - dot);
      }
      break;
    }
    case OpKind::segment_sum: {
      Tensor& ga = ensure(adj, n.in[0], a.rows, a.cols);
      const auto& off = *n.index;
      for (std::size_t s = 0; s + 1 < off.size(); ++s) {
        auto src = g.row(s);
        for (std::uint32_t i = off[s]; i < off[s + 1]; ++i) {
          auto dst = ga.row(i);
          for (std::size_t c = 0; c < a.cols; ++c) dst[c] += src[c];
        }
      }
      break;
    }
    case OpKind::ball_project: {
      Tensor& ga = ensure(adj, n.in[0], a.rows, a.cols);
      for (std::size_t r = 0; r < a.rows; ++r) {
        auto x = a.row(r);
        auto gr = g.row(r);
        auto dst = ga.row(r);
        double s = 0.0, xg = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) {
          s += x[c] * x[c];
          xg += x[c] * gr[c];
        }
        const double norm = std::sqrt(s);
        if (norm > n.k1) {
          // d/dx of x * R / |x|
          const double f = n.k1 / norm;
          for (std::size_t c = 0; c < a.cols; ++c) dst[c] += f * (gr[c] - x[c] * xg / s);
        } else {
          for (std::size_t c = 0; c < a.cols; ++c) dst[c] += gr[c];
        }
      }
      break;
    }
    case OpKind::leaf:
    case OpKind::constant:
      break;
  }
}

FdReport finite_diff_check(const LossBuilder& build, std::vector<Tensor> params, double h) {
  auto eval = [&]() {
    Tape tape(params);
    return tape.value(build(tape)).item();
  };

  GradientMap analytic;
  {
    Tape tape(params);
    analytic = tape.backward(build(tape));
  }

  FdReport report;
  report.per_param.assign(params.size(), 0.0);
  for (std::size_t s = 0; s < params.size(); ++s) {
    for (std::size_t k = 0; k < params[s].size(); ++k) {
      const double orig = params[s].data[k];
      params[s].data[k] = orig + h;
      const double fp = eval();
      params[s].data[k] = orig - h;
      const double fm = eval();
      params[s].data[k] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double an = analytic[s].data[k];
      const double denom = std::max({std::fabs(an), std::fabs(numeric), 1e-8});
      const double err = std::fabs(an - numeric) / denom;
      report.per_param[s] = std::max(report.per_param[s], err);
    }
    report.max_rel_error = std::max(report.max_rel_error, report.per_param[s]);
  }
  return report;
}

}  // namespace hvacf::grad
