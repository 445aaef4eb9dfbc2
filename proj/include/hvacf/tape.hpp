#pragma once

// Reverse-mode differentiation over row-batched tensors.
//
// Every node holds an eagerly computed forward value. Elementwise binary ops
// broadcast an operand whose row or column count is 1. Row reductions
// (row_sum, row_dot, row_norm) map R x C to R x 1, which lets the hyperbolic
// kernels run over a whole batch of vectors as one graph.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "hvacf/tensor.hpp"

namespace hvacf::grad {

enum class OpKind : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  safe_div,  // x / y, with value and gradient 0 wherever y == 0
  neg,
  scale,
  add_scalar,
  square,
  sqrt,
  exp,
  log,
  tanh,
  atanh,
  relu,
  abs,
  max_const,  // max(x, k); subgradient 0 at x == k
  clip,       // clamp to [lo, hi]; zero gradient outside
  row_sum,
  row_dot,
  row_norm,
  sum_all,
  matmul_nt,  // A * B^T
  gather_rows,
  segment_softmax,
  segment_sum,
  ball_project,  // rescale rows with norm above a radius onto that radius
};

std::string_view op_name(OpKind kind);

using NodeId = std::uint32_t;

// Gradients for every parameter slot the tape was built over; slots the
// root does not depend on hold zeros of the parameter's shape.
struct GradientMap {
  std::vector<Tensor> grads;

  const Tensor& operator[](std::size_t slot) const { return grads[slot]; }
  Tensor& operator[](std::size_t slot) { return grads[slot]; }
  std::size_t size() const { return grads.size(); }
};

class Tape {
 public:
  // The parameter tensors must outlive the tape; leaves reference them.
  explicit Tape(std::span<const Tensor> params);

  NodeId param(std::size_t slot);
  NodeId constant(Tensor value);
  NodeId scalar(double v) { return constant(Tensor::scalar(v)); }

  // Attribute-free ops: unary kinds take one input, binary kinds two.
  NodeId record(OpKind kind, std::initializer_list<NodeId> inputs);

  NodeId add(NodeId a, NodeId b) { return record(OpKind::add, {a, b}); }
  NodeId sub(NodeId a, NodeId b) { return record(OpKind::sub, {a, b}); }
  NodeId mul(NodeId a, NodeId b) { return record(OpKind::mul, {a, b}); }
  NodeId div(NodeId a, NodeId b) { return record(OpKind::div, {a, b}); }
  NodeId safe_div(NodeId a, NodeId b) { return record(OpKind::safe_div, {a, b}); }
  NodeId neg(NodeId a) { return record(OpKind::neg, {a}); }
  NodeId square(NodeId a) { return record(OpKind::square, {a}); }
  NodeId sqrt(NodeId a) { return record(OpKind::sqrt, {a}); }
  NodeId exp(NodeId a) { return record(OpKind::exp, {a}); }
  NodeId log(NodeId a) { return record(OpKind::log, {a}); }
  NodeId tanh(NodeId a) { return record(OpKind::tanh, {a}); }
  NodeId atanh(NodeId a) { return record(OpKind::atanh, {a}); }
  NodeId relu(NodeId a) { return record(OpKind::relu, {a}); }
  NodeId abs(NodeId a) { return record(OpKind::abs, {a}); }
  NodeId row_sum(NodeId a) { return record(OpKind::row_sum, {a}); }
  NodeId row_dot(NodeId a, NodeId b) { return record(OpKind::row_dot, {a, b}); }
  NodeId row_norm(NodeId a) { return record(OpKind::row_norm, {a}); }
  NodeId sum_all(NodeId a) { return record(OpKind::sum_all, {a}); }
  NodeId matmul_nt(NodeId a, NodeId b) { return record(OpKind::matmul_nt, {a, b}); }

  NodeId scale(NodeId x, double k);
  NodeId add_scalar(NodeId x, double k);
  NodeId max_const(NodeId x, double k);
  NodeId clip(NodeId x, double lo, double hi);
  NodeId gather_rows(NodeId x, std::vector<std::uint32_t> rows);
  // offsets has one entry per segment plus a trailing total; segment s owns
  // rows [offsets[s], offsets[s+1]). Empty segments are allowed.
  NodeId segment_softmax(NodeId x, std::vector<std::uint32_t> offsets);
  NodeId segment_sum(NodeId x, std::vector<std::uint32_t> offsets);
  NodeId ball_project(NodeId x, double max_norm);

  const Tensor& value(NodeId id) const;
  OpKind kind(NodeId id) const { return nodes_[id].kind; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t param_count() const { return params_.size(); }

  // Throws std::logic_error if root is not 1 x 1.
  GradientMap backward(NodeId root) const;

 private:
  struct Node {
    OpKind kind = OpKind::constant;
    std::uint8_t arity = 0;
    NodeId in[2] = {0, 0};
    double k1 = 0.0;
    double k2 = 0.0;
    std::size_t slot = 0;
    std::shared_ptr<const std::vector<std::uint32_t>> index;
    Tensor value;  // unused for leaves, which read params_[slot]
  };

  NodeId push(Node node);
  void backprop(const Node& node, const Tensor& out, const Tensor& g,
                std::vector<Tensor>& adj) const;

  std::span<const Tensor> params_;
  std::vector<Node> nodes_;
};

// Builds a scalar loss on a tape over the given parameters.
using LossBuilder = std::function<NodeId(Tape&)>;

struct FdReport {
  double max_rel_error = 0.0;
  std::vector<double> per_param;  // worst relative error per slot
};

// Compares reverse-mode gradients with central differences of step h on
// every coordinate of every parameter. Relative error uses
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
FdReport finite_diff_check(const LossBuilder& build, std::vector<Tensor> params, double h);

}  // namespace hvacf::grad
