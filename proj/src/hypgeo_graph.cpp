#include "hvacf/hypgeo_graph.hpp"

#include "hvacf/errors.hpp"

namespace hvacf::hypgeo::graph {

NodeId mobius_add(Tape& t, NodeId x, NodeId y, Curvature c) {
  const double k = c.value();
  const NodeId xy = t.row_dot(x, y);
  const NodeId x2 = t.row_dot(x, x);
  const NodeId y2 = t.row_dot(y, y);
  const NodeId a = t.add_scalar(t.scale(t.add(t.scale(xy, 2.0), y2), k), 1.0);
  const NodeId b = t.add_scalar(t.scale(x2, -k), 1.0);
  const NodeId den = t.add_scalar(t.add(t.scale(xy, 2.0 * k), t.scale(t.mul(x2, y2), k * k)), 1.0);
  return t.div(t.add(t.mul(a, x), t.mul(b, y)), den);
}

NodeId exp_map(Tape& t, NodeId q, NodeId z, Curvature c) {
  if (c.flat()) throw InvalidInput("exp_map: requires c > 0");
  const NodeId q2 = t.row_dot(q, q);
  const NodeId lambda = t.div(t.scalar(2.0), t.add_scalar(t.scale(q2, -c.value()), 1.0));
  const NodeId zn = t.row_norm(z);
  const NodeId arg = t.scale(t.mul(lambda, zn), c.sqrt() / 2.0);
  const NodeId coef = t.safe_div(t.tanh(arg), t.scale(zn, c.sqrt()));
  const NodeId step = t.mul(coef, z);
  return t.ball_project(mobius_add(t, q, step, c), c.max_norm());
}

NodeId distance(Tape& t, NodeId x, NodeId y, Curvature c) {
  if (c.flat()) throw InvalidInput("distance: requires c > 0");
  const NodeId m = mobius_add(t, t.neg(x), y, c);
  const NodeId arg = t.clip(t.scale(t.row_norm(m), c.sqrt()), 0.0, 1.0 - kAtanhEps);
  return t.scale(t.atanh(arg), 2.0 / c.sqrt());
}

NodeId euclid_distance(Tape& t, NodeId x, NodeId y) { return t.row_norm(t.sub(x, y)); }

}  // namespace hvacf::hypgeo::graph
