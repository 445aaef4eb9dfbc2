#pragma once

// Row-batched Poincare-ball operations recorded on a tape. Each function
// treats its R x D inputs as R independent points and mirrors the scalar
// kernel in hypgeo.hpp formula for formula.

#include "hvacf/hypgeo.hpp"
#include "hvacf/tape.hpp"

namespace hvacf::hypgeo::graph {

using grad::NodeId;
using grad::Tape;

NodeId mobius_add(Tape& t, NodeId x, NodeId y, Curvature c);
// q and z are R x D; rows with z == 0 return q and pass gradient to q only.
NodeId exp_map(Tape& t, NodeId q, NodeId z, Curvature c);
// R x 1 geodesic distances with the atanh argument clipped to [0, 1 - kAtanhEps].
NodeId distance(Tape& t, NodeId x, NodeId y, Curvature c);
NodeId euclid_distance(Tape& t, NodeId x, NodeId y);

}  // namespace hvacf::hypgeo::graph
