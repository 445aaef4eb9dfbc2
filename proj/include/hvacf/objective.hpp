#pragma once

// Multi-task loss: squared-distance triplet hinge in the ball, relative
// hyperbolic/Euclidean discrepancy (adjustment) loss and L2 regularization
// of every parameter.

#include <span>
#include <string>
#include <vector>

#include "hvacf/config.hpp"
#include "hvacf/model.hpp"
#include "hvacf/tape.hpp"

namespace hvacf::objective {

using data::ItemId;
using data::UserId;

inline constexpr double kAdjFloor = 1e-9;

struct Triplet {
  UserId user = 0;
  ItemId pos = 0;
  ItemId neg = 0;
};

struct LossBreakdown {
  double hyp = 0.0;
  double adj = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double margin_active_fraction = 0.0;
};

// {"step":n,"hyp":...,"adj":...,"reg":...,"total":...,"active":...}
std::string loss_json_line(std::size_t step, const LossBreakdown& loss);

// q is the basepoint of h(). Squared distances inside the hinge.
double hyp_triplet_loss(std::span<const double> agg_user, std::span<const double> v_pos,
                        std::span<const double> v_neg, std::span<const double> q,
                        hypgeo::Curvature c, double margin);
double adj_term(std::span<const double> x, std::span<const double> y, std::span<const double> q,
                hypgeo::Curvature c);
double reg_norm(const model::EmbeddingTables& t);

struct LossGraph {
  grad::NodeId total = 0;
  grad::NodeId hyp = 0;
  grad::NodeId adj = 0;  // meaningful only when has_adj
  grad::NodeId reg = 0;
  grad::NodeId hinge = 0;  // B x 1 per-triplet hinge values
  bool has_adj = false;
};

// Records the batch loss. samples[b] is the neighbor sample for batch[b].
LossGraph build_loss(grad::Tape& tape, const model::EmbeddingTables& t,
                     std::span<const Triplet> batch, std::span<const model::NeighborSample> samples,
                     const data::VisualFeatureStore& features, const TrainConfig& cfg);

LossBreakdown read_breakdown(const grad::Tape& tape, const LossGraph& g);

LossBreakdown total_loss(const model::EmbeddingTables& t, std::span<const Triplet> batch,
                         std::span<const model::NeighborSample> samples,
                         const data::VisualFeatureStore& features, const TrainConfig& cfg);

}  // namespace hvacf::objective
