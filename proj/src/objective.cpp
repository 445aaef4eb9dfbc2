#include "hvacf/objective.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "hvacf/errors.hpp"
#include "hvacf/hypgeo_graph.hpp"

namespace hvacf::objective {

using grad::NodeId;
using grad::Tape;
using model::Param;

std::string loss_json_line(std::size_t step, const LossBreakdown& loss) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["hyp"] = loss.hyp;
  j["adj"] = loss.adj;
  j["reg"] = loss.reg;
  j["total"] = loss.total;
  j["active"] = loss.margin_active_fraction;
  return j.dump();
}

double hyp_triplet_loss(std::span<const double> agg_user, std::span<const double> v_pos,
                        std::span<const double> v_neg, std::span<const double> q,
                        hypgeo::Curvature c, double margin) {
  if (!(margin > 0.0)) throw InvalidInput("hyp_triplet_loss: margin must be positive");
  const auto hu = hypgeo::exp_map(q, agg_user, c);
  const double dp = hypgeo::hyp_distance(hu, hypgeo::exp_map(q, v_pos, c), c);
  const double dn = hypgeo::hyp_distance(hu, hypgeo::exp_map(q, v_neg, c), c);
  return std::max(0.0, margin + dp * dp - dn * dn);
}

double adj_term(std::span<const double> x, std::span<const double> y, std::span<const double> q,
                hypgeo::Curvature c) {
  const double dh = hypgeo::hyp_distance(hypgeo::exp_map(q, x, c), hypgeo::exp_map(q, y, c), c);
  const double de = hypgeo::euclid_distance(x, y);
  return std::max(0.0, std::fabs(dh - de) / std::max(de, kAdjFloor));
}

double reg_norm(const model::EmbeddingTables& t) {
  double s = 0.0;
  for (const Tensor& x : t.tensors) s += x.squared_norm();
  return s;
}

LossGraph build_loss(Tape& tape, const model::EmbeddingTables& t, std::span<const Triplet> batch,
                     std::span<const model::NeighborSample> samples,
                     const data::VisualFeatureStore& features, const TrainConfig& cfg) {
  if (batch.empty()) throw InvalidInput("build_loss: empty batch");
  const ModelWiring wiring = apply_variant(cfg);
  const hypgeo::Curvature c(cfg.c);

  std::vector<UserId> users;
  std::vector<std::uint32_t> pos, neg;
  for (const auto& x : batch) {
    users.push_back(x.user);
    pos.push_back(x.pos);
    neg.push_back(x.neg);
  }
  const NodeId agg =
      model::build_user_vectors(tape, t, users, samples, features, wiring, cfg.attention_tau());
  const NodeId V = tape.param(std::size_t(Param::V));
  const NodeId vp = tape.gather_rows(V, pos);
  const NodeId vn = tape.gather_rows(V, neg);

  LossGraph g;
  NodeId dp, dn;
  if (wiring.hyperbolic) {
    const NodeId q =
        tape.gather_rows(tape.param(std::size_t(Param::q)), std::vector<std::uint32_t>(batch.size(), 0));
    const NodeId hu = hypgeo::graph::exp_map(tape, q, agg, c);
    dp = hypgeo::graph::distance(tape, hu, hypgeo::graph::exp_map(tape, q, vp, c), c);
    dn = hypgeo::graph::distance(tape, hu, hypgeo::graph::exp_map(tape, q, vn, c), c);
  } else {
    dp = hypgeo::graph::euclid_distance(tape, agg, vp);
    dn = hypgeo::graph::euclid_distance(tape, agg, vn);
  }
  g.hinge = tape.max_const(tape.add_scalar(tape.sub(tape.square(dp), tape.square(dn)), cfg.margin), 0.0);
  g.hyp = tape.sum_all(g.hinge);
  NodeId total = g.hyp;

  if (wiring.use_adj) {
    auto f_adj = [&](NodeId d_hyp, NodeId y) {
      const NodeId de = hypgeo::graph::euclid_distance(tape, agg, y);
      const NodeId rel = tape.div(tape.abs(tape.sub(d_hyp, de)), tape.max_const(de, kAdjFloor));
      return tape.sum_all(tape.max_const(rel, 0.0));
    };
    g.adj = tape.add(f_adj(dp, vp), f_adj(dn, vn));
    g.has_adj = true;
    total = tape.add(total, tape.scale(g.adj, wiring.gamma));
  }

  NodeId reg = tape.sum_all(tape.square(tape.param(0)));
  for (std::size_t s = 1; s < model::kParamCount; ++s)
    reg = tape.add(reg, tape.sum_all(tape.square(tape.param(s))));
  g.reg = reg;
  g.total = tape.add(total, tape.scale(reg, cfg.lambda));
  return g;
}

LossBreakdown read_breakdown(const Tape& tape, const LossGraph& g) {
  LossBreakdown out;
  out.hyp = tape.value(g.hyp).item();
  out.adj = g.has_adj ? tape.value(g.adj).item() : 0.0;
  out.reg = tape.value(g.reg).item();
  out.total = tape.value(g.total).item();
  const Tensor& h = tape.value(g.hinge);
  const auto active = std::count_if(h.data.begin(), h.data.end(), [](double v) { return v > 0.0; });
  out.margin_active_fraction = h.empty() ? 0.0 : double(active) / double(h.size());
  return out;
}

LossBreakdown total_loss(const model::EmbeddingTables& t, std::span<const Triplet> batch,
                         std::span<const model::NeighborSample> samples,
                         const data::VisualFeatureStore& features, const TrainConfig& cfg) {
  Tape tape(t.span());
  const LossGraph g = build_loss(tape, t, batch, samples, features, cfg);
  return read_breakdown(tape, g);
}

}  // namespace hvacf::objective
