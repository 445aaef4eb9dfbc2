#include "hvacf/trainer.hpp"

#include <cmath>

#include <json.hpp>

#include "hvacf/errors.hpp"
#include "hvacf/evalkit.hpp"

namespace hvacf::train {

using model::EmbeddingTables;
using model::Param;

TripletBatch sample_triplet_batch(std::span<const data::Interaction> train,
                                  const data::PositiveSets& positives, std::size_t n_items,
                                  std::size_t batch, std::mt19937_64& rng) {
  if (train.empty()) throw InvalidInput("sample_triplet_batch: empty training split");
  std::uniform_int_distribution<std::size_t> pick_row(0, train.size() - 1);
  std::uniform_int_distribution<data::ItemId> pick_item(0, static_cast<data::ItemId>(n_items - 1));

  TripletBatch out;
  out.triplets.reserve(batch);
  // Bounded so a split where every user owns the whole catalog terminates.
  const std::size_t max_draws = 64 * batch + 64;
  for (std::size_t draws = 0; out.triplets.size() < batch && draws < max_draws; ++draws) {
    const auto& x = train[pick_row(rng)];
    const auto& pos = positives.at(x.user);
    if (pos.size() >= n_items) {
      ++out.skipped;
      continue;
    }
    data::ItemId k;
    do {
      k = pick_item(rng);
    } while (data::contains(pos, k));
    out.triplets.push_back({x.user, x.item, k});
  }
  return out;
}

OptimizerState OptimizerState::zeros_like(const EmbeddingTables& t) {
  OptimizerState s;
  for (std::size_t i = 0; i < model::kParamCount; ++i) {
    s.m[i] = Tensor(t.tensors[i].rows, t.tensors[i].cols);
    s.v[i] = Tensor(t.tensors[i].rows, t.tensors[i].cols);
  }
  return s;
}

void optimizer_step(EmbeddingTables& t, const grad::GradientMap& grads, OptimizerState& state,
                    double lr, double weight_decay, hypgeo::Curvature c) {
  if (grads.size() != model::kParamCount)
    throw std::logic_error("optimizer_step: gradient map does not match the tables");
  for (std::size_t i = 0; i < model::kParamCount; ++i) {
    if (!grads[i].same_shape(t.tensors[i]))
      throw std::logic_error("optimizer_step: gradient shape mismatch for " +
                             std::string(model::param_name(i)));
    if (!grads[i].all_finite())
      throw NumericError("non-finite gradient for tensor " + std::string(model::param_name(i)));
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, double(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, double(state.step));
  for (std::size_t i = 0; i < model::kParamCount; ++i) {
    auto& theta = t.tensors[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const auto& g = grads[i].data;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      theta[k] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
      theta[k] -= lr * weight_decay * theta[k];
    }
  }
  Tensor& q = t[Param::q];
  const auto projected = hypgeo::project_to_ball(q.row(0), c);
  std::copy(projected.begin(), projected.end(), q.data.begin());
}

std::string epoch_json_line(const EpochRecord& rec) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["hyp"] = rec.mean.hyp;
  j["adj"] = rec.mean.adj;
  j["reg"] = rec.mean.reg;
  j["total"] = rec.mean.total;
  j["active"] = rec.mean.margin_active_fraction;
  j["valid_auc"] = rec.valid_auc;
  j["skipped"] = rec.skipped;
  return j.dump();
}

TrainResult train(const data::InteractionDataset& ds, const data::SplitDataset& split,
                  const data::VisualFeatureStore& raw_features, const TrainConfig& cfg,
                  const TrainOptions& opts) {
  cfg.validate();
  const hypgeo::Curvature c(cfg.c);
  const data::VisualFeatureStore features =
      raw_features.count() == ds.n_items() ? raw_features : raw_features.resized(ds.n_items());
  const auto positives = data::positive_sets(ds.n_users(), split.train);

  TrainResult result;
  result.tables =
      EmbeddingTables::initialize(ds.n_users(), ds.n_items(), cfg.dim, features.dim(), cfg.seed);
  if (cfg.epochs == 0 || split.train.empty()) return result;

  EmbeddingTables tables = result.tables;
  OptimizerState state = OptimizerState::zeros_like(tables);
  std::mt19937_64 rng(cfg.seed ^ 0x7261696eULL);
  const std::size_t steps_per_epoch = (split.train.size() + cfg.batch - 1) / cfg.batch;

  eval::EvalOptions eval_opts;
  eval_opts.neg_per_user = cfg.neg_per_user;
  eval_opts.seed = opts.eval_seed;
  eval_opts.threads = opts.threads;
  eval_opts.target = eval::Target::valid;

  bool have_best = false;
  std::size_t global_step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      for (std::size_t s = 0; s < steps_per_epoch; ++s) {
        auto batch = sample_triplet_batch(split.train, positives, ds.n_items(), cfg.batch, rng);
        rec.skipped += batch.skipped;
        if (batch.triplets.empty()) continue;
        std::vector<model::NeighborSample> samples;
        samples.reserve(batch.triplets.size());
        for (const auto& x : batch.triplets)
          samples.push_back(model::sample_neighbors(positives, x.user, x.pos, cfg.neighbors, rng));

        grad::Tape tape(tables.span());
        const auto g = objective::build_loss(tape, tables, batch.triplets, samples, features, cfg);
        const auto loss = objective::read_breakdown(tape, g);
        if (!std::isfinite(loss.total)) throw NumericError("non-finite total loss");
        const auto grads = tape.backward(g.total);
        optimizer_step(tables, grads, state, cfg.lr, cfg.weight_decay, c);

        rec.mean.hyp += loss.hyp;
        rec.mean.adj += loss.adj;
        rec.mean.reg += loss.reg;
        rec.mean.total += loss.total;
        rec.mean.margin_active_fraction += loss.margin_active_fraction;
        if (opts.on_step) opts.on_step(++global_step, loss);
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
      return result;
    }

    const double n = double(steps_per_epoch);
    rec.mean.hyp /= n;
    rec.mean.adj /= n;
    rec.mean.reg /= n;
    rec.mean.total /= n;
    rec.mean.margin_active_fraction /= n;

    bool improved = true;
    if (opts.validate) {
      const auto report = eval::evaluate(tables, ds, split, features, cfg, eval_opts);
      rec.valid_auc = report.mean_auc;
      improved = report.evaluated == 0 || !have_best || rec.valid_auc > result.best_valid_auc;
    }
    if (improved) {
      result.tables = tables;
      result.best_epoch = epoch;
      result.best_valid_auc = rec.valid_auc;
      have_best = true;
    }
    result.history.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
  }
  return result;
}

}  // namespace hvacf::train
