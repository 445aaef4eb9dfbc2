#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hvacf/config.hpp"
#include "hvacf/dataio.hpp"
#include "hvacf/model.hpp"
#include "hvacf/objective.hpp"
#include "hvacf/tape.hpp"

namespace hvacf::train {

using objective::LossBreakdown;
using objective::Triplet;

struct TripletBatch {
  std::vector<Triplet> triplets;
  std::size_t skipped = 0;  // draws whose user has no negative item
};

// (user, pos) uniform over the training interactions; the negative is
// rejection-sampled uniformly from items the user never bought.
TripletBatch sample_triplet_batch(std::span<const data::Interaction> train,
                                  const data::PositiveSets& positives, std::size_t n_items,
                                  std::size_t batch, std::mt19937_64& rng);

inline constexpr double kBeta1 = 0.9;
inline constexpr double kBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct OptimizerState {
  std::array<Tensor, model::kParamCount> m;
  std::array<Tensor, model::kParamCount> v;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const model::EmbeddingTables& t);
};

// Bias-corrected adaptive-moment update, then decoupled decay, then the
// basepoint q is projected back into the ball. A non-finite gradient
// leaves tables and state untouched and throws NumericError naming the
// tensor.
void optimizer_step(model::EmbeddingTables& t, const grad::GradientMap& grads,
                    OptimizerState& state, double lr, double weight_decay, hypgeo::Curvature c);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown mean;     // per-step mean of each component
  double valid_auc = 0.0;
  std::size_t skipped = 0;
};

struct TrainOptions {
  std::size_t threads = 1;
  bool validate = true;
  std::uint64_t eval_seed = 0x5eed;
  std::function<void(std::size_t step, const LossBreakdown&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  model::EmbeddingTables tables;  // best-validation tables
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;     // 0 = initial tables
  double best_valid_auc = 0.0;
  bool diverged = false;
  std::string divergence;
};

TrainResult train(const data::InteractionDataset& ds, const data::SplitDataset& split,
                  const data::VisualFeatureStore& features, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

std::string epoch_json_line(const EpochRecord& rec);

// Checkpoint: "HVACF01" | u32 json length | canonical config json |
// u32 tensor count | per tensor: u32 name length, name, u32 rank,
// u32 dims..., little-endian f32 values.
inline constexpr char kCheckpointMagic[7] = {'H', 'V', 'A', 'C', 'F', '0', '1'};

struct Checkpoint {
  TrainConfig cfg;
  model::EmbeddingTables tables;
};

std::vector<unsigned char> encode_checkpoint(const TrainConfig& cfg, const model::EmbeddingTables& t);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);
void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg,
                     const model::EmbeddingTables& t);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hvacf::train
