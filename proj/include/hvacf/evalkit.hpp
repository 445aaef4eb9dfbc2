#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hvacf/config.hpp"
#include "hvacf/dataio.hpp"
#include "hvacf/model.hpp"

namespace hvacf::eval {

using data::ItemId;
using data::UserId;

inline constexpr std::uint64_t kEvalSeed = 0x5eed;
inline constexpr std::size_t kHistogramBins = 50;

// Share of (pos, neg) pairs ranked correctly, ties counted as half.
// nullopt when either list is empty.
std::optional<double> auc_user(std::span<const double> scores_pos,
                               std::span<const double> scores_neg);

struct UserAuc {
  UserId user = 0;
  double auc = 0.0;
};

struct AucReport {
  double mean_auc = 0.0;
  std::vector<UserAuc> per_user;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

enum class Target { valid, test };

struct EvalOptions {
  std::size_t neg_per_user = 100;  // 0 = all available negatives
  std::uint64_t seed = kEvalSeed;
  std::size_t threads = 1;
  Target target = Target::test;
};

// Per user with at least one target-split positive: positives are the
// target items seen in training, negatives a seeded uniform sample of
// training-seen items the user never interacted with in any split. Users
// without training history or without a positive/negative are skipped.
AucReport evaluate(const model::EmbeddingTables& t, const data::InteractionDataset& ds,
                   const data::SplitDataset& split, const data::VisualFeatureStore& features,
                   const TrainConfig& cfg, const EvalOptions& opts = {});

nlohmann::json to_json(const AucReport& r);

struct AblationRow {
  Variant variant = Variant::complete;
  std::vector<double> aucs;  // one per seed
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds
  std::vector<std::string> errors;
};

struct RunOptions {
  std::size_t seeds = 3;
  std::size_t threads = 1;
  EvalOptions eval;
};

// Trains `cfg` and returns the test-split mean AUC of the best-validation tables.
double train_and_evaluate(const data::InteractionDataset& ds, const data::SplitDataset& split,
                          const data::VisualFeatureStore& features, const TrainConfig& cfg,
                          const RunOptions& opts);

// All eight variants, seeds base.seed .. base.seed + seeds - 1.
std::vector<AblationRow> run_ablations(const data::InteractionDataset& ds,
                                       const data::SplitDataset& split,
                                       const data::VisualFeatureStore& features,
                                       const TrainConfig& base, const RunOptions& opts = {});
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);
std::string ablation_table(const std::vector<AblationRow>& rows);

enum class SweepParam { gamma, c };
SweepParam parse_sweep_param(std::string_view name);

struct SweepPoint {
  double value = 0.0;
  double auc = 0.0;
  std::string error;
};

std::vector<SweepPoint> sweep(const data::InteractionDataset& ds, const data::SplitDataset& split,
                              const data::VisualFeatureStore& features, const TrainConfig& base,
                              SweepParam param, std::span<const double> values,
                              const RunOptions& opts = {});
nlohmann::json sweep_json(SweepParam param, const std::vector<SweepPoint>& points);
std::string sweep_table(SweepParam param, const std::vector<SweepPoint>& points);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
  // Values at or beyond hi land in the last bin.
  static Histogram build(std::span<const double> values, double lo, double hi, std::size_t bins);
  std::size_t total() const;
};

struct EmbeddingAnalysis {
  std::vector<double> user_norms;  // |h(u~)|
  std::vector<double> item_norms;  // |h(v)|
  Histogram user_hist;
  Histogram item_hist;
  double pearson_r = 0.0;  // NaN when either side has zero variance
  bool zero_variance = false;
  double mean_user_norm = 0.0;
  double mean_item_norm = 0.0;
};

double pearson(std::span<const double> x, std::span<const double> y);

// Item popularity is the training purchase count, transformed by log(1 + n).
EmbeddingAnalysis analyze_embeddings(const model::EmbeddingTables& t,
                                     const data::PositiveSets& train_positives,
                                     std::span<const data::Interaction> train,
                                     const data::VisualFeatureStore& features,
                                     const TrainConfig& cfg, std::uint64_t eval_seed = kEvalSeed);

nlohmann::json to_json(const EmbeddingAnalysis& a);
// bin_left,bin_right,user_count,item_count
void write_histogram_csv(const EmbeddingAnalysis& a, const std::filesystem::path& path);

}  // namespace hvacf::eval
