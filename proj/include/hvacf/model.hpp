#pragma once

// Forward model: embedding tables, neighbor sampling, attention over a
// user's purchase history, the aggregated user vector and hyperbolic
// item scoring.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "hvacf/config.hpp"
#include "hvacf/dataio.hpp"
#include "hvacf/hypgeo.hpp"
#include "hvacf/tape.hpp"
#include "hvacf/tensor.hpp"

namespace hvacf::model {

using data::ItemId;
using data::UserId;
using hypgeo::Vec;

enum class Param : std::size_t { U, V, P, Wu, Wv, Wp, Wf, b1, w2, b2, q };
inline constexpr std::size_t kParamCount = 11;

std::string_view param_name(Param p);
inline std::string_view param_name(std::size_t slot) { return param_name(Param(slot)); }

// The full learnable parameter set. Vectors are stored as 1 x n rows and
// b2 as 1 x 1.
struct EmbeddingTables {
  std::array<Tensor, kParamCount> tensors;

  Tensor& operator[](Param p) { return tensors[std::size_t(p)]; }
  const Tensor& operator[](Param p) const { return tensors[std::size_t(p)]; }

  std::size_t dim() const { return (*this)[Param::U].cols; }
  std::size_t n_users() const { return (*this)[Param::U].rows; }
  std::size_t n_items() const { return (*this)[Param::V].rows; }
  std::size_t pool_dim() const { return (*this)[Param::Wf].cols; }

  std::span<const Tensor> span() const { return tensors; }
  bool all_finite() const;

  static EmbeddingTables zeros(std::size_t n_users, std::size_t n_items, std::size_t dim,
                               std::size_t pool_dim);
  // U, V, P ~ uniform(+-0.01/sqrt(D)); W ~ uniform(+-1/sqrt(fan_in)); the
  // rest zero, which puts q at the origin.
  static EmbeddingTables initialize(std::size_t n_users, std::size_t n_items, std::size_t dim,
                                    std::size_t pool_dim, std::uint64_t seed);
};

using NeighborSample = std::vector<ItemId>;

// Uniform sample without replacement of min(L, |pool|) items from the
// user's positives minus `exclude`.
NeighborSample sample_neighbors(const data::PositiveSets& positives, UserId user,
                                std::optional<ItemId> exclude, std::size_t L,
                                std::mt19937_64& rng);

// Per-user RNG seed for inference-time sampling, independent of visit order.
std::uint64_t user_seed(std::uint64_t seed, UserId user);

double attention_logit(const EmbeddingTables& t, UserId user, ItemId item,
                       std::span<const float> visual, const ModelWiring& wiring = {});
std::vector<double> attention_weights(std::span<const double> logits, double tau);
Vec aggregate_user(const EmbeddingTables& t, UserId user, std::span<const ItemId> sample,
                   std::span<const double> weights);

// The user vector the objective and ranking see, honoring the variant:
// u_i when aggregation is off, uniform weights when attention is off.
Vec user_vector(const EmbeddingTables& t, UserId user, std::span<const ItemId> sample,
                const data::VisualFeatureStore& features, const ModelWiring& wiring, double tau);

// h(x) = exp_q(x) with q the learned basepoint.
Vec map_to_ball(const EmbeddingTables& t, std::span<const double> x, hypgeo::Curvature c);
Vec item_vector(const EmbeddingTables& t, ItemId item);

// -d_c(h(agg_user), h(v_item)); with a Euclidean wiring -d_euc(agg_user, v_item).
double score_item(const EmbeddingTables& t, std::span<const double> agg_user, ItemId item,
                  hypgeo::Curvature c, const ModelWiring& wiring = {});

// Descending score, ties by ascending id. The neighbor sample excludes
// nothing and is drawn once from `rng`.
std::vector<ItemId> rank_items(const EmbeddingTables& t, const data::PositiveSets& positives,
                               const data::VisualFeatureStore& features, UserId user,
                               std::span<const ItemId> candidates, const TrainConfig& cfg,
                               std::mt19937_64& rng);

// Scores many (user, item) pairs against cached item points.
class Scorer {
 public:
  Scorer(const EmbeddingTables& t, const data::PositiveSets& positives,
         const data::VisualFeatureStore& features, const TrainConfig& cfg,
         std::uint64_t eval_seed);

  // User point in the scoring space (h(u~) or u~), neighbors drawn with
  // user_seed(eval_seed, user).
  Vec user_point(UserId user) const;
  Vec user_vector(UserId user) const;
  double score(std::span<const double> user_point, ItemId item) const;
  const Vec& item_point(ItemId item) const { return item_points_[item]; }

 private:
  const EmbeddingTables& t_;
  const data::PositiveSets& positives_;
  const data::VisualFeatureStore& features_;
  TrainConfig cfg_;
  ModelWiring wiring_;
  std::uint64_t eval_seed_;
  std::vector<Vec> item_points_;
};

// Records the aggregated user vectors (B x D) for a batch of users with
// their neighbor samples; gradients reach every table the wiring uses.
grad::NodeId build_user_vectors(grad::Tape& tape, const EmbeddingTables& t,
                                std::span<const UserId> users,
                                std::span<const NeighborSample> samples,
                                const data::VisualFeatureStore& features,
                                const ModelWiring& wiring, double tau);

// TSV rows `kind<TAB>id<TAB>D coordinates` of h(u~) for users and h(v) for
// items, ids in external form.
void export_embeddings(const std::filesystem::path& path, const EmbeddingTables& t,
                       const data::InteractionDataset& ds, const data::PositiveSets& positives,
                       const data::VisualFeatureStore& features, const TrainConfig& cfg,
                       std::uint64_t eval_seed);

}  // namespace hvacf::model
