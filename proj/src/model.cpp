#include "hvacf/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <unordered_map>

#include "hvacf/errors.hpp"

namespace hvacf::model {

using grad::NodeId;
using grad::Tape;

std::string_view param_name(Param p) {
  switch (p) {
    case Param::U: return "U";
    case Param::V: return "V";
    case Param::P: return "P";
    case Param::Wu: return "W_u";
    case Param::Wv: return "W_v";
    case Param::Wp: return "W_p";
    case Param::Wf: return "W_f";
    case Param::b1: return "b1";
    case Param::w2: return "w2";
    case Param::b2: return "b2";
    case Param::q: return "q";
  }
  return "unknown";
}

bool EmbeddingTables::all_finite() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const Tensor& x) { return x.all_finite(); });
}

EmbeddingTables EmbeddingTables::zeros(std::size_t n_users, std::size_t n_items, std::size_t dim,
                                       std::size_t pool_dim) {
  EmbeddingTables t;
  t[Param::U] = Tensor(n_users, dim);
  t[Param::V] = Tensor(n_items, dim);
  t[Param::P] = Tensor(n_items, dim);
  t[Param::Wu] = Tensor(dim, dim);
  t[Param::Wv] = Tensor(dim, dim);
  t[Param::Wp] = Tensor(dim, dim);
  t[Param::Wf] = Tensor(dim, pool_dim);
  t[Param::b1] = Tensor(1, dim);
  t[Param::w2] = Tensor(1, dim);
  t[Param::b2] = Tensor(1, 1);
  t[Param::q] = Tensor(1, dim);
  return t;
}

EmbeddingTables EmbeddingTables::initialize(std::size_t n_users, std::size_t n_items,
                                            std::size_t dim, std::size_t pool_dim,
                                            std::uint64_t seed) {
  EmbeddingTables t = zeros(n_users, n_items, dim, pool_dim);
  std::mt19937_64 rng(seed);
  auto fill = [&](Tensor& x, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : x.data) v = u(rng);
  };
  const double emb = 0.01 / std::sqrt(double(dim));
  fill(t[Param::U], emb);
  fill(t[Param::V], emb);
  fill(t[Param::P], emb);
  fill(t[Param::Wu], 1.0 / std::sqrt(double(dim)));
  fill(t[Param::Wv], 1.0 / std::sqrt(double(dim)));
  fill(t[Param::Wp], 1.0 / std::sqrt(double(dim)));
  fill(t[Param::Wf], 1.0 / std::sqrt(double(pool_dim)));
  return t;
}

std::uint64_t user_seed(std::uint64_t seed, UserId user) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (std::uint64_t(user) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

NeighborSample sample_neighbors(const data::PositiveSets& positives, UserId user,
                                std::optional<ItemId> exclude, std::size_t L,
                                std::mt19937_64& rng) {
  if (user >= positives.size()) throw InvalidInput("sample_neighbors: unknown user");
  if (L == 0) throw InvalidInput("sample_neighbors: L must be positive");
  NeighborSample pool;
  pool.reserve(positives[user].size());
  for (ItemId i : positives[user])
    if (!exclude || i != *exclude) pool.push_back(i);
  if (pool.size() <= L) return pool;
  // Partial Fisher-Yates: the first L slots end up a uniform sample.
  for (std::size_t k = 0; k < L; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(L);
  return pool;
}

double attention_logit(const EmbeddingTables& t, UserId user, ItemId item,
                       std::span<const float> visual, const ModelWiring& wiring) {
  const std::size_t D = t.dim();
  if (user >= t.n_users() || item >= t.n_items())
    throw InvalidInput("attention_logit: index out of range");
  if (visual.size() != t.pool_dim()) throw InvalidInput("attention_logit: visual dimension mismatch");

  auto u = t[Param::U].row(user);
  auto v = t[Param::V].row(item);
  auto p = t[Param::P].row(item);
  double out = t[Param::b2].data[0];
  for (std::size_t r = 0; r < D; ++r) {
    double h = t[Param::b1].data[r];
    h += hypgeo::dot(t[Param::Wu].row(r), u);
    if (wiring.term_v) h += hypgeo::dot(t[Param::Wv].row(r), v);
    if (wiring.term_p) h += hypgeo::dot(t[Param::Wp].row(r), p);
    if (wiring.term_visual) {
      auto wf = t[Param::Wf].row(r);
      for (std::size_t k = 0; k < visual.size(); ++k) h += wf[k] * double(visual[k]);
    }
    if (h > 0.0) out += t[Param::w2].data[r] * h;
  }
  return out;
}

std::vector<double> attention_weights(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("attention_weights: tau must be positive");
  std::vector<double> w(logits.size());
  if (logits.empty()) return w;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (w[i] = std::exp((logits[i] - mx) / tau));
  for (double& x : w) x /= z;
  return w;
}

Vec aggregate_user(const EmbeddingTables& t, UserId user, std::span<const ItemId> sample,
                   std::span<const double> weights) {
  if (sample.size() != weights.size())
    throw std::logic_error("aggregate_user: sample and weights are misaligned");
  auto u = t[Param::U].row(user);
  Vec out(u.begin(), u.end());
  for (std::size_t l = 0; l < sample.size(); ++l) {
    auto p = t[Param::P].row(sample[l]);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += weights[l] * p[d];
  }
  for (double& x : out) x *= 0.5;
  return out;
}

Vec user_vector(const EmbeddingTables& t, UserId user, std::span<const ItemId> sample,
                const data::VisualFeatureStore& features, const ModelWiring& wiring, double tau) {
  if (!wiring.aggregate) {
    auto u = t[Param::U].row(user);
    return Vec(u.begin(), u.end());
  }
  std::vector<double> weights;
  if (!wiring.attention) {
    weights.assign(sample.size(), sample.empty() ? 0.0 : 1.0 / double(sample.size()));
  } else {
    std::vector<double> logits;
    logits.reserve(sample.size());
    for (ItemId l : sample) logits.push_back(attention_logit(t, user, l, features.row(l), wiring));
    weights = attention_weights(logits, tau);
  }
  return aggregate_user(t, user, sample, weights);
}

Vec map_to_ball(const EmbeddingTables& t, std::span<const double> x, hypgeo::Curvature c) {
  return hypgeo::exp_map(t[Param::q].row(0), x, c);
}

Vec item_vector(const EmbeddingTables& t, ItemId item) {
  auto v = t[Param::V].row(item);
  return Vec(v.begin(), v.end());
}

double score_item(const EmbeddingTables& t, std::span<const double> agg_user, ItemId item,
                  hypgeo::Curvature c, const ModelWiring& wiring) {
  if (item >= t.n_items()) throw InvalidInput("score_item: item out of range");
  const Vec v = item_vector(t, item);
  if (!wiring.hyperbolic) return -hypgeo::euclid_distance(agg_user, v);
  return -hypgeo::hyp_distance(map_to_ball(t, agg_user, c), map_to_ball(t, v, c), c);
}

std::vector<ItemId> rank_items(const EmbeddingTables& t, const data::PositiveSets& positives,
                               const data::VisualFeatureStore& features, UserId user,
                               std::span<const ItemId> candidates, const TrainConfig& cfg,
                               std::mt19937_64& rng) {
  const ModelWiring wiring = apply_variant(cfg);
  const hypgeo::Curvature c(cfg.c);
  const auto sample = sample_neighbors(positives, user, std::nullopt, cfg.neighbors, rng);
  const Vec agg = user_vector(t, user, sample, features, wiring, cfg.attention_tau());

  std::vector<std::pair<double, ItemId>> scored;
  scored.reserve(candidates.size());
  for (ItemId i : candidates) scored.emplace_back(score_item(t, agg, i, c, wiring), i);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<ItemId> out;
  out.reserve(scored.size());
  for (const auto& [s, i] : scored) out.push_back(i);
  return out;
}

Scorer::Scorer(const EmbeddingTables& t, const data::PositiveSets& positives,
               const data::VisualFeatureStore& features, const TrainConfig& cfg,
               std::uint64_t eval_seed)
    : t_(t),
      positives_(positives),
      features_(features),
      cfg_(cfg),
      wiring_(apply_variant(cfg)),
      eval_seed_(eval_seed) {
  const hypgeo::Curvature c(cfg.c);
  item_points_.reserve(t.n_items());
  for (ItemId i = 0; i < t.n_items(); ++i) {
    Vec v = item_vector(t, i);
    item_points_.push_back(wiring_.hyperbolic ? map_to_ball(t, v, c) : std::move(v));
  }
}

Vec Scorer::user_vector(UserId user) const {
  std::mt19937_64 rng(user_seed(eval_seed_, user));
  const auto sample = sample_neighbors(positives_, user, std::nullopt, cfg_.neighbors, rng);
  return model::user_vector(t_, user, sample, features_, wiring_, cfg_.attention_tau());
}

Vec Scorer::user_point(UserId user) const {
  Vec u = user_vector(user);
  return wiring_.hyperbolic ? map_to_ball(t_, u, hypgeo::Curvature(cfg_.c)) : u;
}

double Scorer::score(std::span<const double> user_point, ItemId item) const {
  const Vec& v = item_points_.at(item);
  return wiring_.hyperbolic ? -hypgeo::hyp_distance(user_point, v, hypgeo::Curvature(cfg_.c))
                            : -hypgeo::euclid_distance(user_point, v);
}

NodeId build_user_vectors(Tape& tape, const EmbeddingTables& t, std::span<const UserId> users,
                          std::span<const NeighborSample> samples,
                          const data::VisualFeatureStore& features, const ModelWiring& wiring,
                          double tau) {
  if (users.size() != samples.size())
    throw std::logic_error("build_user_vectors: users and samples are misaligned");
  auto slot = [&](Param p) { return tape.param(std::size_t(p)); };

  const NodeId U = tape.gather_rows(slot(Param::U), {users.begin(), users.end()});
  if (!wiring.aggregate) return U;

  std::vector<std::uint32_t> offsets{0}, flat, owner;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    for (ItemId l : samples[b]) {
      flat.push_back(l);
      owner.push_back(static_cast<std::uint32_t>(b));
    }
    offsets.push_back(static_cast<std::uint32_t>(flat.size()));
  }
  if (flat.empty()) return tape.scale(U, 0.5);

  NodeId alpha;
  if (!wiring.attention) {
    Tensor w(flat.size(), 1);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s)
      for (auto i = offsets[s]; i < offsets[s + 1]; ++i)
        w.data[i] = 1.0 / double(offsets[s + 1] - offsets[s]);
    alpha = tape.constant(std::move(w));
  } else {
    // Item-side projections are computed once per distinct neighbor item.
    std::vector<std::uint32_t> uniq, local(flat.size());
    std::unordered_map<ItemId, std::uint32_t> pos;
    for (std::size_t k = 0; k < flat.size(); ++k) {
      auto [it, inserted] = pos.try_emplace(flat[k], static_cast<std::uint32_t>(uniq.size()));
      if (inserted) uniq.push_back(flat[k]);
      local[k] = it->second;
    }
    NodeId pre = tape.gather_rows(tape.matmul_nt(U, slot(Param::Wu)), owner);
    if (wiring.term_v) {
      const NodeId proj = tape.matmul_nt(tape.gather_rows(slot(Param::V), uniq), slot(Param::Wv));
      pre = tape.add(pre, tape.gather_rows(proj, local));
    }
    if (wiring.term_p) {
      const NodeId proj = tape.matmul_nt(tape.gather_rows(slot(Param::P), uniq), slot(Param::Wp));
      pre = tape.add(pre, tape.gather_rows(proj, local));
    }
    if (wiring.term_visual) {
      Tensor f(uniq.size(), features.dim());
      for (std::size_t k = 0; k < uniq.size(); ++k) {
        auto src = features.row(uniq[k]);
        std::copy(src.begin(), src.end(), f.row(k).begin());
      }
      const NodeId proj = tape.matmul_nt(tape.constant(std::move(f)), slot(Param::Wf));
      pre = tape.add(pre, tape.gather_rows(proj, local));
    }
    const NodeId hidden = tape.relu(tape.add(pre, slot(Param::b1)));
    const NodeId logits = tape.add(tape.matmul_nt(hidden, slot(Param::w2)), slot(Param::b2));
    alpha = tape.segment_softmax(tape.scale(logits, 1.0 / tau), offsets);
  }

  const NodeId weighted = tape.mul(alpha, tape.gather_rows(slot(Param::P), flat));
  const NodeId summed = tape.segment_sum(weighted, offsets);
  return tape.scale(tape.add(U, summed), 0.5);
}

void export_embeddings(const std::filesystem::path& path, const EmbeddingTables& t,
                       const data::InteractionDataset& ds, const data::PositiveSets& positives,
                       const data::VisualFeatureStore& features, const TrainConfig& cfg,
                       std::uint64_t eval_seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(9);
  const Scorer scorer(t, positives, features, cfg, eval_seed);
  auto row = [&](const char* kind, const std::string& id, const Vec& x) {
    out << kind << '\t' << id;
    for (double v : x) out << '\t' << v;
    out << '\n';
  };
  for (UserId u = 0; u < t.n_users(); ++u) row("user", ds.users.external(u), scorer.user_point(u));
  for (ItemId i = 0; i < t.n_items(); ++i) row("item", ds.items.external(i), scorer.item_point(i));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace hvacf::model
