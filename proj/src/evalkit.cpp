#include "hvacf/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "hvacf/errors.hpp"
#include "hvacf/trainer.hpp"

namespace hvacf::eval {

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; every index is
// handled exactly once and results are written by index, so the outcome
// does not depend on the thread count.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / double(x.size());
}

double sample_std(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / double(x.size() - 1));
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

std::optional<double> auc_user(std::span<const double> scores_pos,
                               std::span<const double> scores_neg) {
  if (scores_pos.empty() || scores_neg.empty()) return std::nullopt;
  std::vector<double> neg(scores_neg.begin(), scores_neg.end());
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double p : scores_pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    wins += double(lo - neg.begin()) + 0.5 * double(hi - lo);
  }
  return wins / (double(scores_pos.size()) * double(scores_neg.size()));
}

AucReport evaluate(const model::EmbeddingTables& t, const data::InteractionDataset& ds,
                   const data::SplitDataset& split, const data::VisualFeatureStore& raw_features,
                   const TrainConfig& cfg, const EvalOptions& opts) {
  const std::size_t n_users = ds.n_users();
  const std::size_t n_items = ds.n_items();
  const data::VisualFeatureStore features =
      raw_features.count() == n_items ? raw_features : raw_features.resized(n_items);

  const auto train_pos = data::positive_sets(n_users, split.train);
  std::vector<data::Interaction> all(split.train);
  all.insert(all.end(), split.valid.begin(), split.valid.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  const auto all_pos = data::positive_sets(n_users, all);
  const auto& target = opts.target == Target::test ? split.test : split.valid;
  const auto target_pos = data::positive_sets(n_users, target);

  std::vector<bool> warm(n_items, false);
  for (const auto& x : split.train) warm[x.item] = true;

  std::vector<UserId> users;
  for (UserId u = 0; u < n_users; ++u)
    if (!target_pos[u].empty()) users.push_back(u);

  const model::Scorer scorer(t, train_pos, features, cfg, opts.seed);
  std::vector<std::optional<double>> results(users.size());

  parallel_for(users.size(), opts.threads, [&](std::size_t idx) {
    const UserId u = users[idx];
    if (train_pos[u].empty()) return;
    std::vector<ItemId> pos;
    for (ItemId i : target_pos[u])
      if (warm[i]) pos.push_back(i);
    std::vector<ItemId> pool;
    for (ItemId i = 0; i < n_items; ++i)
      if (warm[i] && !data::contains(all_pos[u], i)) pool.push_back(i);
    if (pos.empty() || pool.empty()) return;

    if (opts.neg_per_user != 0 && opts.neg_per_user < pool.size()) {
      std::mt19937_64 rng(model::user_seed(opts.seed ^ 0x6e65676174697665ULL, u));
      for (std::size_t k = 0; k < opts.neg_per_user; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
        std::swap(pool[k], pool[pick(rng)]);
      }
      pool.resize(opts.neg_per_user);
    }

    const auto point = scorer.user_point(u);
    std::vector<double> sp, sn;
    sp.reserve(pos.size());
    sn.reserve(pool.size());
    for (ItemId i : pos) sp.push_back(scorer.score(point, i));
    for (ItemId i : pool) sn.push_back(scorer.score(point, i));
    results[idx] = auc_user(sp, sn);
  });

  AucReport report;
  double sum = 0.0;
  for (std::size_t idx = 0; idx < users.size(); ++idx) {
    if (!results[idx]) {
      ++report.skipped;
      continue;
    }
    report.per_user.push_back({users[idx], *results[idx]});
    sum += *results[idx];
  }
  report.evaluated = report.per_user.size();
  report.mean_auc = report.evaluated ? sum / double(report.evaluated) : 0.0;
  return report;
}

nlohmann::json to_json(const AucReport& r) {
  nlohmann::json per_user = nlohmann::json::array();
  for (const auto& x : r.per_user) per_user.push_back({{"user", x.user}, {"auc", x.auc}});
  return {{"mean_auc", r.mean_auc},
          {"evaluated", r.evaluated},
          {"skipped", r.skipped},
          {"per_user", per_user}};
}

double train_and_evaluate(const data::InteractionDataset& ds, const data::SplitDataset& split,
                          const data::VisualFeatureStore& features, const TrainConfig& cfg,
                          const RunOptions& opts) {
  train::TrainOptions topts;
  topts.threads = opts.threads;
  topts.eval_seed = opts.eval.seed;
  const auto result = train::train(ds, split, features, cfg, topts);
  if (result.diverged) throw NumericError("training diverged: " + result.divergence);
  EvalOptions eopts = opts.eval;
  eopts.neg_per_user = cfg.neg_per_user;
  eopts.threads = opts.threads;
  eopts.target = Target::test;
  return evaluate(result.tables, ds, split, features, cfg, eopts).mean_auc;
}

std::vector<AblationRow> run_ablations(const data::InteractionDataset& ds,
                                       const data::SplitDataset& split,
                                       const data::VisualFeatureStore& features,
                                       const TrainConfig& base, const RunOptions& opts) {
  std::vector<AblationRow> rows;
  for (Variant v : kAllVariants) {
    AblationRow row;
    row.variant = v;
    for (std::size_t s = 0; s < opts.seeds; ++s) {
      TrainConfig cfg = base;
      cfg.variant = v;
      cfg.seed = base.seed + s;
      try {
        row.aucs.push_back(train_and_evaluate(ds, split, features, cfg, opts));
      } catch (const std::exception& e) {
        row.errors.push_back("seed " + std::to_string(cfg.seed) + ": " + e.what());
      }
    }
    row.mean = mean_of(row.aucs);
    row.std = sample_std(row.aucs);
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"variant", std::string(variant_name(r.variant))},
                   {"mean_auc", r.mean},
                   {"std", r.std},
                   {"aucs", r.aucs},
                   {"errors", r.errors}});
  return out;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "variant" << std::right << std::setw(10) << "mean_auc"
     << std::setw(10) << "std" << "  per-seed\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << variant_name(r.variant) << std::right << std::setw(10)
       << fixed(r.mean) << std::setw(10) << fixed(r.std) << " ";
    for (double a : r.aucs) os << ' ' << fixed(a);
    if (!r.errors.empty()) os << "  (" << r.errors.size() << " failed)";
    os << '\n';
  }
  return os.str();
}

SweepParam parse_sweep_param(std::string_view name) {
  if (name == "gamma") return SweepParam::gamma;
  if (name == "c") return SweepParam::c;
  throw ConfigError("sweep parameter must be 'gamma' or 'c', got '" + std::string(name) + "'");
}

namespace {
std::string_view sweep_name(SweepParam p) { return p == SweepParam::gamma ? "gamma" : "c"; }
}  // namespace

std::vector<SweepPoint> sweep(const data::InteractionDataset& ds, const data::SplitDataset& split,
                              const data::VisualFeatureStore& features, const TrainConfig& base,
                              SweepParam param, std::span<const double> values,
                              const RunOptions& opts) {
  if (values.empty()) throw InvalidInput("sweep: no values given");
  std::vector<SweepPoint> points;
  for (double value : values) {
    SweepPoint p;
    p.value = value;
    TrainConfig cfg = base;
    (param == SweepParam::gamma ? cfg.gamma : cfg.c) = value;
    try {
      p.auc = train_and_evaluate(ds, split, features, cfg, opts);
    } catch (const std::exception& e) {
      p.auc = std::numeric_limits<double>::quiet_NaN();
      p.error = e.what();
    }
    points.push_back(std::move(p));
  }
  return points;
}

nlohmann::json sweep_json(SweepParam param, const std::vector<SweepPoint>& points) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) {
    nlohmann::json j = {{"value", p.value}, {"auc", p.auc}};
    if (!p.error.empty()) j["error"] = p.error;
    pts.push_back(j);
  }
  return {{"param", std::string(sweep_name(param))}, {"points", pts}};
}

std::string sweep_table(SweepParam param, const std::vector<SweepPoint>& points) {
  std::ostringstream os;
  os << std::right << std::setw(12) << sweep_name(param) << std::setw(10) << "auc" << '\n';
  for (const auto& p : points) {
    os << std::setw(12) << p.value << std::setw(10) << fixed(p.auc);
    if (!p.error.empty()) os << "  error: " << p.error;
    os << '\n';
  }
  return os.str();
}

Histogram Histogram::build(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw InvalidInput("Histogram: need bins > 0 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    const double pos = (v - lo) / (hi - lo) * double(bins);
    const auto b = pos <= 0.0 ? std::size_t{0}
                              : std::min(bins - 1, static_cast<std::size_t>(std::floor(pos)));
    ++h.counts[b];
  }
  return h;
}

std::size_t Histogram::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw InvalidInput("pearson: size mismatch");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

EmbeddingAnalysis analyze_embeddings(const model::EmbeddingTables& t,
                                     const data::PositiveSets& train_positives,
                                     std::span<const data::Interaction> train,
                                     const data::VisualFeatureStore& raw_features,
                                     const TrainConfig& cfg, std::uint64_t eval_seed) {
  const data::VisualFeatureStore features = raw_features.count() == t.n_items()
                                                ? raw_features
                                                : raw_features.resized(t.n_items());
  const model::Scorer scorer(t, train_positives, features, cfg, eval_seed);

  EmbeddingAnalysis a;
  for (UserId u = 0; u < t.n_users(); ++u) a.user_norms.push_back(hypgeo::norm(scorer.user_point(u)));
  for (ItemId i = 0; i < t.n_items(); ++i) a.item_norms.push_back(hypgeo::norm(scorer.item_point(i)));

  const double radius = 1.0 / std::sqrt(cfg.c);
  a.user_hist = Histogram::build(a.user_norms, 0.0, radius, kHistogramBins);
  a.item_hist = Histogram::build(a.item_norms, 0.0, radius, kHistogramBins);
  a.mean_user_norm = mean_of(a.user_norms);
  a.mean_item_norm = mean_of(a.item_norms);

  std::vector<double> popularity(t.n_items(), 0.0);
  for (const auto& x : train) popularity.at(x.item) += 1.0;
  for (double& p : popularity) p = std::log1p(p);
  a.pearson_r = a.item_norms.empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : pearson(a.item_norms, popularity);
  a.zero_variance = std::isnan(a.pearson_r);
  return a;
}

nlohmann::json to_json(const EmbeddingAnalysis& a) {
  return {
      {"pearson_r", a.zero_variance ? nlohmann::json(nullptr) : nlohmann::json(a.pearson_r)},
      {"zero_variance", a.zero_variance},
      {"mean_user_norm", a.mean_user_norm},
      {"mean_item_norm", a.mean_item_norm},
      {"users", a.user_norms.size()},
      {"items", a.item_norms.size()},
      {"bins", a.user_hist.counts.size()},
      {"user_hist", a.user_hist.counts},
      {"item_hist", a.item_hist.counts},
  };
}

void write_histogram_csv(const EmbeddingAnalysis& a, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "bin_left,bin_right,user_count,item_count\n";
  out << std::setprecision(9);
  const std::size_t bins = a.user_hist.counts.size();
  const double width = (a.user_hist.hi - a.user_hist.lo) / double(bins);
  for (std::size_t b = 0; b < bins; ++b)
    out << a.user_hist.lo + width * double(b) << ',' << a.user_hist.lo + width * double(b + 1)
        << ',' << a.user_hist.counts[b] << ',' << a.item_hist.counts[b] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace hvacf::eval
