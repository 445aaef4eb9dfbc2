#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hvacf/errors.hpp"
#include "hvacf/evalkit.hpp"
#include "hvacf/hypgeo.hpp"
#include "hvacf/objective.hpp"
#include "hvacf/trainer.hpp"

using namespace hvacf;
using hypgeo::Curvature;
using hypgeo::Vec;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec ball_point(std::mt19937_64& rng, std::size_t n, double max_norm) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec v(n);
  for (auto& x : v) x = g(rng);
  const double r = max_norm * std::pow(u(rng), 1.0 / double(n)) / hypgeo::norm(v);
  for (auto& x : v) x *= r;
  return v;
}

Vec neg(Vec v) {
  for (auto& x : v) x = -x;
  return v;
}

void geometry_suite() {
  const auto t0 = Clock::now();
  constexpr int kCases = 10000;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g(0.0, 3.0);
  std::size_t bad_cancel = 0, bad_sym = 0, bad_origin = 0, bad_closure = 0, bad_flat = 0;
  for (double cv : {0.1, 1.0, 10.0}) {
    const Curvature c(cv);
    const Vec zero(5, 0.0);
    for (int i = 0; i < kCases; ++i) {
      const auto x = ball_point(rng, 5, 0.9 / c.sqrt());
      const auto y = ball_point(rng, 5, 0.9 / c.sqrt());
      const auto r = hypgeo::mobius_add(neg(x), hypgeo::mobius_add(x, y, c), c);
      for (std::size_t k = 0; k < 5; ++k)
        if (std::abs(r[k] - y[k]) > 1e-9) { ++bad_cancel; break; }
      if (std::abs(hypgeo::hyp_distance(x, y, c) - hypgeo::hyp_distance(y, x, c)) > 1e-10) ++bad_sym;
      const double closed = 2.0 / c.sqrt() * std::atanh(c.sqrt() * hypgeo::norm(x));
      if (std::abs(hypgeo::hyp_distance(x, zero, c) - closed) > 1e-9) ++bad_origin;

      const auto a = ball_point(rng, 5, c.max_norm());
      const auto b = ball_point(rng, 5, c.max_norm());
      Vec z(5);
      for (auto& v : z) v = g(rng);
      for (const auto& p : {hypgeo::mobius_add(a, b, c), hypgeo::exp_map(a, z, c),
                            hypgeo::project_to_ball(z, c)})
        if (!(cv * hypgeo::dot(p, p) < 1.0)) { ++bad_closure; break; }
    }
  }
  const Curvature flat(1e-6);
  double worst_flat = 0.0;
  for (int i = 0; i < kCases; ++i) {
    const auto x = ball_point(rng, 5, 1.0);
    const auto y = ball_point(rng, 5, 1.0);
    const double e = 2.0 * hypgeo::euclid_distance(x, y);
    const double rel = std::abs(hypgeo::hyp_distance(x, y, flat) - e) / e;
    worst_flat = std::max(worst_flat, rel);
    if (!(rel < 1e-3)) ++bad_flat;
  }
  const double secs = seconds_since(t0);
  const bool ok = bad_cancel + bad_sym + bad_origin + bad_closure + bad_flat == 0 && secs < 30.0;
  report("geometry property suite", ok,
         fmt("violations cancel=%zu sym=%zu origin=%zu closure=%zu flat=%zu (worst flat rel %.2e), "
             "%.2f s",
             bad_cancel, bad_sym, bad_origin, bad_closure, bad_flat, worst_flat, secs));
}

void gradient_fidelity() {
  const auto t0 = Clock::now();
  constexpr std::size_t D = 8, F = 4;
  auto t = model::EmbeddingTables::zeros(5, 10, D, F);
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& tensor : t.tensors)
    for (auto& x : tensor.data) x = u(rng);
  for (std::size_t k = 0; k < D; ++k) t[model::Param::q].data[k] = 0.05 * u(rng);
  std::normal_distribution<float> gf(0.0f, 1.0f);
  std::vector<float> rows(10 * F);
  for (auto& x : rows) x = gf(rng);
  const data::VisualFeatureStore feats(10, F, rows);
  const std::vector<objective::Triplet> batch{{0, 1, 9}, {3, 4, 2}, {4, 7, 5}};
  const std::vector<model::NeighborSample> samples{{2, 3, 6}, {0, 8}, {1, 2, 3, 9}};
  TrainConfig cfg;
  cfg.dim = D;
  cfg.neighbors = 4;
  const auto rep = grad::finite_diff_check(
      [&](grad::Tape& tape) { return objective::build_loss(tape, t, batch, samples, feats, cfg).total; },
      std::vector<Tensor>(t.tensors.begin(), t.tensors.end()), 1e-4);
  const double secs = seconds_since(t0);
  report("gradient fidelity", rep.max_rel_error < 1e-4 && secs < 60.0,
         fmt("max relative error %.3e over %zu tensors, %.2f s", rep.max_rel_error,
             rep.per_param.size(), secs));
}

void auc_oracle() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> len(1, 30), level(0, 6);
  std::size_t mismatches = 0;
  for (int s = 0; s < 100; ++s) {
    std::vector<double> pos(len(rng)), negs(len(rng));
    for (auto& x : pos) x = level(rng) * 0.5;
    for (auto& x : negs) x = level(rng) * 0.5;
    double hits = 0;
    for (double p : pos)
      for (double n : negs) hits += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    const double brute = hits / double(pos.size() * negs.size());
    const auto got = eval::auc_user(pos, negs);
    if (!got || *got != brute) ++mismatches;
  }
  report("AUC oracle", mismatches == 0, fmt("%zu / 100 tie-heavy score sets differ", mismatches));
}

struct Bench {
  data::SynthData synth;
  data::SplitDataset split;
};

struct RunOut {
  double test_auc = 0.0;
  model::EmbeddingTables tables;
  std::string report_json;
  std::vector<unsigned char> checkpoint;
  double secs = 0.0;
};

RunOut run(const Bench& b, const TrainConfig& cfg) {
  const auto t0 = Clock::now();
  const auto& ds = b.synth.dataset;
  auto result = train::train(ds, b.split, b.synth.features, cfg);
  if (result.diverged) throw NumericError("training diverged: " + result.divergence);
  eval::EvalOptions opts;
  opts.neg_per_user = cfg.neg_per_user;
  const auto r = eval::evaluate(result.tables, ds, b.split, b.synth.features, cfg, opts);
  RunOut out;
  out.test_auc = r.mean_auc;
  out.report_json = eval::to_json(r).dump();
  out.checkpoint = train::encode_checkpoint(cfg, result.tables);
  out.tables = std::move(result.tables);
  out.secs = seconds_since(t0);
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

std::string list(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << fmt("%.4f", v[i]);
  return os.str();
}

}  // namespace

int main() {
  geometry_suite();
  gradient_fidelity();
  auc_oracle();

  Bench b;
  b.synth = data::synth_generate({});
  b.split = data::chrono_split(b.synth.dataset);
  const auto& ds = b.synth.dataset;
  const std::vector<std::uint64_t> seeds{1, 2, 3};

  {
    const TrainConfig cfg;
    std::vector<double> aucs;
    for (auto s : seeds) {
      const auto t = model::EmbeddingTables::initialize(ds.n_users(), ds.n_items(), cfg.dim,
                                                        b.synth.features.dim(), s);
      aucs.push_back(eval::evaluate(t, ds, b.split, b.synth.features, cfg).mean_auc);
    }
    const double m = mean(aucs);
    report("random-model sanity", std::abs(m - 0.5) <= 0.02,
           fmt("mean AUC %.4f over untrained seeds (%s)", m, list(aucs).c_str()));
  }

  std::vector<RunOut> complete;
  std::vector<double> complete_auc;
  double complete_secs = 0;
  for (auto s : seeds) {
    TrainConfig cfg;
    cfg.seed = s;
    complete.push_back(run(b, cfg));
    complete_auc.push_back(complete.back().test_auc);
    complete_secs += complete.back().secs;
  }
  const double m_complete = mean(complete_auc);
  report("learning signal", m_complete >= 0.70 && complete_secs / 3 < 300.0,
         fmt("complete test AUC %.4f (%s), %.1f s per 30-epoch run", m_complete,
             list(complete_auc).c_str(), complete_secs / 3));

  auto variant_means = [&](auto&& tweak) {
    std::vector<double> aucs;
    for (auto s : seeds) {
      TrainConfig cfg;
      cfg.seed = s;
      tweak(cfg);
      aucs.push_back(run(b, cfg).test_auc);
    }
    return aucs;
  };
  const auto no_adj = variant_means([](TrainConfig& c) { c.variant = Variant::no_adj; });
  const auto euclid = variant_means([](TrainConfig& c) { c.variant = Variant::euclidean; });
  report("ablation trend: complete > no-adj", m_complete > mean(no_adj),
         fmt("complete %.4f vs no-adj %.4f (%s)", m_complete, mean(no_adj), list(no_adj).c_str()));
  report("ablation trend: complete > euclidean", m_complete > mean(euclid),
         fmt("complete %.4f vs euclidean %.4f (%s)", m_complete, mean(euclid),
             list(euclid).c_str()));

  const auto c100 = variant_means([](TrainConfig& c) { c.c = 100.0; });
  report("curvature sweep trend: AUC(c=100) < AUC(c=1)", mean(c100) < m_complete,
         fmt("c=100 %.4f (%s) vs c=1 %.4f", mean(c100), list(c100).c_str(), m_complete));

  {
    const auto positives = data::positive_sets(ds.n_users(), b.split.train);
    std::vector<double> rs, un, in;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      TrainConfig cfg;
      cfg.seed = seeds[i];
      const auto a = eval::analyze_embeddings(complete[i].tables, positives, b.split.train,
                                              b.synth.features, cfg);
      rs.push_back(a.pearson_r);
      un.push_back(a.mean_user_norm);
      in.push_back(a.mean_item_norm);
    }
    report("embedding analysis: pearson r(item norm, log popularity) < 0", mean(rs) < 0.0,
           fmt("mean r %.4f (%s)", mean(rs), list(rs).c_str()));
    std::cout << "INFO mean user norm " << fmt("%.4f", mean(un)) << " vs mean item norm "
              << fmt("%.4f", mean(in)) << " (user > item: " << (mean(un) > mean(in) ? "yes" : "no")
              << "; per seed users " << list(un) << ", items " << list(in) << ")" << std::endl;
  }

  {
    TrainConfig cfg;
    cfg.seed = seeds[0];
    const auto again = run(b, cfg);
    const bool same_ckpt = again.checkpoint == complete[0].checkpoint;
    const bool same_report = again.report_json == complete[0].report_json;
    report("determinism", same_ckpt && same_report,
           fmt("checkpoint %s (%zu bytes), report %s", same_ckpt ? "identical" : "differs",
               again.checkpoint.size(), same_report ? "identical" : "differs"));
  }

  std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
