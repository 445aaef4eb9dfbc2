#include "hvacf/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "hvacf/errors.hpp"
#include "hvacf/evalkit.hpp"
#include "hvacf/model.hpp"
#include "hvacf/trainer.hpp"

namespace hvacf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view subcommand_name(Subcommand s) {
  switch (s) {
    case Subcommand::synth: return "synth";
    case Subcommand::train: return "train";
    case Subcommand::evaluate: return "evaluate";
    case Subcommand::ablate: return "ablate";
    case Subcommand::sweep: return "sweep";
    case Subcommand::analyze: return "analyze";
    case Subcommand::export_embeddings: return "export-embeddings";
  }
  return "unknown";
}

namespace {

constexpr const char* kInteractionsFile = "interactions.csv";
constexpr const char* kFeaturesFile = "features.hvfeat";
constexpr const char* kCheckpointFile = "checkpoint.hvacf";

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, std::string_view(kv).substr(0, eq), std::string_view(kv).substr(eq + 1));
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    TrainConfig scratch;
    set_config_value(scratch, "gamma", item);  // reuses the numeric validation
    out.push_back(scratch.gamma);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

struct Inputs {
  data::InteractionDataset ds;
  data::SplitDataset split;
  data::VisualFeatureStore features;
};

Inputs load_inputs(const Command& cmd, std::ostream& err) {
  Inputs in;
  in.ds = data::load_interactions(cmd.interactions);
  in.split = data::chrono_split(in.ds);
  in.features = data::load_features(cmd.features);
  if (in.features.count() != in.ds.n_items()) {
    err << "warning: feature file has " << in.features.count() << " rows for "
        << in.ds.n_items() << " items; "
        << (in.features.count() < in.ds.n_items() ? "zero-filling missing rows"
                                                  : "ignoring extra rows")
        << "\n";
    in.features = in.features.resized(in.ds.n_items());
  }
  return in;
}

json manifest(const Command& cmd, const TrainConfig& cfg) {
  json m;
  m["command"] = std::string(subcommand_name(cmd.sub));
  m["config"] = to_json(cfg);
  m["seed"] = cfg.seed;
  m["eval_seed"] = eval::kEvalSeed;
  m["formats"] = {{"checkpoint", "HVACF01"},
                  {"features", "HVFEAT01"},
                  {"interactions", "csv:user_id,item_id,timestamp"},
                  {"history", "jsonl-v1"}};
  m["inputs"] = {{"interactions", cmd.interactions.string()},
                 {"features", cmd.features.string()},
                 {"checkpoint", cmd.checkpoint.string()},
                 {"config", cmd.config_path.string()}};
  m["overrides"] = cmd.overrides;
  m["split"] = {0.7, 0.1, 0.2};
  return m;
}

train::Checkpoint load_checkpoint_with_overrides(const Command& cmd) {
  auto ck = train::load_checkpoint(cmd.checkpoint);
  apply_overrides(ck.cfg, cmd.overrides);
  ck.cfg.validate();
  return ck;
}

int run_synth(const Command& cmd, std::ostream& out) {
  const auto synth = data::synth_generate(cmd.synth);
  data::write_interactions(synth.dataset, cmd.out_dir / kInteractionsFile);
  data::write_features(synth.features, cmd.out_dir / kFeaturesFile);
  json m = manifest(cmd, cmd.cfg);
  m["synth"] = {{"users", cmd.synth.users},
                {"items", cmd.synth.items},
                {"interactions", cmd.synth.interactions},
                {"skew", cmd.synth.skew},
                {"seed", cmd.synth.seed},
                {"feature_dim", cmd.synth.feature_dim}};
  m.erase("config");
  m["seed"] = cmd.synth.seed;
  write_json(cmd.out_dir / "run-manifest.json", m);
  out << "wrote " << synth.dataset.interactions.size() << " interactions ("
      << synth.dataset.n_users() << " users, " << synth.dataset.n_items() << " items) to "
      << cmd.out_dir.string() << "\n";
  return kExitOk;
}

int run_train(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto in = load_inputs(cmd, err);
  std::ofstream steps(cmd.out_dir / "steps.jsonl");
  std::ofstream history(cmd.out_dir / "history.jsonl");
  if (!steps || !history) throw std::runtime_error("cannot write logs under " + cmd.out_dir.string());

  train::TrainOptions opts;
  opts.threads = cmd.threads;
  opts.eval_seed = eval::kEvalSeed;
  opts.on_step = [&](std::size_t step, const objective::LossBreakdown& loss) {
    steps << objective::loss_json_line(step, loss) << '\n';
  };
  opts.on_epoch = [&](const train::EpochRecord& rec) {
    history << train::epoch_json_line(rec) << '\n';
    out << "epoch " << rec.epoch << "  loss " << rec.mean.total << "  valid_auc " << rec.valid_auc
        << "\n";
  };
  const auto result = train::train(in.ds, in.split, in.features, cmd.cfg, opts);
  train::save_checkpoint(cmd.out_dir / kCheckpointFile, cmd.cfg, result.tables);
  write_json(cmd.out_dir / "report.json", {{"best_epoch", result.best_epoch},
                                           {"best_valid_auc", result.best_valid_auc},
                                           {"diverged", result.diverged},
                                           {"divergence", result.divergence},
                                           {"epochs_run", result.history.size()}});
  write_json(cmd.out_dir / "run-manifest.json", manifest(cmd, cmd.cfg));
  if (result.diverged) {
    err << "error: training diverged (" << result.divergence
        << "); kept the last good checkpoint\n";
    return kExitFailure;
  }
  return kExitOk;
}

int run_evaluate(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto ck = load_checkpoint_with_overrides(cmd);
  const auto in = load_inputs(cmd, err);
  eval::EvalOptions opts;
  opts.neg_per_user = ck.cfg.neg_per_user;
  opts.threads = cmd.threads;
  const auto report = eval::evaluate(ck.tables, in.ds, in.split, in.features, ck.cfg, opts);
  write_json(cmd.out_dir / "report.json", eval::to_json(report));
  std::ostringstream txt;
  txt << "mean_auc   " << report.mean_auc << "\nevaluated  " << report.evaluated
      << "\nskipped    " << report.skipped << "\n";
  write_text(cmd.out_dir / "report.txt", txt.str());
  std::ostringstream csv;
  csv << std::setprecision(17) << "user_id,auc\n";
  for (const auto& u : report.per_user) csv << in.ds.users.external(u.user) << ',' << u.auc << '\n';
  write_text(cmd.out_dir / "report.csv", csv.str());
  write_json(cmd.out_dir / "run-manifest.json", manifest(cmd, ck.cfg));
  out << txt.str();
  return kExitOk;
}

int run_ablate(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto in = load_inputs(cmd, err);
  eval::RunOptions opts;
  opts.seeds = cmd.seeds;
  opts.threads = cmd.threads;
  const auto rows = eval::run_ablations(in.ds, in.split, in.features, cmd.cfg, opts);
  write_json(cmd.out_dir / "ablation.json", eval::ablation_json(rows));
  const auto table = eval::ablation_table(rows);
  write_text(cmd.out_dir / "ablation.txt", table);
  json m = manifest(cmd, cmd.cfg);
  m["seeds"] = cmd.seeds;
  write_json(cmd.out_dir / "run-manifest.json", m);
  out << table;
  return kExitOk;
}

int run_sweep(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto in = load_inputs(cmd, err);
  const auto param = eval::parse_sweep_param(cmd.sweep_param);
  eval::RunOptions opts;
  opts.threads = cmd.threads;
  const auto points =
      eval::sweep(in.ds, in.split, in.features, cmd.cfg, param, cmd.sweep_values, opts);
  write_json(cmd.out_dir / "sweep.json", eval::sweep_json(param, points));
  const auto table = eval::sweep_table(param, points);
  write_text(cmd.out_dir / "sweep.txt", table);
  json m = manifest(cmd, cmd.cfg);
  m["sweep"] = {{"param", cmd.sweep_param}, {"values", cmd.sweep_values}};
  write_json(cmd.out_dir / "run-manifest.json", m);
  out << table;
  return kExitOk;
}

int run_analyze(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto ck = load_checkpoint_with_overrides(cmd);
  const auto in = load_inputs(cmd, err);
  const auto positives = data::positive_sets(in.ds.n_users(), in.split.train);
  const auto a = eval::analyze_embeddings(ck.tables, positives, in.split.train, in.features, ck.cfg);
  write_json(cmd.out_dir / "analysis.json", eval::to_json(a));
  eval::write_histogram_csv(a, cmd.out_dir / "histogram.csv");
  write_json(cmd.out_dir / "run-manifest.json", manifest(cmd, ck.cfg));
  out << "pearson_r(item norm, log(1+purchases)) " << a.pearson_r << "\nmean user norm "
      << a.mean_user_norm << "\nmean item norm " << a.mean_item_norm << "\n";
  return kExitOk;
}

int run_export(const Command& cmd, std::ostream& out, std::ostream& err) {
  const auto ck = load_checkpoint_with_overrides(cmd);
  const auto in = load_inputs(cmd, err);
  const auto positives = data::positive_sets(in.ds.n_users(), in.split.train);
  model::export_embeddings(cmd.out_dir / "embeddings.tsv", ck.tables, in.ds, positives,
                           in.features, ck.cfg, eval::kEvalSeed);
  write_json(cmd.out_dir / "run-manifest.json", manifest(cmd, ck.cfg));
  out << "wrote " << (cmd.out_dir / "embeddings.tsv").string() << "\n";
  return kExitOk;
}

}  // namespace

Command parse_args(int argc, const char* const* argv) {
  Command cmd;
  cmd.threads = std::max(1u, std::thread::hardware_concurrency());

  CLI::App app{"hvacf: hyperbolic visually-aware recommender"};
  app.require_subcommand(1);

  std::string data_dir, values_text;
  auto add_common = [&](CLI::App* sub, bool needs_checkpoint, bool accepts_config) {
    sub->add_option("--data", data_dir, "Directory holding interactions.csv and features.hvfeat");
    sub->add_option("--interactions", cmd.interactions, "Interactions CSV");
    sub->add_option("--features", cmd.features, "HVFEAT01 feature file");
    sub->add_option("--out", cmd.out_dir, "Output directory");
    sub->add_option("--threads", cmd.threads, "Worker threads for evaluation");
    sub->add_option("--set", cmd.overrides, "Config override key=value (repeatable)")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    if (accepts_config) sub->add_option("--config", cmd.config_path, "key = value config file");
    if (needs_checkpoint)
      sub->add_option("--checkpoint", cmd.checkpoint, "HVACF01 checkpoint")->required();
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--users", cmd.synth.users);
  synth->add_option("--items", cmd.synth.items);
  synth->add_option("--interactions", cmd.synth.interactions);
  synth->add_option("--skew", cmd.synth.skew, "Zipf exponent of item popularity");
  synth->add_option("--seed", cmd.synth.seed);
  synth->add_option("--feature-dim", cmd.synth.feature_dim);
  synth->add_option("--out", cmd.out_dir, "Output directory");

  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train, false, true);
  auto* evaluate = app.add_subcommand("evaluate", "Test-split AUC of a checkpoint");
  add_common(evaluate, true, false);
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate all eight variants");
  add_common(ablate, false, true);
  ablate->add_option("--seeds", cmd.seeds, "Seeds per variant");
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over values of gamma or c");
  add_common(sweep, false, true);
  sweep->add_option("--param", cmd.sweep_param, "gamma or c")->required();
  sweep->add_option("--values", values_text, "Comma-separated values")->required();
  auto* analyze = app.add_subcommand("analyze", "Embedding norm distributions and correlation");
  add_common(analyze, true, false);
  auto* export_cmd = app.add_subcommand("export-embeddings", "Write mapped embeddings as TSV");
  add_common(export_cmd, true, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what(), app.help());
  }

  const std::pair<CLI::App*, Subcommand> subs[] = {
      {synth, Subcommand::synth},     {train, Subcommand::train},
      {evaluate, Subcommand::evaluate}, {ablate, Subcommand::ablate},
      {sweep, Subcommand::sweep},     {analyze, Subcommand::analyze},
      {export_cmd, Subcommand::export_embeddings},
  };
  for (const auto& [app_ptr, kind] : subs)
    if (app.got_subcommand(app_ptr)) cmd.sub = kind;

  if (cmd.sub == Subcommand::synth) return cmd;

  if (!data_dir.empty()) {
    if (cmd.interactions.empty()) cmd.interactions = fs::path(data_dir) / kInteractionsFile;
    if (cmd.features.empty()) cmd.features = fs::path(data_dir) / kFeaturesFile;
  }
  if (cmd.interactions.empty() || cmd.features.empty())
    throw UsageError("--interactions and --features (or --data) are required", app.help());
  if (cmd.threads == 0) throw UsageError("--threads must be positive", app.help());
  if (cmd.sub == Subcommand::sweep) {
    eval::parse_sweep_param(cmd.sweep_param);
    cmd.sweep_values = parse_values(values_text);
    if (cmd.sweep_values.empty()) throw UsageError("--values needs at least one value", app.help());
  }

  if (!cmd.config_path.empty()) cmd.cfg = parse_config_text(read_text(cmd.config_path));
  apply_overrides(cmd.cfg, cmd.overrides);
  cmd.cfg.validate();
  return cmd;
}

int run(const Command& cmd, std::ostream& out, std::ostream& err) {
  fs::create_directories(cmd.out_dir);
  switch (cmd.sub) {
    case Subcommand::synth: return run_synth(cmd, out);
    case Subcommand::train: return run_train(cmd, out, err);
    case Subcommand::evaluate: return run_evaluate(cmd, out, err);
    case Subcommand::ablate: return run_ablate(cmd, out, err);
    case Subcommand::sweep: return run_sweep(cmd, out, err);
    case Subcommand::analyze: return run_analyze(cmd, out, err);
    case Subcommand::export_embeddings: return run_export(cmd, out, err);
  }
  return kExitFailure;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Command cmd;
  try {
    cmd = parse_args(argc, argv);
  } catch (const HelpRequested& h) {
    out << h.what();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << e.usage();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    return run(cmd, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace hvacf::cli
