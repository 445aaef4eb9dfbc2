#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "hvacf/cli.hpp"
#include "hvacf/errors.hpp"
#include "hvacf/evalkit.hpp"

using namespace hvacf;
using namespace hvacf::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "hvacf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = main_entry(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("hvacf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string small_data() {
    const auto d = (dir / "data").string();
    const auto r = invoke({"synth", "--users", "30", "--items", "60", "--interactions", "900",
                           "--out", d});
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }

  fs::path dir;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ParseArgs, ConfigThenOverrides) {
  const auto path = fs::temp_directory_path() / "hvacf_cfg.txt";
  std::ofstream(path) << "gamma = 0.9\ndim = 12\n";
  const char* argv[] = {"hvacf", "train", "--data", "d", "--config", path.c_str(), "--set",
                        "gamma=0.5", "--set", "c=2"};
  const auto cmd = parse_args(10, argv);
  EXPECT_EQ(cmd.sub, Subcommand::train);
  EXPECT_EQ(cmd.cfg.gamma, 0.5);
  EXPECT_EQ(cmd.cfg.dim, 12u);
  EXPECT_EQ(cmd.cfg.c, 2.0);
  EXPECT_EQ(cmd.interactions, fs::path("d") / "interactions.csv");
  fs::remove(path);
}

TEST(ParseArgs, Errors) {
  const char* unknown[] = {"hvacf", "train", "--data", "d", "--set", "nope=1"};
  EXPECT_THROW(parse_args(6, unknown), ConfigError);
  const char* none[] = {"hvacf"};
  EXPECT_THROW(parse_args(1, none), UsageError);
  const char* badsub[] = {"hvacf", "frobnicate"};
  EXPECT_THROW(parse_args(2, badsub), UsageError);
  const char* nockpt[] = {"hvacf", "evaluate", "--data", "d"};
  EXPECT_THROW(parse_args(4, nockpt), UsageError);
}

TEST(ExitCodes, NoSubcommandIsUsage) {
  const auto r = invoke({});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
}

TEST(ExitCodes, BogusVariantListsAllEight) {
  const auto r = invoke({"train", "--data", "d", "--set", "variant=bogus"});
  EXPECT_EQ(r.code, kExitUsage);
  for (Variant v : kAllVariants)
    EXPECT_NE(r.err.find(std::string(variant_name(v))), std::string::npos) << r.err;
}

TEST(ExitCodes, Help) { EXPECT_EQ(invoke({"--help"}).code, kExitOk); }

TEST_F(CliTest, MissingCheckpointNamesPath) {
  const auto data = small_data();
  const auto missing = (dir / "nope.hvacf").string();
  const auto r = invoke({"evaluate", "--data", data, "--checkpoint", missing, "--out",
                         (dir / "e").string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingDataIsRuntimeFailure) {
  const auto r = invoke({"train", "--data", (dir / "absent").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kExitFailure);
}

TEST_F(CliTest, PipelineOnDefaults) {
  const auto data = (dir / "data").string();
  ASSERT_EQ(invoke({"synth", "--out", data}).code, 0);
  EXPECT_TRUE(fs::exists(fs::path(data) / "interactions.csv"));
  EXPECT_TRUE(fs::exists(fs::path(data) / "features.hvfeat"));

  const auto run = (dir / "run").string();
  const auto t = invoke({"train", "--data", data, "--out", run, "--set", "epochs=3"});
  ASSERT_EQ(t.code, 0) << t.err;
  for (const char* f : {"checkpoint.hvacf", "steps.jsonl", "history.jsonl", "report.json",
                        "run-manifest.json"})
    EXPECT_TRUE(fs::exists(fs::path(run) / f)) << f;
  const auto manifest = nlohmann::json::parse(slurp(fs::path(run) / "run-manifest.json"));
  EXPECT_EQ(manifest["config"]["epochs"], 3);
  EXPECT_EQ(manifest["formats"]["checkpoint"], "HVACF01");

  std::ifstream hist(fs::path(run) / "history.jsonl");
  std::string line;
  std::size_t epochs = 0;
  while (std::getline(hist, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("valid_auc"));
    ++epochs;
  }
  EXPECT_EQ(epochs, 3u);

  const auto ckpt = (fs::path(run) / "checkpoint.hvacf").string();
  const auto ev = (dir / "eval").string();
  const auto e = invoke({"evaluate", "--data", data, "--checkpoint", ckpt, "--out", ev});
  ASSERT_EQ(e.code, 0) << e.err;
  for (const char* f : {"report.json", "report.txt", "report.csv", "run-manifest.json"})
    EXPECT_TRUE(fs::exists(fs::path(ev) / f)) << f;
  const auto report = nlohmann::json::parse(slurp(fs::path(ev) / "report.json"));
  EXPECT_GT(report["evaluated"].get<int>(), 0);

  const auto an = (dir / "analyze").string();
  ASSERT_EQ(invoke({"analyze", "--data", data, "--checkpoint", ckpt, "--out", an}).code, 0);
  std::ifstream csv(fs::path(an) / "histogram.csv");
  std::size_t rows = 0;
  std::getline(csv, line);
  EXPECT_EQ(line, "bin_left,bin_right,user_count,item_count");
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, eval::kHistogramBins);
  EXPECT_TRUE(fs::exists(fs::path(an) / "analysis.json"));

  const auto ex = (dir / "export").string();
  ASSERT_EQ(invoke({"export-embeddings", "--data", data, "--checkpoint", ckpt, "--out", ex}).code, 0);
  std::ifstream tsv(fs::path(ex) / "embeddings.tsv");
  std::getline(tsv, line);
  EXPECT_EQ(line.rfind("user\t", 0), 0u);
  std::size_t tabs = std::count(line.begin(), line.end(), '\t');
  EXPECT_EQ(tabs, 1u + 50u);
}

TEST_F(CliTest, AblateAndSweepArtifacts) {
  const auto data = small_data();
  const auto ab = (dir / "ab").string();
  const auto a = invoke({"ablate", "--data", data, "--out", ab, "--seeds", "1", "--set", "epochs=1",
                         "--set", "dim=8", "--set", "batch=128"});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto rows = nlohmann::json::parse(slurp(fs::path(ab) / "ablation.json"));
  EXPECT_EQ(rows.size(), 8u);
  EXPECT_TRUE(fs::exists(fs::path(ab) / "ablation.txt"));

  const auto sw = (dir / "sw").string();
  const auto s = invoke({"sweep", "--data", data, "--out", sw, "--param", "c", "--values",
                         "0.5,1,100", "--set", "epochs=1", "--set", "dim=8"});
  ASSERT_EQ(s.code, 0) << s.err;
  const auto pts = nlohmann::json::parse(slurp(fs::path(sw) / "sweep.json"));
  EXPECT_EQ(pts["points"].size(), 3u);
  EXPECT_EQ(invoke({"sweep", "--data", data, "--param", "lr", "--values", "1"}).code, kExitUsage);
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
  const auto data = small_data();
  std::vector<std::string> ckpts, reports;
  for (const char* name : {"a", "b"}) {
    const auto run = (dir / name).string();
    ASSERT_EQ(invoke({"train", "--data", data, "--out", run, "--set", "epochs=2", "--set",
                      "dim=8"}).code,
              0);
    ASSERT_EQ(invoke({"evaluate", "--data", data, "--out", run, "--checkpoint",
                      (fs::path(run) / "checkpoint.hvacf").string()}).code,
              0);
    ckpts.push_back(slurp(fs::path(run) / "checkpoint.hvacf"));
    reports.push_back(slurp(fs::path(run) / "report.json"));
  }
  EXPECT_EQ(ckpts[0], ckpts[1]);
  EXPECT_EQ(reports[0], reports[1]);
}
