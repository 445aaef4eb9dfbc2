#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvacf/config.hpp"
#include "hvacf/dataio.hpp"

namespace hvacf::cli {

enum class Subcommand { synth, train, evaluate, ablate, sweep, analyze, export_embeddings };

std::string_view subcommand_name(Subcommand s);

// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& what, std::string usage)
      : std::runtime_error(what), usage_(std::move(usage)) {}
  const std::string& usage() const { return usage_; }

 private:
  std::string usage_;
};

// Thrown for --help; carries the help text.
class HelpRequested : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Command {
  Subcommand sub = Subcommand::train;
  TrainConfig cfg;
  std::filesystem::path config_path;
  std::vector<std::string> overrides;  // raw `key=value` strings, in order
  std::filesystem::path out_dir = "out";
  std::filesystem::path interactions;
  std::filesystem::path features;
  std::filesystem::path checkpoint;
  std::size_t threads = 1;
  data::SynthParams synth;
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::size_t seeds = 3;
};

// Resolves defaults <- --config file <- --set overrides. Throws UsageError,
// ConfigError or HelpRequested.
Command parse_args(int argc, const char* const* argv);

// Executes a parsed command, writing artifacts under cmd.out_dir.
int run(const Command& cmd, std::ostream& out, std::ostream& err);

// parse_args + run with the exit-code contract applied.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hvacf::cli
