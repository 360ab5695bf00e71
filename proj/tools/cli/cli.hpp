#pragma once

// Command layer of the angdist tool. Every command prints diagnostics to
// `err` and exactly one JSON summary line to `out`.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "angdist/data.hpp"
#include "angdist/model.hpp"
#include "angdist/trainer.hpp"

namespace angdist::cli {

using json = nlohmann::json;

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kNumericFailure = 3,
};

/// Default output root when a config names no output directory.
inline constexpr const char* kOutputRootEnv = "ANGDIST_OUTPUT_ROOT";

struct DataSource {
  std::optional<SynthConfig> synthetic;
  std::filesystem::path csv;  ///< absolute after parsing
  std::optional<std::string> label_column;
};

struct ExperimentConfig {
  DataSource data;
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path output_dir;  ///< empty: derived from the environment
};

/// Reads the JSON config, applies `overrides` ("dotted.path=value"), then
/// validates. Relative CSV paths resolve against the config file's folder.
/// Throws angdist::Error (ParseError, IoError, InvalidArgument, ...).
ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides = {});
ExperimentConfig parse_experiment(json doc, const std::filesystem::path& base_dir);

/// Sets `doc` at a dotted path. The value is parsed as JSON when possible,
/// otherwise kept as a string.
void apply_override(json& doc, const std::string& assignment);

Dataset load_dataset(const DataSource& source);

/// Explicit directory, else the config's, else $ANGDIST_OUTPUT_ROOT/<command>,
/// else ./angdist-out/<command>. A relative config directory is placed under
/// $ANGDIST_OUTPUT_ROOT when that is set.
std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& flag,
                                         const std::filesystem::path& configured,
                                         const std::string& command);

/// Entry point; `args` excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace angdist::cli
