#pragma once

// Subcommand implementations behind the groundplay executable. Each command
// reports progress and problems on err, results on out, and returns an exit
// code instead of throwing.
//
// Files written under output_dir:
//   rollout  rollouts.jsonl
//   select   selections.jsonl, training.jsonl
//   eval     metrics.csv, metrics.json, steerability.csv, steerability.json,
//            action_distribution.csv, oracle.jsonl

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "groundplay/config.hpp"

namespace groundplay {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitBackend = 3,
};

// Command-line overrides applied on top of the config file.
struct CommandOptions {
  std::optional<std::filesystem::path> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> parallel;
  std::optional<std::string> user_backend;
  std::optional<std::string> assistant_backend;
  std::optional<std::filesystem::path> dataset_path;
};

// Throws ConfigError.
PipelineConfig resolve_config(const CommandOptions& options);

int cmd_validate_dataset(const std::filesystem::path& path, std::ostream& out, std::ostream& err);
int cmd_rollout(const PipelineConfig& config, std::ostream& out, std::ostream& err);
int cmd_select(const std::filesystem::path& rollouts_path, const PipelineConfig& config,
               std::ostream& out, std::ostream& err);
int cmd_eval(const std::filesystem::path& rollouts_path, const PipelineConfig& config,
             std::ostream& out, std::ostream& err);
int cmd_convert(const std::string& format, const std::filesystem::path& input,
                const std::filesystem::path& output, std::ostream& out, std::ostream& err);

}  // namespace groundplay
