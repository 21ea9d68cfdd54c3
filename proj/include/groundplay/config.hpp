#pragma once

// Pipeline configuration: one JSON document.
//
//   {
//     "dataset_path": "data/sample_dataset.jsonl",
//     "output_dir": "out",
//     "run": { RunConfig fields, "fixed_coefficients": [{"alpha", "beta"}] },
//     "backends": { "user": "scripted:select", "assistant": "scripted:reward_aware" },
//     "endpoints": { "<name>": { RemoteEndpointConfig fields } },
//     "knowledge_path": null,
//     "decision_constants": null | { "delta_clar", "delta_multi", "extra_words" },
//     "templates_dir": null,
//     "selection": { "min_cluster_size", "coverage_policy", "dedup" },
//     "eval": { "fixed_alpha", "fixed_beta", "tolerance_pct", "tolerance_words",
//               "include_invalid" },
//     "sweep": { "enabled", "unseen_alpha", "unseen_beta" }
//   }
//
// Every field is optional. Relative paths resolve against the config file's
// directory. Unknown keys are rejected.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "groundplay/agents.hpp"
#include "groundplay/engine.hpp"
#include "groundplay/eval.hpp"
#include "groundplay/io.hpp"
#include "groundplay/knowledge.hpp"
#include "groundplay/remote.hpp"
#include "groundplay/selection.hpp"

namespace groundplay {

struct SelectionConfig {
  std::size_t min_cluster_size = 5;
  CoveragePolicy coverage_policy = CoveragePolicy::RequireFullCoverage;
  bool dedup = false;
};

struct EvalConfig {
  double fixed_alpha = 20.0;
  double fixed_beta = 5.0;
  double tolerance_pct = 1.0;
  double tolerance_words = 0.5;
  bool include_invalid = false;
};

struct SweepSettings {
  bool enabled = false;
  std::optional<std::vector<double>> unseen_alpha;
  std::optional<std::vector<double>> unseen_beta;
};

struct PipelineConfig {
  std::optional<std::filesystem::path> dataset_path;
  std::filesystem::path output_dir = "out";
  RunConfig run;
  std::string user_backend = "scripted:select";
  std::string assistant_backend = "scripted:reward_aware";
  std::map<std::string, RemoteEndpointConfig> endpoints;
  std::optional<std::filesystem::path> knowledge_path;
  std::optional<DecisionConstants> decision_constants;
  std::optional<std::filesystem::path> templates_dir;
  SelectionConfig selection;
  EvalConfig eval;
  SweepSettings sweep;

  SteerabilityConfig steerability() const;
  SweepConfig sweep_config() const;
};

// Throws ConfigError for malformed documents, unknown keys, invalid values
// and referenced paths that do not exist.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_json(const Json& j, const std::filesystem::path& base_dir);

// Throws ConfigError unless the backend names are known and remote ones
// reference a configured endpoint.
void check_backend_names(const PipelineConfig& config);

// Builds a backend from its name: scripted:<policy> or remote:<endpoint>.
std::unique_ptr<AgentBackend> make_backend(const std::string& name, Role role,
                                           const PipelineConfig& config,
                                           std::shared_ptr<const KnowledgeTable> knowledge);

}  // namespace groundplay
