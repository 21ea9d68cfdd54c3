#pragma once

// Rollout execution, batch orchestration and validity filtering.
//
// Batches are deterministic: every rollout draws its coefficients from its
// own generator seeded by (seed, query_id, interpretation, ordinal), and the
// sink receives rollouts in (query_id, interpretation, ordinal) order no
// matter how workers interleave.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "groundplay/agents.hpp"
#include "groundplay/core.hpp"
#include "groundplay/prompts.hpp"
#include "groundplay/scoring.hpp"

namespace groundplay {

struct RunConfig {
  int n_rollouts_per_interpretation = 192;
  std::vector<double> alpha_grid{0.0, 2.0, 20.0};
  std::vector<double> beta_grid{0.1, 0.7, 5.0};
  int max_clarifications = 1;
  ScoringMode scoring_mode = ScoringMode::PlainTokenF1;
  double f1_validity_threshold = 0.1;
  double ignore_fraction_threshold = 0.5;
  std::uint64_t seed = 0;
  int max_parallel_rollouts = 1;
  bool use_thoughts = false;
  // When non-empty, coefficients are not sampled: each (query,
  // interpretation) runs n_rollouts_per_interpretation rollouts per pair.
  std::vector<CostCoefficients> fixed_coefficients;

  // Throws ConfigError.
  void validate() const;
};

// Uniform, independent draws from each grid.
CostCoefficients sample_coefficients(std::mt19937_64& rng, const std::vector<double>& alpha_grid,
                                     const std::vector<double>& beta_grid);

std::uint64_t rollout_seed(std::uint64_t seed, std::string_view query_id,
                           std::size_t interpretation_index, std::size_t ordinal);

// "<query_id>#<interpretation>#<ordinal>"
std::string make_rollout_id(std::string_view query_id, std::size_t interpretation_index,
                            std::size_t ordinal);

struct RolloutTask {
  std::shared_ptr<const QueryExample> query;
  std::size_t interpretation_index = 0;
  std::size_t ordinal = 0;
  CostCoefficients coefficients;
};

// All tasks of a batch in output order.
std::vector<RolloutTask> plan_tasks(const std::vector<std::shared_ptr<const QueryExample>>& dataset,
                                    const RunConfig& config);

// Fraction of normalized tokens of the final answer that do not occur in the
// assistant answer; 0 when the final answer has no tokens.
double ignore_fraction(std::string_view final_answer, std::string_view assistant_answer);

// Order: fault pass-through, user-ignore check, F1 check.
ValidityVerdict validate_rollout(const Rollout& rollout, const Interpretation& interpretation,
                                 const RunConfig& config);

// Plays one conversation. Backend parse failures and protocol violations
// yield an invalid rollout holding the legal prefix; BackendError propagates.
Rollout run_rollout(std::shared_ptr<const QueryExample> query, std::size_t interpretation_index,
                    CostCoefficients coefficients, const AgentBackend& user,
                    const AgentBackend& assistant, const RunConfig& config,
                    const TemplateStore& templates, std::string rollout_id);

struct BatchSummary {
  std::size_t planned = 0;
  std::size_t written = 0;
  std::map<VerdictReason, std::size_t> by_reason;
  bool aborted = false;
  std::string abort_message;

  std::size_t valid() const;
};

using RolloutSink = std::function<void(const Rollout&)>;

// Runs every planned task on max_parallel_rollouts workers and hands
// rollouts to the sink in plan order. A throwing sink aborts the batch and
// the summary reports how far it got. BackendError is rethrown after the
// workers stop. progress may be null.
BatchSummary run_batch(const std::vector<std::shared_ptr<const QueryExample>>& dataset,
                       const RunConfig& config, const AgentBackend& user,
                       const AgentBackend& assistant, const TemplateStore& templates,
                       const RolloutSink& sink, std::ostream* progress = nullptr);

}  // namespace groundplay
