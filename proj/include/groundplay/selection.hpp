#pragma once

// Data selection for self-training.
//
// Valid rollouts are clustered by (query, exact alpha, exact beta). Inside a
// cluster every rollout is coarsened to its action sequence; a sequence is
// scored by the P_q-weighted mean of its per-interpretation mean rewards,
// the best sequence s* is chosen, and for each interpretation the highest
// reward rollout compatible with s* is kept. Only the assistant turns of the
// kept rollouts become training examples.
//
// Clusters hold pointers into the caller's rollout vector, which must
// outlive them.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "groundplay/core.hpp"

namespace groundplay {

enum class CoveragePolicy { RequireFullCoverage, AllowPartial };

std::string_view to_string(CoveragePolicy policy);
CoveragePolicy coverage_policy_from_string(std::string_view name);

struct Cluster {
  std::string query_id;
  CostCoefficients coefficients;
  // Members per interpretation, in input order.
  std::map<std::size_t, std::vector<const Rollout*>> members;
  std::size_t interpretation_count = 0;
  // Some interpretation has fewer than min_cluster_size members.
  bool under_supported = false;

  std::size_t size() const;
};

// interpretation_counts maps query_id to |I_q|; queries missing from it use
// the largest observed interpretation index + 1. Result is ordered by
// (query_id, alpha, beta).
std::vector<Cluster> cluster_rollouts(
    const std::vector<Rollout>& rollouts, std::size_t min_cluster_size = 5,
    const std::map<std::string, std::size_t, std::less<>>& interpretation_counts = {});

struct SequenceScore {
  ActionSequence sequence;
  std::map<std::size_t, double> per_interpretation_mean;
  std::map<std::size_t, std::size_t> support;
  double expected_reward = 0.0;
  bool partial = false;
};

// weights[j] = P_q(j); empty means uniform over the cluster's
// interpretations. Partial sequences are scored over the covered
// interpretations with renormalized weights. Result is in canonical
// sequence order.
std::vector<SequenceScore> score_sequences(const Cluster& cluster,
                                           const std::vector<double>& weights = {});

// Argmax of expected_reward over eligible sequences; ties go to the
// canonically smaller sequence.
std::optional<ActionSequence> select_best_sequence(const std::vector<SequenceScore>& scores,
                                                   CoveragePolicy policy);

// Per interpretation, the compatible member with the highest total reward;
// ties go to the earlier member.
std::map<std::size_t, const Rollout*> extract_best_rollouts(const Cluster& cluster,
                                                            const ActionSequence& s_star);

struct SelectionResult {
  std::string query_id;
  CostCoefficients coefficients;
  std::optional<ActionSequence> best_sequence;
  std::map<std::size_t, std::string> chosen_rollouts;
  std::vector<SequenceScore> sequence_scores;
  bool partial = false;
  bool under_supported = false;
};

SelectionResult select_cluster(const Cluster& cluster, const std::vector<double>& weights,
                               CoveragePolicy policy);

struct TrainingExample {
  std::string query_id;
  std::string rollout_id;
  std::size_t turn_index = 0;
  std::string prompt;
  std::string target;
  CostCoefficients coefficients;
  double reward_total = 0.0;

  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

using RolloutIndex = std::unordered_map<std::string, const Rollout*>;
RolloutIndex index_rollouts(const std::vector<Rollout>& rollouts);

// One example per assistant turn of each chosen rollout. Throws
// std::out_of_range for a rollout id missing from the index.
std::vector<TrainingExample> emit_training_examples(const SelectionResult& selection,
                                                    const RolloutIndex& rollouts);

// Keeps the first example for each (prompt, target).
std::vector<TrainingExample> dedup_training_examples(std::vector<TrainingExample> examples);

struct OracleChoice {
  ActionSequence sequence;
  double expected_reward = 0.0;
  bool partial = false;
};

using OracleTable = std::map<CostCoefficients, OracleChoice, CoefficientsLess>;

// Hindsight choice per coefficient pair over the given clusters (normally
// all clusters of one query). Pairs without an eligible sequence are absent.
OracleTable hindsight_oracle(const std::vector<const Cluster*>& clusters,
                             const std::vector<double>& weights, CoveragePolicy policy);

}  // namespace groundplay
