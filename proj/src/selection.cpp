#include "groundplay/selection.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <tuple>

#include "groundplay/parse.hpp"

namespace groundplay {

namespace {

struct ClusterKey {
  std::string query_id;
  double alpha;
  double beta;
  bool operator<(const ClusterKey& o) const {
    return std::tie(query_id, alpha, beta) < std::tie(o.query_id, o.alpha, o.beta);
  }
};

double weight_of(const std::vector<double>& weights, std::size_t j, std::size_t count) {
  if (weights.empty()) return count == 0 ? 0.0 : 1.0 / static_cast<double>(count);
  return j < weights.size() ? weights[j] : 0.0;
}

bool better(const SequenceScore& candidate, const SequenceScore* incumbent) {
  if (!incumbent) return true;
  if (candidate.expected_reward != incumbent->expected_reward) {
    return candidate.expected_reward > incumbent->expected_reward;
  }
  return candidate.sequence < incumbent->sequence;
}

}  // namespace

std::string_view to_string(CoveragePolicy policy) {
  return policy == CoveragePolicy::RequireFullCoverage ? "REQUIRE_FULL_COVERAGE" : "ALLOW_PARTIAL";
}

CoveragePolicy coverage_policy_from_string(std::string_view name) {
  if (name == "REQUIRE_FULL_COVERAGE") return CoveragePolicy::RequireFullCoverage;
  if (name == "ALLOW_PARTIAL") return CoveragePolicy::AllowPartial;
  throw std::invalid_argument("unknown coverage policy '" + std::string(name) + "'");
}

std::size_t Cluster::size() const {
  std::size_t n = 0;
  for (const auto& [j, list] : members) n += list.size();
  return n;
}

std::vector<Cluster> cluster_rollouts(
    const std::vector<Rollout>& rollouts, std::size_t min_cluster_size,
    const std::map<std::string, std::size_t, std::less<>>& interpretation_counts) {
  std::map<ClusterKey, Cluster> grouped;
  for (const auto& r : rollouts) {
    if (!r.is_valid() || !r.reward) continue;
    ClusterKey key{r.query_id, r.coefficients.alpha, r.coefficients.beta};
    auto& cluster = grouped[key];
    if (cluster.query_id.empty()) {
      cluster.query_id = r.query_id;
      cluster.coefficients = r.coefficients;
    }
    cluster.members[r.interpretation_index].push_back(&r);
  }

  std::vector<Cluster> out;
  out.reserve(grouped.size());
  for (auto& [key, cluster] : grouped) {
    auto it = interpretation_counts.find(key.query_id);
    if (it != interpretation_counts.end()) {
      cluster.interpretation_count = it->second;
    } else {
      cluster.interpretation_count = cluster.members.rbegin()->first + 1;
    }
    for (std::size_t j = 0; j < cluster.interpretation_count; ++j) {
      auto m = cluster.members.find(j);
      const std::size_t n = m == cluster.members.end() ? 0 : m->second.size();
      if (n < min_cluster_size) cluster.under_supported = true;
    }
    out.push_back(std::move(cluster));
  }
  return out;
}

std::vector<SequenceScore> score_sequences(const Cluster& cluster,
                                           const std::vector<double>& weights) {
  struct Accumulator {
    std::map<std::size_t, double> sum;
    std::map<std::size_t, std::size_t> count;
  };
  std::map<ActionSequence, Accumulator> by_sequence;
  for (const auto& [j, list] : cluster.members) {
    for (const Rollout* r : list) {
      auto& acc = by_sequence[coarsen(*r)];
      acc.sum[j] += r->reward->total;
      acc.count[j] += 1;
    }
  }

  std::vector<SequenceScore> scores;
  scores.reserve(by_sequence.size());
  for (auto& [sequence, acc] : by_sequence) {
    SequenceScore s;
    s.sequence = sequence;
    s.support = acc.count;
    double weighted = 0.0;
    double covered_weight = 0.0;
    for (const auto& [j, n] : acc.count) {
      const double mean = acc.sum[j] / static_cast<double>(n);
      s.per_interpretation_mean[j] = mean;
      const double w = weight_of(weights, j, cluster.interpretation_count);
      weighted += w * mean;
      covered_weight += w;
    }
    s.partial = acc.count.size() < cluster.interpretation_count;
    if (s.partial) {
      s.expected_reward = covered_weight > 0.0 ? weighted / covered_weight : 0.0;
    } else {
      s.expected_reward = weighted;
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

std::optional<ActionSequence> select_best_sequence(const std::vector<SequenceScore>& scores,
                                                   CoveragePolicy policy) {
  const SequenceScore* best = nullptr;
  for (const auto& s : scores) {
    if (s.partial && policy == CoveragePolicy::RequireFullCoverage) continue;
    if (better(s, best)) best = &s;
  }
  if (!best) return std::nullopt;
  return best->sequence;
}

std::map<std::size_t, const Rollout*> extract_best_rollouts(const Cluster& cluster,
                                                            const ActionSequence& s_star) {
  std::map<std::size_t, const Rollout*> chosen;
  for (const auto& [j, list] : cluster.members) {
    const Rollout* best = nullptr;
    for (const Rollout* r : list) {
      if (!is_compatible(*r, s_star)) continue;
      if (!best || r->reward->total > best->reward->total) best = r;
    }
    if (best) chosen[j] = best;
  }
  return chosen;
}

SelectionResult select_cluster(const Cluster& cluster, const std::vector<double>& weights,
                               CoveragePolicy policy) {
  SelectionResult result;
  result.query_id = cluster.query_id;
  result.coefficients = cluster.coefficients;
  result.under_supported = cluster.under_supported;
  result.sequence_scores = score_sequences(cluster, weights);
  result.best_sequence = select_best_sequence(result.sequence_scores, policy);
  if (!result.best_sequence) return result;
  for (const auto& s : result.sequence_scores) {
    if (s.sequence == *result.best_sequence) result.partial = s.partial;
  }
  for (const auto& [j, r] : extract_best_rollouts(cluster, *result.best_sequence)) {
    result.chosen_rollouts[j] = r->rollout_id;
  }
  return result;
}

RolloutIndex index_rollouts(const std::vector<Rollout>& rollouts) {
  RolloutIndex index;
  index.reserve(rollouts.size());
  for (const auto& r : rollouts) index.emplace(r.rollout_id, &r);
  return index;
}

std::vector<TrainingExample> emit_training_examples(const SelectionResult& selection,
                                                    const RolloutIndex& rollouts) {
  std::vector<TrainingExample> out;
  for (const auto& [j, id] : selection.chosen_rollouts) {
    auto it = rollouts.find(id);
    if (it == rollouts.end()) {
      throw std::out_of_range("selection for query '" + selection.query_id +
                              "' refers to unknown rollout '" + id + "'");
    }
    const Rollout& r = *it->second;
    for (std::size_t t = 0; t < r.turns.size(); ++t) {
      const Turn& turn = r.turns[t];
      if (turn.role != Role::Assistant) continue;
      TrainingExample ex;
      ex.query_id = r.query_id;
      ex.rollout_id = r.rollout_id;
      ex.turn_index = t;
      ex.prompt = turn.prompt;
      ex.target = format_agent_output(turn.action, turn.observation, turn.thought);
      ex.coefficients = r.coefficients;
      ex.reward_total = r.reward ? r.reward->total : 0.0;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<TrainingExample> dedup_training_examples(std::vector<TrainingExample> examples) {
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<TrainingExample> out;
  out.reserve(examples.size());
  for (auto& ex : examples) {
    if (seen.emplace(ex.prompt, ex.target).second) out.push_back(std::move(ex));
  }
  return out;
}

OracleTable hindsight_oracle(const std::vector<const Cluster*>& clusters,
                             const std::vector<double>& weights, CoveragePolicy policy) {
  OracleTable table;
  for (const Cluster* cluster : clusters) {
    const auto scores = score_sequences(*cluster, weights);
    const SequenceScore* best = nullptr;
    for (const auto& s : scores) {
      if (s.partial && policy == CoveragePolicy::RequireFullCoverage) continue;
      if (better(s, best)) best = &s;
    }
    if (best) table[cluster->coefficients] = {best->sequence, best->expected_reward, best->partial};
  }
  return table;
}

}  // namespace groundplay
