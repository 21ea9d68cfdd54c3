#pragma once

// Evaluation over scored rollouts: aggregate and stratified metrics,
// per-coefficient breakdowns, steerability series, action-sequence
// distributions, hindsight-oracle comparison and coefficient sweeps.
//
// Every metric is a mean over rollouts. By default only valid rollouts
// count; faulted rollouts have no reward and never count.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "groundplay/core.hpp"
#include "groundplay/selection.hpp"

namespace groundplay {

enum class Stratum { All, Ambiguous, Unambiguous };

std::string_view to_string(Stratum stratum);

struct QueryInfo {
  std::optional<bool> ambiguous;
  std::vector<double> weights;  // empty: uniform
  std::size_t interpretation_count = 0;
};

using QueryInfoMap = std::map<std::string, QueryInfo, std::less<>>;

// has_labels=false leaves every ambiguity label unset.
QueryInfoMap make_query_info(const std::vector<QueryExample>& dataset, bool has_labels);

struct MetricsReport {
  Stratum stratum = Stratum::All;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::size_t n_rollouts = 0;
  double avg_reward = 0.0;
  double avg_f1_percent = 0.0;
  double pct_clarify = 0.0;
  double pct_multi_answer = 0.0;
  double avg_answer_words = 0.0;
};

struct MetricsOptions {
  bool include_invalid = false;
};

// nullopt when the stratum is empty or its labels are unavailable.
std::optional<MetricsReport> aggregate_metrics(const std::vector<Rollout>& rollouts,
                                               Stratum stratum, const QueryInfoMap& info,
                                               const MetricsOptions& options = {});

struct CoefficientMetrics {
  std::vector<MetricsReport> per_pair;        // ordered by (alpha, beta)
  std::vector<MetricsReport> alpha_marginals;  // beta unset
  std::vector<MetricsReport> beta_marginals;   // alpha unset
};

CoefficientMetrics metrics_by_coefficient(const std::vector<Rollout>& rollouts,
                                          const QueryInfoMap& info,
                                          const MetricsOptions& options = {},
                                          Stratum stratum = Stratum::All);

struct SteerabilityConfig {
  double fixed_alpha = 20.0;
  double fixed_beta = 5.0;
  double tolerance_pct = 1.0;
  double tolerance_words = 0.5;
  // Values outside these grids are flagged unseen.
  std::vector<double> training_alpha_grid{0.0, 2.0, 20.0};
  std::vector<double> training_beta_grid{0.1, 0.7, 5.0};
};

struct SeriesPoint {
  double coefficient = 0.0;
  double value = 0.0;
  std::size_t n_rollouts = 0;
  bool unseen = false;
};

struct SteerabilitySeries {
  std::string metric;      // pct_clarify, pct_multi_answer, avg_answer_words
  std::string swept;       // alpha or beta
  double fixed_value = 0.0;
  double tolerance = 0.0;
  std::vector<SeriesPoint> points;  // ascending coefficient
  bool monotone_nonincreasing = true;
};

struct SteerabilityReport {
  std::vector<SteerabilitySeries> series;
};

// True iff every value is <= its predecessor + tolerance.
bool monotone_nonincreasing(const std::vector<SeriesPoint>& points, double tolerance);

// Builds the three series from per-pair reports. Throws
// std::invalid_argument when a series has fewer than two points.
SteerabilityReport steerability_check(const std::vector<MetricsReport>& per_pair,
                                      const SteerabilityConfig& config);

// Normalized histogram of coarsened sequences, in canonical order.
std::vector<std::pair<ActionSequence, double>> action_distribution(
    const std::vector<Rollout>& rollouts, Stratum stratum, const QueryInfoMap& info,
    const MetricsOptions& options = {});

struct OracleComparison {
  std::string query_id;
  CostCoefficients coefficients;
  double policy_expected_reward = 0.0;
  double oracle_expected_reward = 0.0;
  ActionSequence oracle_sequence;
  bool oracle_partial = false;
  bool oracle_ge_policy = true;
};

// Absolute slack allowed when checking oracle >= policy.
inline constexpr double kOracleTolerance = 1e-9;

// Per (query, pair): the policy's expected reward (P_q-weighted mean of
// per-interpretation mean rewards over all valid rollouts) against the
// hindsight oracle over the same rollouts. Both renormalize weights over
// the covered interpretations when coverage is partial.
std::vector<OracleComparison> compare_with_oracle(const std::vector<Rollout>& rollouts,
                                                  const QueryInfoMap& info);

struct SweepConfig {
  double fixed_alpha = 20.0;
  double fixed_beta = 5.0;
  std::vector<double> training_alpha_grid{0.0, 2.0, 20.0};
  std::vector<double> training_beta_grid{0.1, 0.7, 5.0};
  std::optional<std::vector<double>> unseen_alpha;  // default: arithmetic midpoints
  std::optional<std::vector<double>> unseen_beta;   // default: geometric midpoints
};

std::vector<double> arithmetic_midpoints(std::vector<double> grid);
std::vector<double> geometric_midpoints(std::vector<double> grid);

// (alpha, fixed_beta) for every training and unseen alpha, then
// (fixed_alpha, beta) for every training and unseen beta; duplicates removed.
std::vector<CostCoefficients> sweep_pairs(const SweepConfig& config);

// CSV with columns stratum,alpha,beta,n,avg_reward,avg_f1,pct_clar,pct_ma,avg_words.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& reports);
// CSV with columns metric,swept,fixed,coefficient,value,n,unseen,monotone.
void write_steerability_csv(std::ostream& out, const SteerabilityReport& report);

// Shortest round-trip decimal rendering.
std::string format_number(double value);

}  // namespace groundplay
