#include "groundplay/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <set>
#include <stdexcept>

namespace groundplay {

namespace {

struct Accumulator {
  std::size_t n = 0;
  double reward = 0.0;
  double accuracy = 0.0;
  std::size_t clarify = 0;
  std::size_t multi = 0;
  double words = 0.0;

  void add(const Rollout& r) {
    ++n;
    reward += r.reward->total;
    accuracy += r.reward->accuracy;
    words += r.reward->answer_words;
    bool has_clarify = false;
    bool has_multi = false;
    for (const auto& t : r.turns) {
      has_clarify = has_clarify || t.action == Action::Clarify;
      has_multi = has_multi || t.action == Action::MultiAns;
    }
    clarify += has_clarify ? 1 : 0;
    multi += has_multi ? 1 : 0;
  }

  MetricsReport report(Stratum stratum) const {
    MetricsReport m;
    m.stratum = stratum;
    m.n_rollouts = n;
    const double d = static_cast<double>(n);
    m.avg_reward = reward / d;
    m.avg_f1_percent = accuracy / d;
    m.pct_clarify = 100.0 * static_cast<double>(clarify) / d;
    m.pct_multi_answer = 100.0 * static_cast<double>(multi) / d;
    m.avg_answer_words = words / d;
    return m;
  }
};

bool labels_available(const QueryInfoMap& info) {
  return std::any_of(info.begin(), info.end(),
                     [](const auto& kv) { return kv.second.ambiguous.has_value(); });
}

bool in_stratum(const Rollout& r, Stratum stratum, const QueryInfoMap& info) {
  if (stratum == Stratum::All) return true;
  auto it = info.find(r.query_id);
  if (it == info.end() || !it->second.ambiguous) return false;
  return *it->second.ambiguous == (stratum == Stratum::Ambiguous);
}

bool counts(const Rollout& r, const MetricsOptions& options) {
  return r.reward.has_value() && (options.include_invalid || r.is_valid());
}

double weight_of(const QueryInfo* info, std::size_t j, std::size_t count) {
  if (!info || info->weights.empty()) return count == 0 ? 0.0 : 1.0 / static_cast<double>(count);
  return j < info->weights.size() ? info->weights[j] : 0.0;
}

std::vector<double> sorted_unique(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

bool contains(const std::vector<double>& grid, double v) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

}  // namespace

std::string_view to_string(Stratum stratum) {
  switch (stratum) {
    case Stratum::All: return "ALL";
    case Stratum::Ambiguous: return "AMBIGUOUS";
    case Stratum::Unambiguous: return "UNAMBIGUOUS";
  }
  return "?";
}

QueryInfoMap make_query_info(const std::vector<QueryExample>& dataset, bool has_labels) {
  QueryInfoMap info;
  for (const auto& q : dataset) {
    QueryInfo qi;
    if (has_labels) qi.ambiguous = q.ambiguous;
    if (q.weights) qi.weights = *q.weights;
    qi.interpretation_count = q.interpretations.size();
    info.emplace(q.id, std::move(qi));
  }
  return info;
}

std::optional<MetricsReport> aggregate_metrics(const std::vector<Rollout>& rollouts,
                                               Stratum stratum, const QueryInfoMap& info,
                                               const MetricsOptions& options) {
  if (stratum != Stratum::All && !labels_available(info)) return std::nullopt;
  Accumulator acc;
  for (const auto& r : rollouts) {
    if (counts(r, options) && in_stratum(r, stratum, info)) acc.add(r);
  }
  if (acc.n == 0) return std::nullopt;
  return acc.report(stratum);
}

CoefficientMetrics metrics_by_coefficient(const std::vector<Rollout>& rollouts,
                                          const QueryInfoMap& info,
                                          const MetricsOptions& options, Stratum stratum) {
  std::map<std::pair<double, double>, Accumulator> pairs;
  std::map<double, Accumulator> by_alpha;
  std::map<double, Accumulator> by_beta;
  if (stratum == Stratum::All || labels_available(info)) {
    for (const auto& r : rollouts) {
      if (!counts(r, options) || !in_stratum(r, stratum, info)) continue;
      pairs[{r.coefficients.alpha, r.coefficients.beta}].add(r);
      by_alpha[r.coefficients.alpha].add(r);
      by_beta[r.coefficients.beta].add(r);
    }
  }
  CoefficientMetrics out;
  for (const auto& [key, acc] : pairs) {
    auto m = acc.report(stratum);
    m.alpha = key.first;
    m.beta = key.second;
    out.per_pair.push_back(m);
  }
  for (const auto& [alpha, acc] : by_alpha) {
    auto m = acc.report(stratum);
    m.alpha = alpha;
    out.alpha_marginals.push_back(m);
  }
  for (const auto& [beta, acc] : by_beta) {
    auto m = acc.report(stratum);
    m.beta = beta;
    out.beta_marginals.push_back(m);
  }
  return out;
}

bool monotone_nonincreasing(const std::vector<SeriesPoint>& points, double tolerance) {
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].value > points[i - 1].value + tolerance) return false;
  }
  return true;
}

SteerabilityReport steerability_check(const std::vector<MetricsReport>& per_pair,
                                      const SteerabilityConfig& config) {
  struct SeriesDef {
    const char* metric;
    bool sweep_alpha;
    double MetricsReport::*field;
    double tolerance;
  };
  const SeriesDef defs[] = {
      {"pct_clarify", true, &MetricsReport::pct_clarify, config.tolerance_pct},
      {"pct_multi_answer", false, &MetricsReport::pct_multi_answer, config.tolerance_pct},
      {"avg_answer_words", false, &MetricsReport::avg_answer_words, config.tolerance_words},
  };

  SteerabilityReport report;
  for (const auto& def : defs) {
    SteerabilitySeries s;
    s.metric = def.metric;
    s.swept = def.sweep_alpha ? "alpha" : "beta";
    s.fixed_value = def.sweep_alpha ? config.fixed_beta : config.fixed_alpha;
    s.tolerance = def.tolerance;
    for (const auto& m : per_pair) {
      if (!m.alpha || !m.beta) continue;
      const double fixed = def.sweep_alpha ? *m.beta : *m.alpha;
      if (fixed != s.fixed_value) continue;
      const double swept = def.sweep_alpha ? *m.alpha : *m.beta;
      const auto& grid = def.sweep_alpha ? config.training_alpha_grid : config.training_beta_grid;
      s.points.push_back({swept, m.*def.field, m.n_rollouts, !contains(grid, swept)});
    }
    std::sort(s.points.begin(), s.points.end(),
              [](const SeriesPoint& a, const SeriesPoint& b) { return a.coefficient < b.coefficient; });
    if (s.points.size() < 2) {
      throw std::invalid_argument("steerability: series " + s.metric + " vs " + s.swept + " at " +
                                  (def.sweep_alpha ? "beta=" : "alpha=") +
                                  format_number(s.fixed_value) + " has " +
                                  std::to_string(s.points.size()) + " point(s), need 2");
    }
    s.monotone_nonincreasing = monotone_nonincreasing(s.points, s.tolerance);
    report.series.push_back(std::move(s));
  }
  return report;
}

std::vector<std::pair<ActionSequence, double>> action_distribution(
    const std::vector<Rollout>& rollouts, Stratum stratum, const QueryInfoMap& info,
    const MetricsOptions& options) {
  std::map<ActionSequence, std::size_t> histogram;
  std::size_t n = 0;
  if (stratum == Stratum::All || labels_available(info)) {
    for (const auto& r : rollouts) {
      if (!counts(r, options) || !in_stratum(r, stratum, info)) continue;
      ++histogram[coarsen(r)];
      ++n;
    }
  }
  std::vector<std::pair<ActionSequence, double>> out;
  for (const auto& [seq, count] : histogram) {
    out.emplace_back(seq, static_cast<double>(count) / static_cast<double>(n));
  }
  return out;
}

std::vector<OracleComparison> compare_with_oracle(const std::vector<Rollout>& rollouts,
                                                  const QueryInfoMap& info) {
  std::map<std::string, std::size_t, std::less<>> counts_by_query;
  for (const auto& [id, qi] : info) counts_by_query.emplace(id, qi.interpretation_count);
  const auto clusters = cluster_rollouts(rollouts, 0, counts_by_query);

  std::vector<OracleComparison> out;
  for (const auto& cluster : clusters) {
    auto it = info.find(cluster.query_id);
    const QueryInfo* qi = it == info.end() ? nullptr : &it->second;
    const std::vector<double> weights = qi ? qi->weights : std::vector<double>{};

    // Same accumulation order as score_sequences, so a policy that plays a
    // single sequence scores bit-identically to the oracle's entry for it.
    double weighted = 0.0;
    double covered = 0.0;
    for (const auto& [j, list] : cluster.members) {
      double sum = 0.0;
      for (const Rollout* r : list) sum += r->reward->total;
      const double w = weight_of(qi, j, cluster.interpretation_count);
      weighted += w * (sum / static_cast<double>(list.size()));
      covered += w;
    }
    const bool partial = cluster.members.size() < cluster.interpretation_count;

    const auto oracle = hindsight_oracle({&cluster}, weights, CoveragePolicy::AllowPartial);
    const auto& choice = oracle.at(cluster.coefficients);
    OracleComparison c;
    c.query_id = cluster.query_id;
    c.coefficients = cluster.coefficients;
    c.policy_expected_reward = partial ? (covered > 0.0 ? weighted / covered : 0.0) : weighted;
    c.oracle_expected_reward = choice.expected_reward;
    c.oracle_sequence = choice.sequence;
    c.oracle_partial = choice.partial;
    c.oracle_ge_policy = c.oracle_expected_reward >= c.policy_expected_reward - kOracleTolerance;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> arithmetic_midpoints(std::vector<double> grid) {
  grid = sorted_unique(std::move(grid));
  std::vector<double> out;
  for (std::size_t i = 1; i < grid.size(); ++i) out.push_back((grid[i - 1] + grid[i]) / 2.0);
  return out;
}

std::vector<double> geometric_midpoints(std::vector<double> grid) {
  grid = sorted_unique(std::move(grid));
  std::vector<double> out;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double lo = grid[i - 1];
    const double hi = grid[i];
    out.push_back(lo > 0.0 ? std::sqrt(lo * hi) : (lo + hi) / 2.0);
  }
  return out;
}

std::vector<CostCoefficients> sweep_pairs(const SweepConfig& config) {
  auto alphas = config.training_alpha_grid;
  const auto extra_alpha = config.unseen_alpha.value_or(arithmetic_midpoints(config.training_alpha_grid));
  alphas.insert(alphas.end(), extra_alpha.begin(), extra_alpha.end());
  auto betas = config.training_beta_grid;
  const auto extra_beta = config.unseen_beta.value_or(geometric_midpoints(config.training_beta_grid));
  betas.insert(betas.end(), extra_beta.begin(), extra_beta.end());

  std::vector<CostCoefficients> out;
  std::set<std::pair<double, double>> seen;
  auto add = [&](double a, double b) {
    if (seen.emplace(a, b).second) out.push_back(CostCoefficients::checked(a, b));
  };
  for (double a : sorted_unique(alphas)) add(a, config.fixed_beta);
  for (double b : sorted_unique(betas)) add(config.fixed_alpha, b);
  return out;
}

std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& reports) {
  out << "stratum,alpha,beta,n,avg_reward,avg_f1,pct_clar,pct_ma,avg_words\n";
  for (const auto& m : reports) {
    out << to_string(m.stratum) << ',' << (m.alpha ? format_number(*m.alpha) : "") << ','
        << (m.beta ? format_number(*m.beta) : "") << ',' << m.n_rollouts << ','
        << format_number(m.avg_reward) << ',' << format_number(m.avg_f1_percent) << ','
        << format_number(m.pct_clarify) << ',' << format_number(m.pct_multi_answer) << ','
        << format_number(m.avg_answer_words) << '\n';
  }
}

void write_steerability_csv(std::ostream& out, const SteerabilityReport& report) {
  out << "metric,swept,fixed,coefficient,value,n,unseen,monotone\n";
  for (const auto& s : report.series) {
    for (const auto& p : s.points) {
      out << s.metric << ',' << s.swept << ',' << format_number(s.fixed_value) << ','
          << format_number(p.coefficient) << ',' << format_number(p.value) << ',' << p.n_rollouts
          << ',' << (p.unseen ? "true" : "false") << ','
          << (s.monotone_nonincreasing ? "true" : "false") << '\n';
    }
  }
}

}  // namespace groundplay
