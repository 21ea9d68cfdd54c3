#include "groundplay/engine.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <thread>

#include "groundplay/parse.hpp"

namespace groundplay {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

UserPromptPurpose purpose_for(Phase phase) {
  switch (phase) {
    case Phase::AwaitUserClarResponse: return UserPromptPurpose::ClarificationResponse;
    case Phase::AwaitUserFinalize: return UserPromptPurpose::Finalize;
    default: return UserPromptPurpose::Query;
  }
}

bool in_unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

void RunConfig::validate() const {
  if (n_rollouts_per_interpretation < 1) throw ConfigError("n_rollouts_per_interpretation must be >= 1");
  if (fixed_coefficients.empty() && (alpha_grid.empty() || beta_grid.empty())) {
    throw ConfigError("alpha_grid and beta_grid must be non-empty");
  }
  auto check_coefficient = [](double v, const char* what) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError(std::string(what) + " values must be finite and non-negative");
    }
  };
  for (double a : alpha_grid) check_coefficient(a, "alpha_grid");
  for (double b : beta_grid) check_coefficient(b, "beta_grid");
  for (const auto& c : fixed_coefficients) {
    check_coefficient(c.alpha, "fixed alpha");
    check_coefficient(c.beta, "fixed beta");
  }
  if (max_clarifications < 0) throw ConfigError("max_clarifications must be >= 0");
  if (!in_unit_interval(f1_validity_threshold)) {
    throw ConfigError("f1_validity_threshold must lie in [0, 1]");
  }
  if (!in_unit_interval(ignore_fraction_threshold)) {
    throw ConfigError("ignore_fraction_threshold must lie in [0, 1]");
  }
  if (max_parallel_rollouts < 1) throw ConfigError("max_parallel_rollouts must be >= 1");
}

CostCoefficients sample_coefficients(std::mt19937_64& rng, const std::vector<double>& alpha_grid,
                                     const std::vector<double>& beta_grid) {
  std::uniform_int_distribution<std::size_t> pick_alpha(0, alpha_grid.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_beta(0, beta_grid.size() - 1);
  const double alpha = alpha_grid[pick_alpha(rng)];
  const double beta = beta_grid[pick_beta(rng)];
  return {alpha, beta};
}

std::uint64_t rollout_seed(std::uint64_t seed, std::string_view query_id,
                           std::size_t interpretation_index, std::size_t ordinal) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ fnv1a(query_id));
  h = splitmix64(h ^ static_cast<std::uint64_t>(interpretation_index));
  return splitmix64(h ^ static_cast<std::uint64_t>(ordinal));
}

std::string make_rollout_id(std::string_view query_id, std::size_t interpretation_index,
                            std::size_t ordinal) {
  std::string id(query_id);
  id += '#';
  id += std::to_string(interpretation_index);
  id += '#';
  id += std::to_string(ordinal);
  return id;
}

std::vector<RolloutTask> plan_tasks(const std::vector<std::shared_ptr<const QueryExample>>& dataset,
                                    const RunConfig& config) {
  std::vector<std::shared_ptr<const QueryExample>> queries = dataset;
  std::stable_sort(queries.begin(), queries.end(),
                   [](const auto& a, const auto& b) { return a->id < b->id; });
  const auto n_r = static_cast<std::size_t>(config.n_rollouts_per_interpretation);
  std::vector<RolloutTask> tasks;
  for (const auto& query : queries) {
    for (std::size_t j = 0; j < query->interpretations.size(); ++j) {
      if (!config.fixed_coefficients.empty()) {
        std::size_t ordinal = 0;
        for (const auto& pair : config.fixed_coefficients) {
          for (std::size_t r = 0; r < n_r; ++r) tasks.push_back({query, j, ordinal++, pair});
        }
        continue;
      }
      for (std::size_t r = 0; r < n_r; ++r) {
        std::mt19937_64 rng(rollout_seed(config.seed, query->id, j, r));
        tasks.push_back({query, j, r, sample_coefficients(rng, config.alpha_grid, config.beta_grid)});
      }
    }
  }
  return tasks;
}

double ignore_fraction(std::string_view final_answer, std::string_view assistant_answer) {
  const auto final_tokens = normalize_text(final_answer);
  if (final_tokens.empty()) return 0.0;
  const auto assistant_tokens = normalize_text(assistant_answer);
  const std::set<std::string> seen(assistant_tokens.begin(), assistant_tokens.end());
  std::size_t missing = 0;
  for (const auto& t : final_tokens) missing += seen.count(t) ? 0 : 1;
  return static_cast<double>(missing) / static_cast<double>(final_tokens.size());
}

ValidityVerdict validate_rollout(const Rollout& rollout, const Interpretation& interpretation,
                                 const RunConfig& config) {
  if (rollout.validity && !rollout.validity->valid &&
      (rollout.validity->reason == VerdictReason::ParseFailure ||
       rollout.validity->reason == VerdictReason::ProtocolViolation)) {
    return *rollout.validity;
  }
  if (!rollout.terminal() || rollout.turns.size() < 3) {
    return ValidityVerdict::invalid(VerdictReason::ProtocolViolation);
  }
  const auto& assistant_answer = rollout.turns[rollout.turns.size() - 2].observation;
  if (ignore_fraction(rollout.final_answer, assistant_answer) > config.ignore_fraction_threshold) {
    return ValidityVerdict::invalid(VerdictReason::UserIgnoredAssistant);
  }
  double best = 0.0;
  for (const auto& gold : interpretation.gold_answers) {
    best = std::max(best, token_f1(rollout.final_answer, gold, config.scoring_mode));
  }
  if (best < config.f1_validity_threshold) return ValidityVerdict::invalid(VerdictReason::LowF1);
  return ValidityVerdict::ok();
}

Rollout run_rollout(std::shared_ptr<const QueryExample> query, std::size_t interpretation_index,
                    CostCoefficients coefficients, const AgentBackend& user,
                    const AgentBackend& assistant, const RunConfig& config,
                    const TemplateStore& templates, std::string rollout_id) {
  ConversationState state = start_conversation(std::move(query), interpretation_index,
                                               coefficients, config.max_clarifications);
  std::optional<VerdictReason> fault;
  try {
    while (state.phase != Phase::Terminal) {
      const Role role = state.phase == Phase::AwaitAssistant ? Role::Assistant : Role::User;
      PromptBundle prompt = role == Role::Assistant
                                ? build_assistant_prompt(templates, state, config.use_thoughts)
                                : build_user_prompt(templates, state, purpose_for(state.phase));
      AgentAction move = (role == Role::Assistant ? assistant : user).act(state, role, prompt);
      if (move_error(state, role, move.action, move.observation, move.thought)) {
        fault = VerdictReason::ProtocolViolation;
        break;
      }
      state = advance(std::move(state), role, move.action, std::move(move.observation),
                      std::move(move.thought), std::move(prompt.rendered));
    }
  } catch (const RecoverableFailure&) {
    fault = VerdictReason::ParseFailure;
  } catch (const ParseError&) {
    fault = VerdictReason::ParseFailure;
  } catch (const ProtocolError&) {
    fault = VerdictReason::ProtocolViolation;
  }

  const std::size_t index = state.interpretation_index;
  const auto example = state.query;
  Rollout rollout = make_rollout(std::move(state), std::move(rollout_id));
  if (fault) {
    rollout.validity = ValidityVerdict::invalid(*fault);
    return rollout;
  }
  const auto& interpretation = example->interpretations[index];
  rollout.reward = reward(rollout, interpretation, config.scoring_mode);
  rollout.validity = validate_rollout(rollout, interpretation, config);
  return rollout;
}

std::size_t BatchSummary::valid() const {
  auto it = by_reason.find(VerdictReason::Ok);
  return it == by_reason.end() ? 0 : it->second;
}

BatchSummary run_batch(const std::vector<std::shared_ptr<const QueryExample>>& dataset,
                       const RunConfig& config, const AgentBackend& user,
                       const AgentBackend& assistant, const TemplateStore& templates,
                       const RolloutSink& sink, std::ostream* progress) {
  config.validate();
  const auto tasks = plan_tasks(dataset, config);
  BatchSummary summary;
  summary.planned = tasks.size();
  if (tasks.empty()) return summary;

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(config.max_parallel_rollouts), tasks.size());
  // Completed rollouts wait here until all earlier ones have been written.
  const std::size_t window = 8 * workers + 64;
  std::vector<std::optional<Rollout>> ring(window);

  std::mutex mutex;
  std::condition_variable task_ready;
  std::condition_variable result_ready;
  std::size_t next_task = 0;
  std::size_t next_write = 0;
  bool stop = false;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      std::size_t i = 0;
      {
        std::unique_lock lock(mutex);
        task_ready.wait(lock, [&] {
          return stop || next_task >= tasks.size() || next_task < next_write + window;
        });
        if (stop || next_task >= tasks.size()) return;
        i = next_task++;
      }
      const auto& task = tasks[i];
      try {
        Rollout r = run_rollout(task.query, task.interpretation_index, task.coefficients, user,
                                assistant, config, templates,
                                make_rollout_id(task.query->id, task.interpretation_index,
                                                task.ordinal));
        std::lock_guard lock(mutex);
        ring[i % window] = std::move(r);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
      result_ready.notify_all();
      task_ready.notify_all();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);

  const std::size_t report_every = std::max<std::size_t>(1, tasks.size() / 10);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    Rollout r;
    {
      std::unique_lock lock(mutex);
      result_ready.wait(lock, [&] { return failure || ring[i % window].has_value(); });
      if (failure) break;
      r = std::move(*ring[i % window]);
      ring[i % window].reset();
      next_write = i + 1;
    }
    task_ready.notify_all();
    try {
      check_rollout_structure(r, config.max_clarifications);
      sink(r);
    } catch (const std::exception& e) {
      summary.aborted = true;
      summary.abort_message = "writing rollout '" + r.rollout_id + "' failed: " + e.what();
      break;
    }
    ++summary.written;
    ++summary.by_reason[r.validity ? r.validity->reason : VerdictReason::ProtocolViolation];
    if (progress && (summary.written % report_every == 0 || summary.written == tasks.size())) {
      *progress << "rollouts: " << summary.written << "/" << tasks.size() << " written, "
                << summary.valid() << " valid\n";
    }
  }

  {
    std::lock_guard lock(mutex);
    stop = true;
  }
  task_ready.notify_all();
  for (auto& t : pool) t.join();

  if (failure) std::rethrow_exception(failure);
  if (summary.aborted && progress) {
    *progress << "batch aborted after " << summary.written << "/" << tasks.size()
              << " rollouts: " << summary.abort_message << "\n";
  }
  return summary;
}

}  // namespace groundplay
