#include <doctest.h>

#include <map>
#include <sstream>

#include "groundplay/engine.hpp"
#include "groundplay/io.hpp"
#include "support.hpp"

using namespace groundplay;

namespace {

// Assistant that always clarifies, even when the budget is spent.
class ClarifyForever final : public AgentBackend {
public:
  AgentAction act(const ConversationState&, Role, const PromptBundle&) const override {
    return {std::nullopt, Action::Clarify, "which one?", 1};
  }
  std::string descriptor() const override { return "test:clarify_forever"; }
};

class AlwaysUnparseable final : public AgentBackend {
public:
  AgentAction act(const ConversationState&, Role, const PromptBundle&) const override {
    throw RecoverableFailure("no usable reply", 4);
  }
  std::string descriptor() const override { return "test:unparseable"; }
};

class Broken final : public AgentBackend {
public:
  AgentAction act(const ConversationState&, Role, const PromptBundle&) const override {
    throw BackendError("credentials rejected");
  }
  std::string descriptor() const override { return "test:broken"; }
};

struct Fixture {
  std::vector<QueryExample> examples = testing::scripted_corpus(4);
  std::vector<std::shared_ptr<const QueryExample>> dataset = share_examples(examples);
  std::shared_ptr<KnowledgeTable> knowledge =
      std::make_shared<KnowledgeTable>(KnowledgeTable::derive(examples));
  ScriptedUser user;

  ScriptedAssistant assistant(AssistantPolicy policy) const {
    return ScriptedAssistant(policy, knowledge);
  }
};

std::string run_to_string(const Fixture& f, RunConfig config, const AgentBackend& assistant,
                          BatchSummary* summary = nullptr) {
  std::ostringstream out;
  auto s = run_batch(f.dataset, config, f.user, assistant, TemplateStore::builtin(),
                     [&](const Rollout& r) { out << to_json(r).dump() << '\n'; });
  if (summary) *summary = s;
  return out.str();
}

Rollout finished(std::string assistant_answer, std::string final_answer) {
  auto r = testing::synthetic_rollout("q", 0, {}, "QAF", 0.0, 0);
  r.turns[1].observation = std::move(assistant_answer);
  r.turns[2].observation = final_answer;
  r.final_answer = std::move(final_answer);
  r.validity.reset();
  return r;
}

}  // namespace

TEST_CASE("coefficient sampling is uniform over the grid") {
  const std::vector<double> alphas{0, 2, 20};
  const std::vector<double> betas{0.1, 0.7, 5.0};
  std::mt19937_64 rng(2024);
  std::map<std::pair<double, double>, int> counts;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto c = sample_coefficients(rng, alphas, betas);
    ++counts[{c.alpha, c.beta}];
  }
  REQUIRE(counts.size() == 9);
  double chi2 = 0.0;
  const double expected = n / 9.0;
  for (const auto& [pair, count] : counts) {
    CHECK(std::abs(count / static_cast<double>(n) - 1.0 / 9.0) < 0.02);
    chi2 += (count - expected) * (count - expected) / expected;
  }
  // 99th percentile of chi-square with 8 degrees of freedom.
  CHECK(chi2 < 20.090);

  std::mt19937_64 single(1);
  for (int k = 0; k < 100; ++k) {
    const auto c = sample_coefficients(single, {2}, {0.7});
    CHECK(c.alpha == 2);
    CHECK(c.beta == 0.7);
  }
  std::mt19937_64 a(99), b(99);
  for (int k = 0; k < 1000; ++k) CHECK(sample_coefficients(a, alphas, betas) == sample_coefficients(b, alphas, betas));
}

TEST_CASE("rollout seeds and ids") {
  CHECK(make_rollout_id("q7", 1, 12) == "q7#1#12");
  CHECK(rollout_seed(0, "q", 0, 0) == rollout_seed(0, "q", 0, 0));
  CHECK(rollout_seed(0, "q", 0, 0) != rollout_seed(1, "q", 0, 0));
  CHECK(rollout_seed(0, "q", 0, 0) != rollout_seed(0, "q", 1, 0));
  CHECK(rollout_seed(0, "q", 0, 0) != rollout_seed(0, "q", 0, 1));
  CHECK(rollout_seed(0, "q", 0, 0) != rollout_seed(0, "r", 0, 0));
}

TEST_CASE("run config validation") {
  RunConfig c;
  CHECK(c.n_rollouts_per_interpretation == 192);
  CHECK(c.max_clarifications == 1);
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.n_rollouts_per_interpretation = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.alpha_grid.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.f1_validity_threshold = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.max_parallel_rollouts = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("single rollout shapes") {
  Fixture f;
  RunConfig config;
  const auto answer = f.assistant(AssistantPolicy::AlwaysAnswer);
  auto r = run_rollout(f.dataset[0], 0, {2, 0.7}, f.user, answer, config, TemplateStore::builtin(), "x");
  CHECK(coarsen(r).letters() == "QAF");
  CHECK(r.is_valid());
  REQUIRE(r.reward.has_value());
  CHECK(r.reward->total == doctest::Approx(100 - 0.7));
  CHECK(*r.reward == reward(r, f.examples[0].interpretations[0]));
  for (const auto& t : r.turns) CHECK_FALSE(t.prompt.empty());

  const auto cm = f.assistant(AssistantPolicy::ClarifyThenMulti);
  r = run_rollout(f.dataset[0], 1, {2, 0.7}, f.user, cm, config, TemplateStore::builtin(), "y");
  CHECK(coarsen(r).letters() == "QCRMF");
  CHECK(r.reward->n_clarifications == 1);
  CHECK(r.turns.size() <= 3 + 2 * static_cast<std::size_t>(config.max_clarifications));

  ClarifyForever forever;
  r = run_rollout(f.dataset[0], 0, {2, 0.7}, f.user, forever, config, TemplateStore::builtin(), "z");
  CHECK_FALSE(r.is_valid());
  CHECK(r.validity->reason == VerdictReason::ProtocolViolation);
  CHECK(coarsen(r).letters() == "QCR");
  CHECK_FALSE(r.reward.has_value());
  CHECK_NOTHROW(check_rollout_structure(r, 1));

  AlwaysUnparseable unparseable;
  r = run_rollout(f.dataset[0], 0, {2, 0.7}, f.user, unparseable, config, TemplateStore::builtin(), "w");
  CHECK(r.validity->reason == VerdictReason::ParseFailure);
  CHECK(coarsen(r).letters() == "Q");

  Broken broken;
  CHECK_THROWS_AS(run_rollout(f.dataset[0], 0, {2, 0.7}, f.user, broken, config,
                              TemplateStore::builtin(), "v"),
                  BackendError);
}

TEST_CASE("thoughts are requested only when configured") {
  Fixture f;
  f.knowledge->override_constants({30, 40, 12});
  RunConfig config;
  config.use_thoughts = true;
  const auto ra = f.assistant(AssistantPolicy::RewardAware);
  auto r = run_rollout(f.dataset[0], 0, {2, 5}, f.user, ra, config, TemplateStore::builtin(), "t");
  CHECK(r.turns[1].thought.has_value());
  CHECK(r.turns[1].prompt.find("THOUGHT") != std::string::npos);
  config.use_thoughts = false;
  r = run_rollout(f.dataset[0], 0, {2, 5}, f.user, ra, config, TemplateStore::builtin(), "t");
  CHECK_FALSE(r.turns[1].thought.has_value());
}

TEST_CASE("validity filter") {
  RunConfig config;
  const Interpretation i1939{"when?", {"1939"}};
  CHECK(validate_rollout(finished("1939", "1939"), i1939, config) == ValidityVerdict::ok());

  const Interpretation paris{"where?", {"paris france"}};
  CHECK(ignore_fraction("paris france", "london") == 1.0);
  CHECK(validate_rollout(finished("london", "paris france"), paris, config) ==
        ValidityVerdict::invalid(VerdictReason::UserIgnoredAssistant));

  // Ten gold tokens, one shared: F1 = 2 * 1 * 0.1 / 1.1 ~ 0.18; twenty: ~0.095.
  const Interpretation wordy{"?", {"one two three four five six seven eight nine ten eleven twelve "
                                   "thirteen fourteen fifteen sixteen seventeen eighteen nineteen twenty"}};
  CHECK(token_f1("one", wordy.gold_answers[0]) < 0.1);
  CHECK(validate_rollout(finished("one", "one"), wordy, config) ==
        ValidityVerdict::invalid(VerdictReason::LowF1));

  // Ignore check runs before the F1 check.
  CHECK(validate_rollout(finished("london", "zzz"), i1939, config).reason ==
        VerdictReason::UserIgnoredAssistant);
  // Half the tokens missing is not above the threshold.
  CHECK(ignore_fraction("paris london", "paris") == 0.5);
  CHECK(validate_rollout(finished("paris", "paris london"), paris, config).valid);
  CHECK(ignore_fraction("", "x") == 0.0);

  auto faulted = finished("1939", "1939");
  faulted.validity = ValidityVerdict::invalid(VerdictReason::ParseFailure);
  CHECK(validate_rollout(faulted, i1939, config).reason == VerdictReason::ParseFailure);
  auto partial = finished("1939", "1939");
  partial.turns.pop_back();
  CHECK(validate_rollout(partial, i1939, config).reason == VerdictReason::ProtocolViolation);
}

TEST_CASE("batch counts, order and structure") {
  Fixture f;
  f.knowledge->override_constants({30, 40, 12});
  std::vector<QueryExample> two{f.examples[0], f.examples[1]};
  two[1].interpretations.resize(2);
  two[1].weights.reset();
  const auto dataset = share_examples({two[1], two[0]});
  RunConfig config;
  config.n_rollouts_per_interpretation = 3;
  const auto ra = f.assistant(AssistantPolicy::RewardAware);
  std::vector<Rollout> out;
  const auto summary = run_batch(dataset, config, f.user, ra, TemplateStore::builtin(),
                                 [&](const Rollout& r) { out.push_back(r); });
  CHECK(summary.planned == 12);
  CHECK(summary.written == 12);
  CHECK(summary.valid() == summary.by_reason.at(VerdictReason::Ok));
  REQUIRE(out.size() == 12);
  for (std::size_t k = 1; k < out.size(); ++k) {
    CHECK(std::tie(out[k - 1].query_id, out[k - 1].interpretation_index) <=
          std::tie(out[k].query_id, out[k].interpretation_index));
  }
  CHECK(out[0].rollout_id == out[0].query_id + "#0#0");
  CHECK(out[2].rollout_id == out[0].query_id + "#0#2");
  for (const auto& r : out) {
    CHECK_NOTHROW(check_rollout_structure(r, config.max_clarifications));
    int clar = 0;
    for (const auto& t : r.turns) clar += t.action == Action::Clarify ? 1 : 0;
    CHECK(clar <= config.max_clarifications);
  }
}

TEST_CASE("batch output is independent of parallelism") {
  Fixture f;
  f.knowledge->override_constants({30, 40, 12});
  RunConfig config;
  config.n_rollouts_per_interpretation = 25;
  config.seed = 17;
  const auto ra = f.assistant(AssistantPolicy::RewardAware);
  config.max_parallel_rollouts = 1;
  const auto serial = run_to_string(f, config, ra);
  config.max_parallel_rollouts = 8;
  const auto parallel = run_to_string(f, config, ra);
  CHECK(serial == parallel);
  CHECK(run_to_string(f, config, ra) == parallel);
  config.seed = 18;
  CHECK(run_to_string(f, config, ra) != parallel);
}

TEST_CASE("fixed coefficients run every pair") {
  Fixture f;
  RunConfig config;
  config.n_rollouts_per_interpretation = 2;
  config.fixed_coefficients = {{0, 5}, {50, 5}};
  const auto tasks = plan_tasks(f.dataset, config);
  std::size_t interps = 0;
  for (const auto& e : f.examples) interps += e.interpretations.size();
  CHECK(tasks.size() == interps * 4);
  CHECK(tasks[0].coefficients == CostCoefficients{0, 5});
  CHECK(tasks[2].coefficients == CostCoefficients{50, 5});
  CHECK(tasks[3].ordinal == 3);
}

TEST_CASE("sink failure aborts with a progress report; backend errors propagate") {
  Fixture f;
  RunConfig config;
  config.n_rollouts_per_interpretation = 10;
  config.max_parallel_rollouts = 4;
  const auto answer = f.assistant(AssistantPolicy::AlwaysAnswer);
  int seen = 0;
  const auto summary = run_batch(f.dataset, config, f.user, answer, TemplateStore::builtin(),
                                 [&](const Rollout&) {
                                   if (++seen == 5) throw std::runtime_error("disk full");
                                 });
  CHECK(summary.aborted);
  CHECK(summary.written == 4);
  CHECK(summary.abort_message.find("disk full") != std::string::npos);

  Broken broken;
  CHECK_THROWS_AS(run_batch(f.dataset, config, f.user, broken, TemplateStore::builtin(),
                            [](const Rollout&) {}),
                  BackendError);

  AlwaysUnparseable unparseable;
  const auto failed = run_batch(f.dataset, config, f.user, unparseable, TemplateStore::builtin(),
                                [](const Rollout&) {});
  CHECK(failed.valid() == 0);
  CHECK(failed.by_reason.at(VerdictReason::ParseFailure) == failed.planned);
}

TEST_CASE("progress goes to the given stream") {
  Fixture f;
  RunConfig config;
  config.n_rollouts_per_interpretation = 10;
  const auto answer = f.assistant(AssistantPolicy::AlwaysAnswer);
  std::ostringstream log;
  run_batch(f.dataset, config, f.user, answer, TemplateStore::builtin(), [](const Rollout&) {}, &log);
  CHECK(log.str().find("written") != std::string::npos);
}
