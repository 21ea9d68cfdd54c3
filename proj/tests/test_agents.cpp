#include <doctest.h>

#include <random>
#include <set>
#include <thread>

#include "groundplay/agents.hpp"
#include "groundplay/scoring.hpp"
#include "support.hpp"

using namespace groundplay;

namespace {

std::shared_ptr<const QueryExample> potter() {
  return std::make_shared<const QueryExample>(testing::make_example(
      "hp", "in what year did the first harry potter come out?",
      {{"in what year did the first harry potter book come out in the uk?", "1997"},
       {"in what year did the first harry potter book come out in the us?", "1998"},
       {"in what year did the first harry potter movie come out?", "2001"}}));
}

ConversationState after_query(std::shared_ptr<const QueryExample> q, std::size_t interp,
                              CostCoefficients c, int max_clar = 1) {
  auto s = start_conversation(q, interp, c, max_clar);
  return advance(s, Role::User, Action::Query, q->query_text);
}

std::set<std::string> token_set(std::string_view text) {
  auto t = normalize_text(text);
  return {t.begin(), t.end()};
}

KnowledgeTable constant_table(const QueryExample& q, DecisionConstants c) {
  auto table = KnowledgeTable::derive({q});
  table.override_constants(c);
  return table;
}

}  // namespace

TEST_CASE("scripted user examples") {
  auto q = potter();
  auto s = start_conversation(q, 0, {}, 1);
  auto a = scripted_user_act(s, {});
  CHECK(a.action == Action::Query);
  CHECK(a.observation == q->query_text);
  CHECK_FALSE(a.thought.has_value());

  CHECK(clarification_span("the book or the movie?",
                           "in what year did the first harry potter book come out in the uk?") ==
        "the book");
  CHECK(clarification_span("the book or the movie?",
                           "in what year did the first harry potter movie come out?") ==
        "the movie");
  CHECK_FALSE(clarification_span("the book or the movie?", "when was it released?").has_value());

  CHECK(select_from_multi("The book came out in the uk in 1997 and in the us in 1998.",
                          "in what year did the first harry potter book come out in the uk?") ==
        "1997");
  CHECK(select_from_multi("The book came out in the uk in 1997 and the book came out in the us in 1998.",
                          "in what year did the first harry potter book come out in the us?") ==
        "1998");
}

TEST_CASE("scripted user respond and finalize") {
  auto s = after_query(potter(), 2, {});
  s = advance(s, Role::Assistant, Action::Clarify, "Do you mean the book or the movie?");
  auto r = scripted_user_act(s, {});
  CHECK(r.action == Action::Respond);
  CHECK(r.observation == "the movie");

  s = advance(s, Role::User, Action::Respond, r.observation);
  s = advance(s, Role::Assistant, Action::MultiAns, "uk book: 1997; us book: 1998; movie: 2001");
  auto f = scripted_user_act(s, {FinalizePolicy::SelectFromMulti});
  CHECK(f.action == Action::Finalize);
  CHECK(f.observation == "2001");
  auto copy = scripted_user_act(s, {FinalizePolicy::CopyAssistant});
  CHECK(copy.observation == "uk book: 1997; us book: 1998; movie: 2001");

  auto direct = after_query(potter(), 0, {});
  direct = advance(direct, Role::Assistant, Action::Answer, "1997");
  CHECK(scripted_user_act(direct, {}).observation == "1997");

  auto unknown = after_query(potter(), 0, {});
  unknown = advance(unknown, Role::Assistant, Action::Clarify, "Which one?");
  CHECK(scripted_user_act(unknown, {}).observation == "I do not know.");
}

TEST_CASE("scripted user never reveals gold tokens it was not shown") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> pool{"paris", "london", "1997", "1998", "book", "movie",
                                      "uk", "us", "red", "blue", "king", "queen", "river", "2001"};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_int_distribution<int> len(1, 5);
  auto phrase = [&] {
    std::string s;
    for (int k = len(rng); k > 0; --k) s += (s.empty() ? "" : " ") + pool[pick(rng)];
    return s;
  };
  for (int trial = 0; trial < 1500; ++trial) {
    const std::string interp = "what about the " + phrase() + "?";
    const std::string gold = phrase();
    auto q = std::make_shared<const QueryExample>(
        testing::make_example("p", "what about it?", {{interp, gold}, {"other " + phrase(), "x"}}));
    const std::string clar = "the " + phrase() + " or the " + phrase() + "?";
    const std::string answer = trial % 2 ? phrase() : phrase() + "; " + phrase() + ", " + phrase();
    const auto gold_tokens = token_set(gold);
    const auto seen = token_set(interp);

    auto s = after_query(q, 0, {});
    s = advance(s, Role::Assistant, Action::Clarify, clar);
    const auto respond = scripted_user_act(s, {});
    for (const auto& t : token_set(respond.observation)) {
      if (gold_tokens.count(t)) CHECK(seen.count(t));
    }

    auto f = after_query(q, 0, {});
    f = advance(f, Role::Assistant, trial % 2 ? Action::Answer : Action::MultiAns, answer);
    const auto final_answer = scripted_user_act(f, {});
    auto shown = seen;
    for (const auto& t : token_set(answer)) shown.insert(t);
    for (const auto& t : token_set(final_answer.observation)) {
      if (gold_tokens.count(t)) CHECK(shown.count(t));
    }
  }
}

TEST_CASE("knowledge table derivation") {
  const auto table = KnowledgeTable::derive({*potter()});
  const auto* e = table.find("hp");
  REQUIRE(e != nullptr);
  CHECK(e->direct_answer == "1997");
  REQUIRE(e->resolutions.size() == 3);
  CHECK(e->delta_clar == doctest::Approx(100.0 * (1 - 1.0 / 3.0)));
  CHECK(e->delta_multi == e->delta_clar);
  CHECK(e->clarification_question.rfind("Do you mean ", 0) == 0);
  CHECK(e->multi_answer.find("1998") != std::string::npos);
  CHECK(e->extra_words == count_words(e->multi_answer) - 1);
  CHECK(table.find("missing") == nullptr);

  const auto single = KnowledgeTable::derive({testing::make_example("s", "q?", {{"q?", "42"}})});
  CHECK(single.find("s")->delta_clar == 0.0);
}

TEST_CASE("fixed assistant policies") {
  auto q = potter();
  auto table = KnowledgeTable::derive({*q});
  auto s = after_query(q, 1, {20, 5});
  CHECK(scripted_assistant_act(s, AssistantPolicy::AlwaysAnswer, table).action == Action::Answer);
  CHECK(scripted_assistant_act(s, AssistantPolicy::AlwaysMulti, table).action == Action::MultiAns);
  const auto c = scripted_assistant_act(s, AssistantPolicy::ClarifyThenAnswer, table);
  CHECK(c.action == Action::Clarify);
  CHECK(c.observation == table.find("hp")->clarification_question);
  s = advance(s, Role::Assistant, Action::Clarify, c.observation);
  s = advance(s, Role::User, Action::Respond, scripted_user_act(s, {}).observation);
  const auto answer = scripted_assistant_act(s, AssistantPolicy::ClarifyThenAnswer, table);
  CHECK(answer.action == Action::Answer);
  CHECK(answer.observation == "1998");
  CHECK(scripted_assistant_act(s, AssistantPolicy::ClarifyThenMulti, table).action ==
        Action::MultiAns);

  KnowledgeTable empty;
  CHECK(scripted_assistant_act(after_query(q, 0, {}), AssistantPolicy::AlwaysAnswer, empty)
            .observation == "unknown");
}

TEST_CASE("reward-aware policy follows the decision margins") {
  auto q = potter();
  // alpha above delta_clar: never clarify.
  auto t1 = constant_table(*q, {10, 0, 0});
  CHECK(scripted_assistant_act(after_query(q, 0, {20, 0.1}), AssistantPolicy::RewardAware, t1)
            .action == Action::Answer);
  // delta_multi 50 with 12 extra words at beta 0.1: margin 48.8.
  auto t2 = constant_table(*q, {0, 50, 12});
  CHECK(scripted_assistant_act(after_query(q, 0, {20, 0.1}), AssistantPolicy::RewardAware, t2)
            .action == Action::MultiAns);
  // Cheap clarification wins.
  auto t3 = constant_table(*q, {30, 40, 12});
  CHECK(scripted_assistant_act(after_query(q, 0, {2, 5}), AssistantPolicy::RewardAware, t3)
            .action == Action::Clarify);
  // Exact tie between answering and clarifying goes to the shorter sequence.
  auto t4 = constant_table(*q, {20, 0, 0});
  CHECK(scripted_assistant_act(after_query(q, 0, {20, 5}), AssistantPolicy::RewardAware, t4)
            .action == Action::Answer);

  const auto thought = scripted_assistant_act(after_query(q, 0, {2, 5}),
                                              AssistantPolicy::RewardAware, t3, true);
  REQUIRE(thought.thought.has_value());
  CHECK(thought.thought->find("QCRAF") != std::string::npos);
}

TEST_CASE("reward-aware plan matches brute force over the protocol sequences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> delta(0, 100);
  std::uniform_int_distribution<int> words(0, 30);
  const std::vector<double> alphas{0, 0.5, 2, 10, 20, 50};
  const std::vector<double> betas{0, 0.1, 0.7, 1, 5, 10};
  auto q = potter();
  for (int trial = 0; trial < 500; ++trial) {
    DecisionConstants k{delta(rng), delta(rng), words(rng)};
    if (trial % 10 == 0) k.delta_multi = k.delta_clar;
    const CostCoefficients c{alphas[static_cast<std::size_t>(trial) % 6],
                             betas[static_cast<std::size_t>(trial / 6) % 6]};
    for (int cap = 0; cap <= 2; ++cap) {
      auto s = after_query(q, 0, c, cap);
      // Independent margins: clarify arm costs alpha per round.
      std::optional<std::pair<double, std::string>> best;
      for (int rounds = 0; rounds <= cap; ++rounds) {
        std::string cr;
        for (int r = 0; r < rounds; ++r) cr += "CR";
        const double clar_gain = rounds > 0 ? k.delta_clar : 0.0;
        const double a_margin = clar_gain - c.alpha * rounds;
        const double m_margin = std::max(clar_gain, k.delta_multi) - c.alpha * rounds -
                                c.beta * k.extra_words;
        for (auto [m, seq] : {std::pair{a_margin, "Q" + cr + "AF"}, std::pair{m_margin, "Q" + cr + "MF"}}) {
          if (!best || m > best->first ||
              (m == best->first && testing::ref_canonical_less(seq, best->second))) {
            best = {m, seq};
          }
        }
      }
      INFO("trial " << trial << " cap " << cap);
      CHECK(reward_aware_plan(s, k).letters() == best->second);
      for (const auto& seq : enumerate_sequences(cap)) {
        CHECK(sequence_margin(seq, k, c) <= best->first + 1e-12);
      }
    }
  }
}

TEST_CASE("scripted agents are deterministic across threads") {
  auto q = potter();
  auto table = std::make_shared<KnowledgeTable>(KnowledgeTable::derive({*q}));
  table->override_constants({30, 40, 12});
  const ScriptedAssistant assistant(AssistantPolicy::RewardAware, table);
  const ScriptedUser user;
  auto s = after_query(q, 1, {2, 5});
  const PromptBundle prompt{std::string(template_ids::kAssistantCot), "", {}};
  const auto reference = assistant.act(s, Role::Assistant, prompt);
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int k = 0; k < 200; ++k) {
        const auto a = assistant.act(s, Role::Assistant, prompt);
        if (a.action != reference.action || a.observation != reference.observation ||
            a.thought != reference.thought) {
          ++mismatches;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(mismatches == 0);
  CHECK(user.descriptor() == "scripted:select");
  CHECK(assistant.descriptor() == "scripted:reward_aware");
  CHECK(scripted_user_from_name("scripted:copy").has_value());
  CHECK_FALSE(assistant_policy_from_name("scripted:nope").has_value());
}
