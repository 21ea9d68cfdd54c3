#include <doctest.h>

#include <random>

#include "groundplay/parse.hpp"
#include "groundplay/prompts.hpp"
#include "support.hpp"

using namespace groundplay;

namespace {

std::size_t count(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + 1)) {
    ++n;
  }
  return n;
}

// The part of an assistant prompt describing the live conversation; the
// worked examples above it repeat the same markers.
std::string live_section(const std::string& rendered) {
  return rendered.substr(rendered.rfind("ALPHA : "));
}

ConversationState assistant_state(double alpha, double beta, bool with_history,
                                  std::optional<std::string> context = std::nullopt) {
  auto q = testing::make_example("q", "in what year did the first harry potter come out?",
                                 {{"When did the first harry potter book come out in the uk?", "1997"},
                                  {"When did the first harry potter movie come out?", "2001"}});
  q.context = std::move(context);
  auto s = start_conversation(std::make_shared<const QueryExample>(q), 0, {alpha, beta}, 1);
  s = advance(s, Role::User, Action::Query, q.query_text);
  if (with_history) {
    s = advance(s, Role::Assistant, Action::Clarify, "the book or the movie?");
    s = advance(s, Role::User, Action::Respond, "the book.");
  }
  return s;
}

}  // namespace

TEST_CASE("coefficient and action-list formatting") {
  CHECK(format_coefficient(10) == "10.0");
  CHECK(format_coefficient(0.1) == "0.1");
  CHECK(format_coefficient(2) == "2.0");
  CHECK(format_coefficient(0.25) == "0.25");
  CHECK(format_allowed_actions({Action::Answer, Action::Clarify, Action::MultiAns}) ==
        "{'CLARIFY', 'MULTI_ANSWER', 'ANSWER'}");
  CHECK(format_allowed_actions({Action::Answer, Action::MultiAns}) == "{'MULTI_ANSWER', 'ANSWER'}");
}

TEST_CASE("assistant prompt carries q, h, c, alpha and beta") {
  const auto s = assistant_state(10, 1, false);
  const auto plain = build_assistant_prompt(TemplateStore::builtin(), s, false);
  CHECK(plain.template_id == template_ids::kAssistantPlain);
  const auto live = live_section(plain.rendered);
  CHECK(live.find("ALPHA : **10.0**") != std::string::npos);
  CHECK(live.find("BETA : **1.0**") != std::string::npos);
  CHECK(live.find("QUESTION : in what year did the first harry potter come out?") !=
        std::string::npos);
  CHECK(count(live, "CLARIFICATION QUESTION :") == 0);
  CHECK(plain.rendered.find('{' + std::string("ALPHA_VAR}")) == std::string::npos);

  const auto h = assistant_state(0.1, 1, true, "Year | Revenue\n2019 | 120");
  const auto cot = build_assistant_prompt(TemplateStore::builtin(), h, true);
  CHECK(cot.template_id == template_ids::kAssistantCot);
  const auto live_h = cot.rendered.substr(cot.rendered.rfind("CONTEXT :"));
  CHECK(live_h.find("2019 | 120") != std::string::npos);
  CHECK(count(live_h, "CLARIFICATION QUESTION :") == 1);
  CHECK(live_h.find("CLARIFICATION QUESTION : the book or the movie?\n"
                    "ANSWER TO CLARIFICATION : the book.") != std::string::npos);
  CHECK(live_h.find("ALLOWED_ACTIONS : {'MULTI_ANSWER', 'ANSWER'}") != std::string::npos);
}

TEST_CASE("user prompts") {
  auto s = assistant_state(10, 1, false);
  s = advance(s, Role::Assistant, Action::Clarify, "the book or the movie?");
  const auto clar = build_user_prompt(TemplateStore::builtin(), s, UserPromptPurpose::ClarificationResponse);
  CHECK(clar.rendered.find("Clarification question: the book or the movie?") != std::string::npos);
  CHECK_THROWS_AS(build_user_prompt(TemplateStore::builtin(), s, UserPromptPurpose::Finalize),
                  ProtocolError);

  s = advance(s, Role::User, Action::Respond, "the book");
  s = advance(s, Role::Assistant, Action::MultiAns, "uk: 1997; us: 1998");
  const auto fin = build_user_prompt(TemplateStore::builtin(), s, UserPromptPurpose::Finalize);
  CHECK(fin.rendered.find("Unambiguous question: When did the first harry potter book come out in the uk?") !=
        std::string::npos);
  CHECK(fin.rendered.find("FRIEND's ANSWER: uk: 1997; us: 1998") != std::string::npos);
}

TEST_CASE("template rendering is single pass") {
  PromptTemplate t("t", "A {X_VAR} B {Y_VAR}");
  CHECK(t.render({{"X_VAR", "{Y_VAR}"}, {"Y_VAR", "y"}}) == "A {Y_VAR} B y");
  CHECK_THROWS_AS(t.render({{"X_VAR", "x"}}), ConfigError);
  CHECK(t.placeholders().size() == 2);
}

TEST_CASE("template directory loading") {
  const auto dir = std::filesystem::path(GROUNDPLAY_TEMPLATE_DIR);
  const auto store = TemplateStore::load_directory(dir);
  CHECK(store.get(template_ids::kAssistantCot).id() == "assistant_cot");
  const auto empty = testing::temp_dir("templates");
  CHECK_THROWS_AS(TemplateStore::load_directory(empty), ConfigError);
}

TEST_CASE("parse examples") {
  const ActionSet assistant{Action::Clarify, Action::Answer, Action::MultiAns};
  auto r = parse_agent_output("ACTION : **ANSWER** : 1939", Role::Assistant, assistant);
  CHECK_FALSE(r.thought.has_value());
  CHECK(r.action == Action::Answer);
  CHECK(r.observation == "1939");

  r = parse_agent_output(
      "THOUGHT : my reward will be 89.0.\nACTION : **MULTI_ANSWER** : The book came out in 1997.",
      Role::Assistant, assistant);
  CHECK(r.thought == "my reward will be 89.0.");
  CHECK(r.action == Action::MultiAns);
  CHECK(r.observation == "The book came out in 1997.");

  r = parse_agent_output("ACTION : **MULTI_ANS** : x", Role::Assistant, assistant);
  CHECK(r.action == Action::MultiAns);

  r = parse_agent_output("ACTION : **ANSWER** : 1997", Role::User, {Action::Finalize});
  CHECK(r.action == Action::Finalize);
  r = parse_agent_output("ACTION : **ANSWER_CLARIFICATION** : the book.", Role::User,
                         {Action::Respond});
  CHECK(r.action == Action::Respond);
  CHECK(r.observation == "the book.");

  // The last ACTION line wins.
  r = parse_agent_output("ACTION : **CLARIFY** : a?\nACTION : **ANSWER** : b", Role::Assistant,
                         assistant);
  CHECK(r.action == Action::Answer);
}

TEST_CASE("parse errors carry their kind and the raw text") {
  const ActionSet limited{Action::Answer, Action::MultiAns};
  auto kind_of = [&](std::string raw, Role role, ActionSet allowed) {
    try {
      parse_agent_output(raw, role, allowed);
    } catch (const ParseError& e) {
      CHECK(e.raw() == raw);
      return std::optional<ParseErrorKind>(e.kind());
    }
    return std::optional<ParseErrorKind>();
  };
  CHECK(kind_of("I think the answer is 1939", Role::Assistant, limited) == ParseErrorKind::NoAction);
  CHECK(kind_of("ACTION : **GUESS** : 1939", Role::Assistant, limited) ==
        ParseErrorKind::UnknownAction);
  CHECK(kind_of("ACTION : **CLARIFY** : which?", Role::Assistant, limited) ==
        ParseErrorKind::Disallowed);
  CHECK(kind_of("ACTION : **ANSWER** :   ", Role::Assistant, limited) ==
        ParseErrorKind::EmptyObservation);
  CHECK(kind_of("ACTION : **CLARIFY** : which?", Role::User, {Action::Respond}) ==
        ParseErrorKind::Disallowed);
}

TEST_CASE("format then parse is the identity on canonical lines") {
  std::mt19937_64 rng(7);
  const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,;:!?*'\"()-_$%#@/";
  std::uniform_int_distribution<std::size_t> ch(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> len(1, 40);
  const std::vector<std::pair<Role, Action>> moves{{Role::Assistant, Action::Answer},
                                                   {Role::Assistant, Action::MultiAns},
                                                   {Role::Assistant, Action::Clarify},
                                                   {Role::User, Action::Respond},
                                                   {Role::User, Action::Finalize}};
  const ActionSet everything{Action::Clarify, Action::Answer, Action::MultiAns, Action::Respond,
                             Action::Finalize};
  for (int trial = 0; trial < 3000; ++trial) {
    std::string payload;
    for (int k = len(rng); k > 0; --k) payload += alphabet[ch(rng)];
    payload = payload.substr(payload.find_first_not_of(' ') == std::string::npos
                                 ? 0
                                 : payload.find_first_not_of(' '));
    while (!payload.empty() && payload.back() == ' ') payload.pop_back();
    if (payload.empty()) payload = "x";
    const auto [role, action] = moves[static_cast<std::size_t>(trial) % moves.size()];
    std::optional<std::string> thought;
    if (role == Role::Assistant && trial % 3 == 0) thought = "reward is " + std::to_string(trial);
    const auto text = format_agent_output(action, payload, thought);
    INFO(text);
    const auto back = parse_agent_output(text, role, everything);
    CHECK(back.action == action);
    CHECK(back.observation == payload);
    CHECK(back.thought == thought);
  }
}
