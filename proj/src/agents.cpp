#include "groundplay/agents.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <vector>

#include "groundplay/scoring.hpp"

namespace groundplay {

namespace {

struct Word {
  std::string_view raw;
  std::string norm;  // empty for articles and bare punctuation
};

std::vector<Word> split_words(std::string_view text) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == start) continue;
    Word w{text.substr(start, i - start), {}};
    auto tokens = normalize_text(w.raw);
    if (!tokens.empty()) w.norm = std::move(tokens.front());
    words.push_back(std::move(w));
  }
  return words;
}

bool is_content(const Word& w) { return !w.norm.empty() && !is_stopword(w.norm); }

bool is_edge_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '?' || c == '!' || c == '"' ||
         c == '\'' || c == '(' || c == ')';
}

std::string join_span(const std::vector<Word>& words, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t k = begin; k < end; ++k) {
    if (!out.empty()) out += ' ';
    out += words[k].raw;
  }
  std::size_t a = 0;
  std::size_t b = out.size();
  while (a < b && is_edge_punct(out[a])) ++a;
  while (b > a && is_edge_punct(out[b - 1])) --b;
  return out.substr(a, b - a);
}

std::set<std::string> token_set(std::string_view text) {
  auto tokens = normalize_text(text);
  return {std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end())};
}

// Words that frame a multi-answer clause rather than answer it.
bool is_discourse_word(std::string_view norm) {
  static const std::set<std::string_view> kWords{
      "answer", "answers", "asking", "case", "depends", "either", "if", "interpretation",
      "mean", "meant", "means", "otherwise", "question", "referring", "refers", "then"};
  return kWords.count(norm) > 0;
}

std::vector<std::string_view> split_clauses(std::string_view text) {
  std::vector<std::string_view> clauses;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    if (end > start) clauses.push_back(text.substr(start, end - start));
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool boundary_after = i + 1 == text.size() ||
                                std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (c == ';' || ((c == '.' || c == ',') && boundary_after)) {
      emit(i);
      start = i + 1;
    } else if (std::isspace(static_cast<unsigned char>(c)) && i + 5 <= text.size() &&
               (text.compare(i, 5, " and ") == 0 || text.compare(i, 5, " AND ") == 0 ||
                text.compare(i, 5, " And ") == 0)) {
      emit(i);
      start = i + 4;
      i += 3;
    }
  }
  emit(text.size());
  return clauses;
}

// Best answer-like run inside one clause: segments between blocking words,
// trimmed of function words; most content words wins, ties to the later one.
std::optional<std::string> answer_span(std::string_view clause,
                                       const std::set<std::string>& interpretation_tokens) {
  const auto words = split_words(clause);
  auto blocks = [&](const Word& w) {
    return is_discourse_word(w.norm) || (is_content(w) && interpretation_tokens.count(w.norm));
  };
  std::optional<std::string> best;
  int best_content = 0;
  std::size_t i = 0;
  while (i < words.size()) {
    if (blocks(words[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < words.size() && !blocks(words[j])) ++j;
    std::size_t a = i;
    std::size_t b = j;
    while (a < b && !is_content(words[a])) ++a;
    while (b > a && !is_content(words[b - 1])) --b;
    int content = 0;
    for (std::size_t k = a; k < b; ++k) content += is_content(words[k]) ? 1 : 0;
    if (content > 0 && content >= best_content) {
      auto span = join_span(words, a, b);
      if (!span.empty()) {
        best = std::move(span);
        best_content = content;
      }
    }
    i = j;
  }
  return best;
}

std::string resolved_answer(const ConversationState& state, const KnowledgeEntry& entry) {
  std::set<std::string> response_words;
  for (const auto& exchange : state.history) {
    if (!exchange.response) continue;
    for (auto& w : content_words(*exchange.response)) response_words.insert(std::move(w));
  }
  const Resolution* best = nullptr;
  std::size_t best_overlap = 0;
  for (const auto& r : entry.resolutions) {
    const auto hint_words = content_words(r.hint);
    const std::set<std::string> hint(hint_words.begin(), hint_words.end());
    std::size_t overlap = 0;
    for (const auto& w : hint) overlap += response_words.count(w);
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = &r;
    }
  }
  return best ? best->answer : entry.direct_answer;
}

std::string format_margin(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

}  // namespace

std::optional<std::string> clarification_span(std::string_view clarification_question,
                                               std::string_view interpretation_text) {
  const auto words = split_words(clarification_question);
  const auto in_interp = token_set(interpretation_text);
  auto usable = [&](const Word& w) {
    return w.norm.empty() || (w.norm != "or" && in_interp.count(w.norm) > 0);
  };
  std::optional<std::string> best;
  std::size_t best_len = 0;
  std::size_t i = 0;
  while (i < words.size()) {
    if (!usable(words[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < words.size() && usable(words[j])) ++j;
    std::size_t a = i;
    std::size_t b = j;
    while (a < b && words[a].norm.empty() && join_span(words, a, a + 1).empty()) ++a;
    while (b > a && !is_content(words[b - 1])) --b;
    const bool has_content =
        std::any_of(words.begin() + static_cast<std::ptrdiff_t>(a),
                    words.begin() + static_cast<std::ptrdiff_t>(b), is_content);
    if (has_content && b - a > best_len) {
      best = join_span(words, a, b);
      best_len = b - a;
    }
    i = j;
  }
  return best;
}

std::optional<std::string> select_from_multi(std::string_view multi_answer,
                                             std::string_view interpretation_text) {
  const auto clauses = split_clauses(multi_answer);
  const auto interp_content = [&] {
    auto words = content_words(interpretation_text);
    return std::set<std::string>(words.begin(), words.end());
  }();

  struct Ranked {
    std::size_t overlap;
    std::size_t index;
  };
  std::vector<Ranked> ranked;
  for (std::size_t c = 0; c < clauses.size(); ++c) {
    auto words = content_words(clauses[c]);
    std::set<std::string> distinct(words.begin(), words.end());
    std::size_t overlap = 0;
    for (const auto& w : distinct) overlap += interp_content.count(w);
    if (overlap > 0) ranked.push_back({overlap, c});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.overlap > b.overlap; });
  for (const auto& r : ranked) {
    if (auto span = answer_span(clauses[r.index], interp_content)) return span;
  }
  return std::nullopt;
}

AgentAction scripted_user_act(const ConversationState& state, const ScriptedUserConfig& config) {
  AgentAction out;
  switch (state.phase) {
    case Phase::AwaitUserQuery:
      out.action = Action::Query;
      out.observation = state.query->query_text;
      return out;
    case Phase::AwaitUserClarResponse:
      out.action = Action::Respond;
      out.observation = clarification_span(state.pending_clarification(), state.interpretation().text)
                            .value_or("I do not know.");
      return out;
    case Phase::AwaitUserFinalize: {
      out.action = Action::Finalize;
      const std::string& r_ans = *state.last_assistant_answer;
      if (config.finalize_policy == FinalizePolicy::SelectFromMulti &&
          state.last_assistant_action == Action::MultiAns) {
        out.observation = select_from_multi(r_ans, state.interpretation().text).value_or(r_ans);
      } else {
        out.observation = r_ans;
      }
      return out;
    }
    case Phase::AwaitAssistant:
    case Phase::Terminal:
      break;
  }
  throw ProtocolError("scripted user asked to act in phase " + std::string(to_string(state.phase)));
}

std::string_view to_string(AssistantPolicy policy) {
  switch (policy) {
    case AssistantPolicy::AlwaysAnswer: return "ALWAYS_ANSWER";
    case AssistantPolicy::AlwaysMulti: return "ALWAYS_MULTI";
    case AssistantPolicy::ClarifyThenAnswer: return "ALWAYS_CLARIFY_THEN_ANSWER";
    case AssistantPolicy::ClarifyThenMulti: return "ALWAYS_CLARIFY_THEN_MULTI";
    case AssistantPolicy::RewardAware: return "REWARD_AWARE";
  }
  return "?";
}

double sequence_margin(const ActionSequence& sequence, const DecisionConstants& constants,
                       CostCoefficients coefficients) {
  int k = 0;
  bool multi = false;
  for (Action a : sequence.actions) {
    k += a == Action::Clarify ? 1 : 0;
    multi = multi || a == Action::MultiAns;
  }
  const double word_cost = coefficients.beta * constants.extra_words;
  const double clar_cost = coefficients.alpha * k;
  if (!multi) return k == 0 ? 0.0 : constants.delta_clar - clar_cost;
  if (k == 0) return constants.delta_multi - word_cost;
  return std::max(constants.delta_clar, constants.delta_multi) - clar_cost - word_cost;
}

ActionSequence reward_aware_plan(const ConversationState& state,
                                 const DecisionConstants& constants) {
  const auto& turns = state.turns;
  std::optional<ActionSequence> best;
  double best_margin = 0.0;
  for (auto& seq : enumerate_sequences(state.max_clarifications)) {
    if (seq.size() <= turns.size()) continue;
    bool extends = true;
    for (std::size_t t = 0; t < turns.size() && extends; ++t) {
      extends = seq.actions[t] == turns[t].action;
    }
    if (!extends) continue;
    const double m = sequence_margin(seq, constants, state.coefficients);
    if (!best || m > best_margin) {
      best_margin = m;
      best = std::move(seq);
    }
  }
  if (!best) throw ProtocolError("reward-aware policy: no protocol sequence extends the history");
  return *best;
}

AgentAction scripted_assistant_act(const ConversationState& state, AssistantPolicy policy,
                                   const KnowledgeTable& knowledge, bool emit_thought) {
  if (state.phase != Phase::AwaitAssistant) {
    throw ProtocolError("scripted assistant asked to act in phase " +
                        std::string(to_string(state.phase)));
  }
  const KnowledgeEntry* entry = knowledge.find(state.query->id);
  const bool can_clarify = allowed_actions(state).contains(Action::Clarify);
  const bool clarified = state.clarifications_used > 0;

  AgentAction out;
  switch (policy) {
    case AssistantPolicy::AlwaysAnswer:
      out.action = Action::Answer;
      break;
    case AssistantPolicy::AlwaysMulti:
      out.action = Action::MultiAns;
      break;
    case AssistantPolicy::ClarifyThenAnswer:
      out.action = (can_clarify && !clarified) ? Action::Clarify : Action::Answer;
      break;
    case AssistantPolicy::ClarifyThenMulti:
      out.action = (can_clarify && !clarified) ? Action::Clarify : Action::MultiAns;
      break;
    case AssistantPolicy::RewardAware: {
      DecisionConstants constants;
      if (entry) constants = {entry->delta_clar, entry->delta_multi, entry->extra_words};
      const auto plan = reward_aware_plan(state, constants);
      out.action = plan.actions[state.turns.size()];
      if (emit_thought) {
        out.thought = "Planned sequence " + plan.letters() + " with margin " +
                      format_margin(sequence_margin(plan, constants, state.coefficients)) +
                      " over answering directly.";
      }
      break;
    }
  }

  if (!entry) {
    out.observation = "unknown";
    return out;
  }
  switch (out.action) {
    case Action::Clarify:
      out.observation = entry->clarification_question;
      break;
    case Action::MultiAns:
      out.observation = entry->multi_answer;
      break;
    default:
      out.observation = clarified ? resolved_answer(state, *entry) : entry->direct_answer;
      break;
  }
  return out;
}

AgentAction ScriptedUser::act(const ConversationState& state, Role role,
                              const PromptBundle& /*prompt*/) const {
  if (role != Role::User) throw ProtocolError("scripted user backend asked to act as assistant");
  return scripted_user_act(state, config_);
}

std::string ScriptedUser::descriptor() const {
  return config_.finalize_policy == FinalizePolicy::CopyAssistant ? "scripted:copy"
                                                                  : "scripted:select";
}

ScriptedAssistant::ScriptedAssistant(AssistantPolicy policy,
                                     std::shared_ptr<const KnowledgeTable> knowledge)
    : policy_(policy), knowledge_(std::move(knowledge)) {
  if (!knowledge_) knowledge_ = std::make_shared<const KnowledgeTable>();
}

AgentAction ScriptedAssistant::act(const ConversationState& state, Role role,
                                   const PromptBundle& prompt) const {
  if (role != Role::Assistant) throw ProtocolError("scripted assistant backend asked to act as user");
  return scripted_assistant_act(state, policy_, *knowledge_,
                                prompt.template_id == template_ids::kAssistantCot);
}

std::string ScriptedAssistant::descriptor() const {
  switch (policy_) {
    case AssistantPolicy::AlwaysAnswer: return "scripted:answer";
    case AssistantPolicy::AlwaysMulti: return "scripted:multi";
    case AssistantPolicy::ClarifyThenAnswer: return "scripted:clarify_answer";
    case AssistantPolicy::ClarifyThenMulti: return "scripted:clarify_multi";
    case AssistantPolicy::RewardAware: return "scripted:reward_aware";
  }
  return "scripted:?";
}

std::optional<ScriptedUserConfig> scripted_user_from_name(std::string_view name) {
  if (name == "scripted:copy") return ScriptedUserConfig{FinalizePolicy::CopyAssistant};
  if (name == "scripted:select") return ScriptedUserConfig{FinalizePolicy::SelectFromMulti};
  return std::nullopt;
}

std::optional<AssistantPolicy> assistant_policy_from_name(std::string_view name) {
  if (name == "scripted:answer") return AssistantPolicy::AlwaysAnswer;
  if (name == "scripted:multi") return AssistantPolicy::AlwaysMulti;
  if (name == "scripted:clarify_answer") return AssistantPolicy::ClarifyThenAnswer;
  if (name == "scripted:clarify_multi") return AssistantPolicy::ClarifyThenMulti;
  if (name == "scripted:reward_aware") return AssistantPolicy::RewardAware;
  return std::nullopt;
}

}  // namespace groundplay
