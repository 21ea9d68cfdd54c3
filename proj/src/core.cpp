#include "groundplay/core.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <utility>

namespace groundplay {

namespace {

constexpr std::array<std::string_view, kActionCount> kActionNames{
    "QUERY", "CLARIFY", "RESPOND", "ANSWER", "MULTI_ANS", "FINALIZE"};
constexpr std::array<char, kActionCount> kActionLetters{'Q', 'C', 'R', 'A', 'M', 'F'};

std::string protocol_violation(Phase phase, Role role, Action action) {
  std::ostringstream out;
  out << "protocol violation: " << to_string(role) << " cannot perform "
      << to_string(action) << " in phase " << to_string(phase);
  return out.str();
}

}  // namespace

std::string_view to_string(Action action) {
  return kActionNames[static_cast<std::size_t>(action)];
}

std::string_view to_string(Role role) { return role == Role::User ? "USER" : "ASSISTANT"; }

char action_letter(Action action) { return kActionLetters[static_cast<std::size_t>(action)]; }

std::optional<Action> action_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kActionCount; ++i) {
    if (kActionNames[i] == name) return static_cast<Action>(i);
  }
  return std::nullopt;
}

std::optional<Role> role_from_string(std::string_view name) {
  if (name == "USER") return Role::User;
  if (name == "ASSISTANT") return Role::Assistant;
  return std::nullopt;
}

Role agent_of(Action action) {
  switch (action) {
    case Action::Query:
    case Action::Respond:
    case Action::Finalize:
      return Role::User;
    case Action::Clarify:
    case Action::Answer:
    case Action::MultiAns:
      return Role::Assistant;
  }
  return Role::User;
}

std::size_t ActionSet::size() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kActionCount; ++i) n += contains(static_cast<Action>(i)) ? 1 : 0;
  return n;
}

std::vector<Action> ActionSet::to_vector() const {
  std::vector<Action> out;
  for (std::size_t i = 0; i < kActionCount; ++i) {
    if (contains(static_cast<Action>(i))) out.push_back(static_cast<Action>(i));
  }
  return out;
}

double QueryExample::weight(std::size_t index) const {
  if (weights && index < weights->size()) return (*weights)[index];
  return interpretations.empty() ? 0.0 : 1.0 / static_cast<double>(interpretations.size());
}

ExampleIssues check_query_example(const QueryExample& example) {
  ExampleIssues issues;
  const std::string who = "query '" + example.id + "'";
  if (example.id.empty()) issues.errors.push_back("query with empty id");
  if (example.query_text.empty()) issues.errors.push_back(who + ": empty query_text");
  if (example.interpretations.empty()) {
    issues.errors.push_back(who + ": no interpretations");
  }
  for (std::size_t j = 0; j < example.interpretations.size(); ++j) {
    const auto& interp = example.interpretations[j];
    const std::string where = who + " interpretation " + std::to_string(j);
    if (interp.text.empty()) issues.errors.push_back(where + ": empty text");
    if (interp.gold_answers.empty()) issues.errors.push_back(where + ": no gold answers");
    for (const auto& gold : interp.gold_answers) {
      if (gold.find_first_not_of(" \t\r\n\f\v") == std::string::npos) {
        issues.errors.push_back(where + ": blank gold answer");
      }
    }
  }
  if (example.weights) {
    const auto& w = *example.weights;
    if (w.size() != example.interpretations.size()) {
      issues.errors.push_back(who + ": weights length " + std::to_string(w.size()) +
                              " != interpretations " +
                              std::to_string(example.interpretations.size()));
    }
    double sum = 0.0;
    bool negative = false;
    for (double p : w) {
      if (!(p >= 0.0) || !std::isfinite(p)) negative = true;
      sum += p;
    }
    if (negative) issues.errors.push_back(who + ": negative or non-finite weight");
    if (std::abs(sum - 1.0) > 1e-9) {
      std::ostringstream msg;
      msg << who << ": weights sum to " << sum << ", expected 1";
      issues.errors.push_back(msg.str());
    }
  }
  if (example.ambiguous && example.interpretations.size() < 2) {
    issues.warnings.push_back(who + ": marked ambiguous but has fewer than 2 interpretations");
  }
  return issues;
}

CostCoefficients CostCoefficients::checked(double alpha, double beta) {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0) {
    std::ostringstream msg;
    msg << "cost coefficients must be finite and non-negative (alpha=" << alpha
        << ", beta=" << beta << ")";
    throw std::invalid_argument(msg.str());
  }
  return {alpha, beta};
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::AwaitUserQuery: return "AwaitUserQuery";
    case Phase::AwaitAssistant: return "AwaitAssistant";
    case Phase::AwaitUserClarResponse: return "AwaitUserClarResponse";
    case Phase::AwaitUserFinalize: return "AwaitUserFinalize";
    case Phase::Terminal: return "Terminal";
  }
  return "?";
}

const Interpretation& ConversationState::interpretation() const {
  return query->interpretations.at(interpretation_index);
}

const std::string& ConversationState::pending_clarification() const {
  if (phase != Phase::AwaitUserClarResponse || history.empty() || history.back().response) {
    throw ProtocolError("no pending clarification question in phase " +
                        std::string(to_string(phase)));
  }
  return history.back().question;
}

ConversationState start_conversation(std::shared_ptr<const QueryExample> query,
                                     std::size_t interpretation_index,
                                     CostCoefficients coefficients,
                                     int max_clarifications) {
  if (!query) throw std::invalid_argument("start_conversation: null query");
  if (interpretation_index >= query->interpretations.size()) {
    throw std::out_of_range("interpretation index " + std::to_string(interpretation_index) +
                            " out of range for query '" + query->id + "'");
  }
  if (max_clarifications < 0) throw std::invalid_argument("max_clarifications must be >= 0");
  ConversationState state;
  state.query = std::move(query);
  state.interpretation_index = interpretation_index;
  state.coefficients = CostCoefficients::checked(coefficients.alpha, coefficients.beta);
  state.max_clarifications = max_clarifications;
  return state;
}

ActionSet allowed_actions(const ConversationState& state) {
  switch (state.phase) {
    case Phase::AwaitUserQuery:
      return {Action::Query};
    case Phase::AwaitAssistant: {
      ActionSet set{Action::Answer, Action::MultiAns};
      if (state.clarifications_used < state.max_clarifications) set.insert(Action::Clarify);
      return set;
    }
    case Phase::AwaitUserClarResponse:
      return {Action::Respond};
    case Phase::AwaitUserFinalize:
      return {Action::Finalize};
    case Phase::Terminal:
      break;
  }
  throw ProtocolError("protocol violation: no actions are allowed in phase Terminal");
}

std::optional<std::string> move_error(const ConversationState& state, Role role, Action action,
                                      const std::string& observation,
                                      const std::optional<std::string>& thought) {
  if (state.phase == Phase::Terminal || agent_of(action) != role ||
      !allowed_actions(state).contains(action)) {
    return protocol_violation(state.phase, role, action);
  }
  if (observation.empty()) {
    return "protocol violation: empty observation for " + std::string(to_string(action));
  }
  if (thought && !thought->empty() && role != Role::Assistant) {
    return std::string("protocol violation: thoughts are only allowed on assistant turns");
  }
  return std::nullopt;
}

ConversationState advance(ConversationState state, Role role, Action action,
                          std::string observation, std::optional<std::string> thought,
                          std::string prompt) {
  if (auto error = move_error(state, role, action, observation, thought)) {
    throw ProtocolError(*error);
  }

  switch (action) {
    case Action::Query:
      state.phase = Phase::AwaitAssistant;
      break;
    case Action::Clarify:
      state.history.push_back({observation, std::nullopt});
      ++state.clarifications_used;
      state.phase = Phase::AwaitUserClarResponse;
      break;
    case Action::Respond:
      state.history.back().response = observation;
      state.phase = Phase::AwaitAssistant;
      break;
    case Action::Answer:
    case Action::MultiAns:
      state.last_assistant_answer = observation;
      state.last_assistant_action = action;
      state.phase = Phase::AwaitUserFinalize;
      break;
    case Action::Finalize:
      state.final_answer = observation;
      state.phase = Phase::Terminal;
      break;
  }

  if (thought && thought->empty()) thought.reset();
  state.turns.push_back(Turn{role, std::move(prompt), std::move(thought), action,
                             std::move(observation)});
  return state;
}

Rollout make_rollout(const ConversationState& state, std::string rollout_id) {
  Rollout r;
  r.rollout_id = std::move(rollout_id);
  r.query_id = state.query ? state.query->id : std::string{};
  r.interpretation_index = state.interpretation_index;
  r.coefficients = state.coefficients;
  r.turns = state.turns;
  r.final_answer = state.final_answer.value_or(std::string{});
  return r;
}

Rollout make_rollout(ConversationState&& state, std::string rollout_id) {
  Rollout r;
  r.rollout_id = std::move(rollout_id);
  r.query_id = state.query ? state.query->id : std::string{};
  r.interpretation_index = state.interpretation_index;
  r.coefficients = state.coefficients;
  r.turns = std::move(state.turns);
  r.final_answer = std::move(state.final_answer).value_or(std::string{});
  return r;
}

namespace {
constexpr std::array<std::string_view, 5> kReasonNames{
    "OK", "LowF1", "UserIgnoredAssistant", "ParseFailure", "ProtocolViolation"};
}  // namespace

std::string_view to_string(VerdictReason reason) {
  return kReasonNames[static_cast<std::size_t>(reason)];
}

std::optional<VerdictReason> verdict_reason_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kReasonNames.size(); ++i) {
    if (kReasonNames[i] == name) return static_cast<VerdictReason>(i);
  }
  return std::nullopt;
}

std::string ActionSequence::letters() const {
  std::string out;
  out.reserve(actions.size());
  for (Action a : actions) out.push_back(action_letter(a));
  return out;
}

bool operator<(const ActionSequence& a, const ActionSequence& b) {
  if (a.actions.size() != b.actions.size()) return a.actions.size() < b.actions.size();
  return a.actions < b.actions;
}

ActionSequence parse_letters(std::string_view letters) {
  ActionSequence seq;
  for (char c : letters) {
    bool found = false;
    for (std::size_t i = 0; i < kActionCount; ++i) {
      if (kActionLetters[i] == c) {
        seq.actions.push_back(static_cast<Action>(i));
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument(std::string("unknown action letter '") + c + "'");
  }
  return seq;
}

ActionSequence coarsen(const Rollout& rollout) {
  ActionSequence seq;
  seq.actions.reserve(rollout.turns.size());
  for (const auto& turn : rollout.turns) seq.actions.push_back(turn.action);
  return seq;
}

bool is_compatible(const Rollout& rollout, const ActionSequence& sequence) {
  if (rollout.turns.size() != sequence.actions.size()) return false;
  for (std::size_t t = 0; t < rollout.turns.size(); ++t) {
    if (rollout.turns[t].action != sequence.actions[t]) return false;
  }
  return true;
}

std::vector<ActionSequence> enumerate_sequences(int max_clarifications) {
  if (max_clarifications < 0) throw std::invalid_argument("max_clarifications must be >= 0");
  std::vector<ActionSequence> out;
  for (int k = 0; k <= max_clarifications; ++k) {
    for (Action last : {Action::Answer, Action::MultiAns}) {
      ActionSequence seq;
      seq.actions.push_back(Action::Query);
      for (int i = 0; i < k; ++i) {
        seq.actions.push_back(Action::Clarify);
        seq.actions.push_back(Action::Respond);
      }
      seq.actions.push_back(last);
      seq.actions.push_back(Action::Finalize);
      out.push_back(std::move(seq));
    }
  }
  return out;
}

namespace {

// Walks the protocol automaton; returns the number of actions consumed before
// the first illegal one, and whether the walk ended in the final state.
std::pair<std::size_t, bool> walk_protocol(const std::vector<Action>& actions,
                                           int max_clarifications) {
  Phase phase = Phase::AwaitUserQuery;
  int clarifications = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Action a = actions[i];
    switch (phase) {
      case Phase::AwaitUserQuery:
        if (a != Action::Query) return {i, false};
        phase = Phase::AwaitAssistant;
        break;
      case Phase::AwaitAssistant:
        if (a == Action::Clarify && clarifications < max_clarifications) {
          ++clarifications;
          phase = Phase::AwaitUserClarResponse;
        } else if (a == Action::Answer || a == Action::MultiAns) {
          phase = Phase::AwaitUserFinalize;
        } else {
          return {i, false};
        }
        break;
      case Phase::AwaitUserClarResponse:
        if (a != Action::Respond) return {i, false};
        phase = Phase::AwaitAssistant;
        break;
      case Phase::AwaitUserFinalize:
        if (a != Action::Finalize) return {i, false};
        phase = Phase::Terminal;
        break;
      case Phase::Terminal:
        return {i, false};
    }
  }
  return {actions.size(), phase == Phase::Terminal};
}

}  // namespace

bool in_protocol_language(const ActionSequence& sequence, int max_clarifications) {
  auto [consumed, terminal] = walk_protocol(sequence.actions, max_clarifications);
  return consumed == sequence.actions.size() && terminal;
}

void check_rollout_structure(const Rollout& rollout, int max_clarifications) {
  const std::string who = "rollout '" + rollout.rollout_id + "'";
  const bool faulted = rollout.validity && !rollout.validity->valid &&
                       (rollout.validity->reason == VerdictReason::ParseFailure ||
                        rollout.validity->reason == VerdictReason::ProtocolViolation);
  const ActionSequence seq = coarsen(rollout);
  auto [consumed, terminal] = walk_protocol(seq.actions, max_clarifications);
  if (consumed != seq.actions.size()) {
    throw ProtocolError(who + ": illegal action sequence " + seq.letters());
  }
  for (std::size_t t = 0; t < rollout.turns.size(); ++t) {
    const Turn& turn = rollout.turns[t];
    const Role expected = (t % 2 == 0) ? Role::User : Role::Assistant;
    if (turn.role != expected || agent_of(turn.action) != turn.role) {
      throw ProtocolError(who + ": turn " + std::to_string(t) + " has wrong role");
    }
    if (turn.observation.empty()) {
      throw ProtocolError(who + ": turn " + std::to_string(t) + " has empty observation");
    }
    if (turn.thought && turn.role != Role::Assistant) {
      throw ProtocolError(who + ": thought on a user turn");
    }
  }
  if (faulted) return;
  if (!terminal) throw ProtocolError(who + ": incomplete action sequence " + seq.letters());
  if (rollout.final_answer != rollout.turns.back().observation) {
    throw ProtocolError(who + ": final_answer differs from the last observation");
  }
}

}  // namespace groundplay
