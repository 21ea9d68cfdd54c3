#pragma once

// Domain types and the conversation protocol state machine.
//
// A conversation alternates between the user simulator and the assistant:
//
//   QUERY, (CLARIFY, RESPOND)*, (ANSWER | MULTI_ANS), FINALIZE
//
// with the number of CLARIFY/RESPOND rounds capped by max_clarifications.
// All state is held in value types; advance() consumes a state and returns
// the successor, so callers that move the state in pay no copies.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace groundplay {

enum class Action : std::uint8_t { Query, Clarify, Respond, Answer, MultiAns, Finalize };
enum class Role : std::uint8_t { User, Assistant };

inline constexpr std::size_t kActionCount = 6;

std::string_view to_string(Action action);
std::string_view to_string(Role role);
// Single letter used in compact sequence renderings (Q, C, R, A, M, F).
char action_letter(Action action);
std::optional<Action> action_from_string(std::string_view name);
std::optional<Role> role_from_string(std::string_view name);
Role agent_of(Action action);

// Small fixed-size set of actions.
class ActionSet {
public:
  constexpr ActionSet() = default;
  constexpr ActionSet(std::initializer_list<Action> actions) {
    for (Action a : actions) insert(a);
  }

  constexpr void insert(Action a) { bits_ |= bit(a); }
  constexpr void erase(Action a) { bits_ &= static_cast<std::uint8_t>(~bit(a)); }
  constexpr bool contains(Action a) const { return (bits_ & bit(a)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  std::size_t size() const;
  std::vector<Action> to_vector() const;

  friend constexpr bool operator==(ActionSet, ActionSet) = default;

private:
  static constexpr std::uint8_t bit(Action a) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(a));
  }
  std::uint8_t bits_ = 0;
};

class ProtocolError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Interpretation {
  std::string text;
  std::vector<std::string> gold_answers;
};

struct QueryExample {
  std::string id;
  std::string query_text;
  std::optional<std::string> context;
  std::vector<Interpretation> interpretations;
  bool ambiguous = false;
  std::optional<std::vector<double>> weights;

  // P_q(j); uniform when no weights are given.
  double weight(std::size_t index) const;
};

struct ExampleIssues {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

ExampleIssues check_query_example(const QueryExample& example);

struct CostCoefficients {
  double alpha = 0.0;
  double beta = 0.0;

  // Throws std::invalid_argument unless both are finite and non-negative.
  static CostCoefficients checked(double alpha, double beta);

  friend bool operator==(const CostCoefficients&, const CostCoefficients&) = default;
};

// Strict weak order on exact values, for use as a map key.
struct CoefficientsLess {
  bool operator()(const CostCoefficients& a, const CostCoefficients& b) const {
    if (a.alpha != b.alpha) return a.alpha < b.alpha;
    return a.beta < b.beta;
  }
};

struct Turn {
  Role role = Role::User;
  std::string prompt;
  std::optional<std::string> thought;
  Action action = Action::Query;
  std::string observation;
};

struct ClarificationExchange {
  std::string question;
  std::optional<std::string> response;
};

enum class Phase : std::uint8_t {
  AwaitUserQuery,
  AwaitAssistant,
  AwaitUserClarResponse,
  AwaitUserFinalize,
  Terminal,
};

std::string_view to_string(Phase phase);

struct ConversationState {
  std::shared_ptr<const QueryExample> query;
  std::size_t interpretation_index = 0;
  CostCoefficients coefficients;
  std::vector<ClarificationExchange> history;
  Phase phase = Phase::AwaitUserQuery;
  int clarifications_used = 0;
  int max_clarifications = 1;
  std::optional<std::string> last_assistant_answer;
  std::optional<Action> last_assistant_action;
  std::optional<std::string> final_answer;
  std::vector<Turn> turns;

  const Interpretation& interpretation() const;
  // The clarification question awaiting a response; throws ProtocolError otherwise.
  const std::string& pending_clarification() const;
};

ConversationState start_conversation(std::shared_ptr<const QueryExample> query,
                                     std::size_t interpretation_index,
                                     CostCoefficients coefficients,
                                     int max_clarifications);

ActionSet allowed_actions(const ConversationState& state);

// Reason the move would be rejected by advance(), or nullopt if it is legal.
std::optional<std::string> move_error(const ConversationState& state, Role role, Action action,
                                      const std::string& observation,
                                      const std::optional<std::string>& thought);

// Throws ProtocolError for an illegal move.
ConversationState advance(ConversationState state, Role role, Action action,
                          std::string observation,
                          std::optional<std::string> thought = std::nullopt,
                          std::string prompt = {});

// Written by the scoring module.
struct RewardBreakdown {
  double accuracy = 0.0;
  int n_clarifications = 0;
  int answer_words = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double total = 0.0;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

enum class VerdictReason : std::uint8_t {
  Ok,
  LowF1,
  UserIgnoredAssistant,
  ParseFailure,
  ProtocolViolation,
};

std::string_view to_string(VerdictReason reason);
std::optional<VerdictReason> verdict_reason_from_string(std::string_view name);

struct ValidityVerdict {
  bool valid = true;
  VerdictReason reason = VerdictReason::Ok;

  static ValidityVerdict ok() { return {true, VerdictReason::Ok}; }
  static ValidityVerdict invalid(VerdictReason r) { return {false, r}; }
  friend bool operator==(const ValidityVerdict&, const ValidityVerdict&) = default;
};

struct Rollout {
  std::string rollout_id;
  std::string query_id;
  std::size_t interpretation_index = 0;
  CostCoefficients coefficients;
  std::vector<Turn> turns;
  std::string final_answer;
  std::optional<RewardBreakdown> reward;
  std::optional<ValidityVerdict> validity;

  bool terminal() const { return !turns.empty() && turns.back().action == Action::Finalize; }
  bool is_valid() const { return validity && validity->valid; }
};

// Snapshot of a conversation (terminal or not) as a rollout record.
Rollout make_rollout(const ConversationState& state, std::string rollout_id);
Rollout make_rollout(ConversationState&& state, std::string rollout_id);

struct ActionSequence {
  std::vector<Action> actions;

  std::size_t size() const { return actions.size(); }
  // Compact letters, e.g. "QCRMF".
  std::string letters() const;

  friend bool operator==(const ActionSequence&, const ActionSequence&) = default;
};

// Canonical order: fewer actions first, then lexicographic on the action
// enumeration (so ANSWER sorts before MULTI_ANS).
bool operator<(const ActionSequence& a, const ActionSequence& b);

ActionSequence parse_letters(std::string_view letters);

ActionSequence coarsen(const Rollout& rollout);
bool is_compatible(const Rollout& rollout, const ActionSequence& sequence);
std::vector<ActionSequence> enumerate_sequences(int max_clarifications);

// True iff the sequence belongs to the protocol language with the given cap.
bool in_protocol_language(const ActionSequence& sequence, int max_clarifications);

// Structural checks for a stored rollout. Complete rollouts must be a full
// protocol string; fault-marked rollouts must be a legal prefix. Throws
// ProtocolError describing the first violation.
void check_rollout_structure(const Rollout& rollout, int max_clarifications);

}  // namespace groundplay
