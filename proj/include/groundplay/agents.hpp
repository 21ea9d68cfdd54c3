#pragma once

// Agent backends. A backend maps (conversation state, role, rendered prompt)
// to one action. Scripted backends are pure functions of their inputs and
// may be shared across threads.

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "groundplay/core.hpp"
#include "groundplay/knowledge.hpp"
#include "groundplay/prompts.hpp"

namespace groundplay {

struct AgentAction {
  std::optional<std::string> thought;
  Action action = Action::Answer;
  std::string observation;
  int attempts = 1;
};

// The backend could not produce a parseable action within its retry budget.
// The engine records the rollout as invalid (ParseFailure).
class RecoverableFailure : public std::runtime_error {
public:
  RecoverableFailure(const std::string& what, int attempts)
      : std::runtime_error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

private:
  int attempts_;
};

// Unrecoverable backend condition (bad credentials, rejected request).
class BackendError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class AgentBackend {
public:
  virtual ~AgentBackend() = default;
  virtual AgentAction act(const ConversationState& state, Role role,
                          const PromptBundle& prompt) const = 0;
  virtual std::string descriptor() const = 0;
};

enum class FinalizePolicy { CopyAssistant, SelectFromMulti };

struct ScriptedUserConfig {
  FinalizePolicy finalize_policy = FinalizePolicy::SelectFromMulti;
};

// QUERY emits q; RESPOND emits the longest span of q_clar whose words all
// occur in the interpretation; FINALIZE copies r_ans or extracts the answer
// span of the clause that best matches the interpretation.
AgentAction scripted_user_act(const ConversationState& state, const ScriptedUserConfig& config);

// Span-level helpers, exposed for testing.
std::optional<std::string> clarification_span(std::string_view clarification_question,
                                               std::string_view interpretation_text);
std::optional<std::string> select_from_multi(std::string_view multi_answer,
                                             std::string_view interpretation_text);

enum class AssistantPolicy {
  AlwaysAnswer,
  AlwaysMulti,
  ClarifyThenAnswer,
  ClarifyThenMulti,
  RewardAware,
};

std::string_view to_string(AssistantPolicy policy);

// Decision-rule value of a complete sequence relative to answering directly:
//   [Q,A,F]       0
//   [Q,M,F]       delta_multi - beta * extra_words
//   [Q,(C,R)^k,A,F]  delta_clar - alpha * k
//   [Q,(C,R)^k,M,F]  max(delta_clar, delta_multi) - alpha * k - beta * extra_words
double sequence_margin(const ActionSequence& sequence, const DecisionConstants& constants,
                       CostCoefficients coefficients);

// Argmax of sequence_margin over the protocol sequences extending the
// conversation so far; ties go to the canonically smaller sequence.
ActionSequence reward_aware_plan(const ConversationState& state,
                                 const DecisionConstants& constants);

AgentAction scripted_assistant_act(const ConversationState& state, AssistantPolicy policy,
                                   const KnowledgeTable& knowledge, bool emit_thought = false);

class ScriptedUser final : public AgentBackend {
public:
  explicit ScriptedUser(ScriptedUserConfig config = {}) : config_(config) {}
  AgentAction act(const ConversationState& state, Role role,
                  const PromptBundle& prompt) const override;
  std::string descriptor() const override;

private:
  ScriptedUserConfig config_;
};

class ScriptedAssistant final : public AgentBackend {
public:
  ScriptedAssistant(AssistantPolicy policy, std::shared_ptr<const KnowledgeTable> knowledge);
  AgentAction act(const ConversationState& state, Role role,
                  const PromptBundle& prompt) const override;
  std::string descriptor() const override;

private:
  AssistantPolicy policy_;
  std::shared_ptr<const KnowledgeTable> knowledge_;
};

// "scripted:copy" / "scripted:select".
std::optional<ScriptedUserConfig> scripted_user_from_name(std::string_view name);
// "scripted:answer", "scripted:multi", "scripted:clarify_answer",
// "scripted:clarify_multi", "scripted:reward_aware".
std::optional<AssistantPolicy> assistant_policy_from_name(std::string_view name);

}  // namespace groundplay
