#pragma once

// Parsing and formatting of the agent output line format
//
//   THOUGHT : <free text>            (optional, assistant only)
//   ACTION : **VERB** : <payload>
//
// Verbs follow the prompt vocabulary: ANSWER, MULTI_ANSWER, CLARIFY,
// ANSWER_CLARIFICATION. For the user role ANSWER means FINALIZE and
// ANSWER_CLARIFICATION means RESPOND.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "groundplay/core.hpp"

namespace groundplay {

enum class ParseErrorKind { NoAction, UnknownAction, Disallowed, EmptyObservation };

std::string_view to_string(ParseErrorKind kind);

class ParseError : public std::runtime_error {
public:
  ParseError(ParseErrorKind kind, std::string detail, std::string raw);

  ParseErrorKind kind() const { return kind_; }
  const std::string& raw() const { return raw_; }

private:
  ParseErrorKind kind_;
  std::string raw_;
};

struct AgentReply {
  std::optional<std::string> thought;
  Action action = Action::Answer;
  std::string observation;

  friend bool operator==(const AgentReply&, const AgentReply&) = default;
};

AgentReply parse_agent_output(std::string_view raw, Role role, ActionSet allowed);

// Verb used when writing an action in the canonical line format.
std::string_view canonical_verb(Action action);

// "ACTION : **VERB** : payload", preceded by "THOUGHT : ...\n" when a
// non-empty thought is given.
std::string format_agent_output(Action action, std::string_view payload,
                                const std::optional<std::string>& thought = std::nullopt);

}  // namespace groundplay
