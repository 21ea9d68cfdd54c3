#include "groundplay/parse.hpp"

#include <cctype>

namespace groundplay {

namespace {

bool is_blank(char c) { return c == ' ' || c == '\t'; }

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

struct ActionMatch {
  std::size_t begin = 0;     // start of "ACTION"
  std::string verb;          // upper-cased, escapes removed
  std::size_t payload = 0;   // start of payload
};

// Matches  ACTION <ws> : <ws> *+ <ws> VERB <ws> *+ <ws> [: <ws>]  at position p.
std::optional<ActionMatch> match_action(std::string_view text, std::size_t p) {
  constexpr std::string_view kKeyword = "ACTION";
  if (text.compare(p, kKeyword.size(), kKeyword) != 0) return std::nullopt;
  std::size_t i = p + kKeyword.size();
  auto skip_blanks = [&] {
    while (i < text.size() && is_blank(text[i])) ++i;
  };
  skip_blanks();
  if (i >= text.size() || text[i] != ':') return std::nullopt;
  ++i;
  skip_blanks();
  if (i >= text.size() || text[i] != '*') return std::nullopt;
  while (i < text.size() && text[i] == '*') ++i;
  skip_blanks();
  ActionMatch m;
  m.begin = p;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      m.verb.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    } else if (c != '\\') {
      break;
    }
    ++i;
  }
  if (m.verb.empty()) return std::nullopt;
  skip_blanks();
  if (i >= text.size() || text[i] != '*') return std::nullopt;
  while (i < text.size() && text[i] == '*') ++i;
  skip_blanks();
  if (i < text.size() && text[i] == ':') ++i;
  m.payload = i;
  return m;
}

std::optional<Action> verb_to_action(std::string_view verb, Role role) {
  if (verb == "ANSWER" || verb == "FINALIZE") {
    if (role == Role::User) return Action::Finalize;
    return verb == "ANSWER" ? Action::Answer : Action::Finalize;
  }
  if (verb == "MULTI_ANSWER" || verb == "MULTI_ANS") return Action::MultiAns;
  if (verb == "CLARIFY") return Action::Clarify;
  if (verb == "ANSWER_CLARIFICATION" || verb == "RESPOND") return Action::Respond;
  if (verb == "QUERY") return Action::Query;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::NoAction: return "NoAction";
    case ParseErrorKind::UnknownAction: return "UnknownAction";
    case ParseErrorKind::Disallowed: return "Disallowed";
    case ParseErrorKind::EmptyObservation: return "EmptyObservation";
  }
  return "?";
}

ParseError::ParseError(ParseErrorKind kind, std::string detail, std::string raw)
    : std::runtime_error("ParseError(" + std::string(to_string(kind)) + "): " + detail),
      kind_(kind),
      raw_(std::move(raw)) {}

AgentReply parse_agent_output(std::string_view raw, Role role, ActionSet allowed) {
  std::optional<ActionMatch> match;
  for (std::size_t p = raw.rfind("ACTION"); p != std::string_view::npos;
       p = p == 0 ? std::string_view::npos : raw.rfind("ACTION", p - 1)) {
    if ((match = match_action(raw, p))) break;
  }
  if (!match) {
    throw ParseError(ParseErrorKind::NoAction, "no 'ACTION : **X** :' line found",
                     std::string(raw));
  }

  const auto action = verb_to_action(match->verb, role);
  if (!action) {
    throw ParseError(ParseErrorKind::UnknownAction, "unknown action verb '" + match->verb + "'",
                     std::string(raw));
  }
  if (!allowed.contains(*action) || agent_of(*action) != role) {
    throw ParseError(ParseErrorKind::Disallowed,
                     "action " + std::string(to_string(*action)) + " is not allowed here",
                     std::string(raw));
  }

  std::string_view rest = raw.substr(match->payload);
  rest = rest.substr(0, rest.find('\n'));
  const auto payload = trim(rest);
  if (payload.empty()) {
    throw ParseError(ParseErrorKind::EmptyObservation, "empty payload", std::string(raw));
  }

  AgentReply reply;
  reply.action = *action;
  reply.observation = std::string(payload);

  if (role == Role::Assistant) {
    const std::string_view head = raw.substr(0, match->begin);
    constexpr std::string_view kThought = "THOUGHT";
    for (std::size_t p = head.find(kThought); p != std::string_view::npos;
         p = head.find(kThought, p + 1)) {
      std::size_t i = p + kThought.size();
      while (i < head.size() && is_blank(head[i])) ++i;
      if (i < head.size() && head[i] == ':') {
        const auto thought = trim(head.substr(i + 1));
        if (!thought.empty()) reply.thought = std::string(thought);
        break;
      }
    }
  }
  return reply;
}

std::string_view canonical_verb(Action action) {
  switch (action) {
    case Action::Query: return "QUERY";
    case Action::Clarify: return "CLARIFY";
    case Action::Respond: return "ANSWER_CLARIFICATION";
    case Action::Answer: return "ANSWER";
    case Action::MultiAns: return "MULTI_ANSWER";
    case Action::Finalize: return "ANSWER";
  }
  return "ANSWER";
}

std::string format_agent_output(Action action, std::string_view payload,
                                const std::optional<std::string>& thought) {
  std::string out;
  if (thought && !thought->empty()) {
    out += "THOUGHT : ";
    out += *thought;
    out += '\n';
  }
  out += "ACTION : **";
  out += canonical_verb(action);
  out += "** : ";
  out += payload;
  return out;
}

}  // namespace groundplay
