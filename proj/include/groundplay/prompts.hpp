#pragma once

// Prompt templates and the builders that render them from conversation state.
//
// Templates use {NAME_VAR} placeholders. A template is split into literal
// and placeholder segments once at load time; rendering is a single pass, so
// substituted values are never re-scanned for placeholders.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "groundplay/core.hpp"

namespace groundplay {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace template_ids {
inline constexpr std::string_view kAssistantPlain = "assistant_plain";
inline constexpr std::string_view kAssistantCot = "assistant_cot";
inline constexpr std::string_view kUserQuery = "user_query";
inline constexpr std::string_view kUserClarification = "user_clarification";
inline constexpr std::string_view kUserFinalize = "user_finalize";
inline constexpr std::string_view kAmbiguityFilter = "ambiguity_filter";
}  // namespace template_ids

class PromptTemplate {
public:
  PromptTemplate() = default;
  PromptTemplate(std::string id, std::string_view text);

  const std::string& id() const { return id_; }
  const std::vector<std::string>& placeholders() const { return placeholders_; }

  // Throws ConfigError if a placeholder has no value.
  std::string render(const std::map<std::string, std::string>& values) const;

private:
  struct Segment {
    bool placeholder = false;
    std::string text;
  };
  std::string id_;
  std::vector<Segment> segments_;
  std::vector<std::string> placeholders_;
  std::size_t literal_size_ = 0;
};

class TemplateStore {
public:
  // Templates compiled into the library.
  static const TemplateStore& builtin();
  // Reads <id>.txt for every required template id; throws ConfigError when a
  // file is missing.
  static TemplateStore load_directory(const std::filesystem::path& dir);

  const PromptTemplate& get(std::string_view id) const;
  bool contains(std::string_view id) const;
  void add(std::string id, std::string_view text);

private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

struct PromptBundle {
  std::string template_id;
  std::string rendered;
  std::map<std::string, std::string> variables;
};

enum class UserPromptPurpose { Query, ClarificationResponse, Finalize };

// "10.0", "0.1", "2.0", "0.25".
std::string format_coefficient(double value);
// "{'CLARIFY', 'MULTI_ANSWER', 'ANSWER'}" in that order, restricted to the set.
std::string format_allowed_actions(ActionSet allowed);
// Alternating CLARIFICATION QUESTION / ANSWER TO CLARIFICATION lines.
std::string format_history(const std::vector<ClarificationExchange>& history);

PromptBundle build_assistant_prompt(const TemplateStore& templates,
                                    const ConversationState& state, bool use_thoughts);
PromptBundle build_user_prompt(const TemplateStore& templates, const ConversationState& state,
                               UserPromptPurpose purpose);

}  // namespace groundplay
