#include "groundplay/prompts.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "groundplay/embedded_templates.hpp"

namespace groundplay {

namespace {

bool is_placeholder_char(char c, bool first) {
  if (c >= 'A' && c <= 'Z') return true;
  return !first && ((c >= '0' && c <= '9') || c == '_');
}

constexpr std::string_view kRequiredTemplates[] = {
    template_ids::kAssistantPlain, template_ids::kAssistantCot, template_ids::kUserQuery,
    template_ids::kUserClarification, template_ids::kUserFinalize};

std::string strip_one_trailing_newline(std::string_view text) {
  if (!text.empty() && text.back() == '\n') text.remove_suffix(1);
  return std::string(text);
}

}  // namespace

PromptTemplate::PromptTemplate(std::string id, std::string_view text) : id_(std::move(id)) {
  std::string literal;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && is_placeholder_char(text[j], j == i + 1)) ++j;
      if (j < text.size() && j > i + 1 && text[j] == '}') {
        if (!literal.empty()) {
          literal_size_ += literal.size();
          segments_.push_back({false, std::move(literal)});
          literal.clear();
        }
        std::string name(text.substr(i + 1, j - i - 1));
        placeholders_.push_back(name);
        segments_.push_back({true, std::move(name)});
        i = j + 1;
        continue;
      }
    }
    literal.push_back(text[i]);
    ++i;
  }
  if (!literal.empty()) {
    literal_size_ += literal.size();
    segments_.push_back({false, std::move(literal)});
  }
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  out.reserve(literal_size_ + 256);
  for (const auto& seg : segments_) {
    if (!seg.placeholder) {
      out += seg.text;
      continue;
    }
    auto it = values.find(seg.text);
    if (it == values.end()) {
      throw ConfigError("template '" + id_ + "': no value for placeholder {" + seg.text + "}");
    }
    out += it->second;
  }
  return out;
}

const TemplateStore& TemplateStore::builtin() {
  static const TemplateStore store = [] {
    TemplateStore s;
    for (const auto& [id, text] : embedded::all_templates) s.add(std::string(id), text);
    return s;
  }();
  return store;
}

TemplateStore TemplateStore::load_directory(const std::filesystem::path& dir) {
  TemplateStore s;
  auto read = [&](std::string_view id, bool required) {
    const auto path = dir / (std::string(id) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      if (required) throw ConfigError("missing prompt template file " + path.string());
      return;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    s.add(std::string(id), buf.str());
  };
  for (auto id : kRequiredTemplates) read(id, true);
  read(template_ids::kAmbiguityFilter, false);
  return s;
}

const PromptTemplate& TemplateStore::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw ConfigError("unknown prompt template '" + std::string(id) + "'");
  return it->second;
}

bool TemplateStore::contains(std::string_view id) const {
  return templates_.find(id) != templates_.end();
}

void TemplateStore::add(std::string id, std::string_view text) {
  PromptTemplate t(id, strip_one_trailing_newline(text));
  templates_.insert_or_assign(std::move(id), std::move(t));
}

std::string format_coefficient(double value) {
  char buf[64];
  if (std::isfinite(value) && value == std::floor(value) && std::abs(value) < 1e15) {
    auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, 1);
    return std::string(buf, res.ptr);
  }
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_allowed_actions(ActionSet allowed) {
  std::string out = "{";
  bool first = true;
  auto add = [&](Action a, std::string_view verb) {
    if (!allowed.contains(a)) return;
    if (!first) out += ", ";
    out += '\'';
    out += verb;
    out += '\'';
    first = false;
  };
  add(Action::Clarify, "CLARIFY");
  add(Action::MultiAns, "MULTI_ANSWER");
  add(Action::Answer, "ANSWER");
  out += '}';
  return out;
}

std::string format_history(const std::vector<ClarificationExchange>& history) {
  std::string out;
  for (const auto& exchange : history) {
    if (!out.empty()) out += '\n';
    out += "CLARIFICATION QUESTION : ";
    out += exchange.question;
    if (exchange.response) {
      out += "\nANSWER TO CLARIFICATION : ";
      out += *exchange.response;
    }
  }
  return out;
}

PromptBundle build_assistant_prompt(const TemplateStore& templates,
                                    const ConversationState& state, bool use_thoughts) {
  if (state.phase != Phase::AwaitAssistant) {
    throw ProtocolError("assistant prompt requested in phase " + std::string(to_string(state.phase)));
  }
  PromptBundle bundle;
  bundle.template_id =
      std::string(use_thoughts ? template_ids::kAssistantCot : template_ids::kAssistantPlain);
  auto& v = bundle.variables;
  v["ALPHA_VAR"] = "**" + format_coefficient(state.coefficients.alpha) + "**";
  v["BETA_VAR"] = "**" + format_coefficient(state.coefficients.beta) + "**";
  v["AMBIG_QUERY_VAR"] = state.query->query_text;
  v["ALLOWED_ACTIONS_VAR"] = format_allowed_actions(allowed_actions(state));
  v["OPTIONAL_CLARIFICATION_QUESTIONS_VAR"] = format_history(state.history);
  if (state.query->context && !state.query->context->empty()) {
    v["CONTEXT_VAR"] = *state.query->context;
    v["OPTIONAL_CONTEXT_VAR"] = "CONTEXT :\n" + *state.query->context + "\n";
  } else {
    v["CONTEXT_VAR"] = "";
    v["OPTIONAL_CONTEXT_VAR"] = "";
  }
  bundle.rendered = templates.get(bundle.template_id).render(v);
  return bundle;
}

PromptBundle build_user_prompt(const TemplateStore& templates, const ConversationState& state,
                               UserPromptPurpose purpose) {
  PromptBundle bundle;
  auto& v = bundle.variables;
  v["AMBIG_QUERY_VAR"] = state.query->query_text;
  v["UNAMBIG_QUERY_VAR"] = state.interpretation().text;
  switch (purpose) {
    case UserPromptPurpose::Query:
      if (state.phase != Phase::AwaitUserQuery) break;
      bundle.template_id = std::string(template_ids::kUserQuery);
      bundle.rendered = templates.get(bundle.template_id).render(v);
      return bundle;
    case UserPromptPurpose::ClarificationResponse:
      if (state.phase != Phase::AwaitUserClarResponse) break;
      bundle.template_id = std::string(template_ids::kUserClarification);
      v["CLARIF_QUERY_VAR"] = state.pending_clarification();
      bundle.rendered = templates.get(bundle.template_id).render(v);
      return bundle;
    case UserPromptPurpose::Finalize:
      if (state.phase != Phase::AwaitUserFinalize || !state.last_assistant_answer) break;
      bundle.template_id = std::string(template_ids::kUserFinalize);
      v["FRIEND_ANSWER_VAR"] = *state.last_assistant_answer;
      bundle.rendered = templates.get(bundle.template_id).render(v);
      return bundle;
  }
  throw ProtocolError("user prompt purpose does not match phase " +
                      std::string(to_string(state.phase)));
}

}  // namespace groundplay
