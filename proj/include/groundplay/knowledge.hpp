#pragma once

// Canned per-query knowledge consumed by the scripted assistant policies.
//
// An entry holds the assistant's clarification question, its direct and
// multi answers, the answers it gives once a clarification response matches
// a resolution hint, and the decision-rule constants used by the
// reward-aware policy. Entries can be loaded from JSONL or derived from the
// dataset; a derived table is a deterministic function of the dataset.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "groundplay/core.hpp"

namespace groundplay {

// Function words ignored when matching text by overlap. Articles are already
// removed by normalize_text.
bool is_stopword(std::string_view normalized_token);

// normalize_text tokens that are not stopwords, in order, duplicates kept.
std::vector<std::string> content_words(std::string_view text);

struct Resolution {
  std::string hint;
  std::string answer;

  friend bool operator==(const Resolution&, const Resolution&) = default;
};

struct KnowledgeEntry {
  std::string query_id;
  std::string clarification_question;
  std::string direct_answer;
  std::string multi_answer;
  std::vector<Resolution> resolutions;
  // Expected accuracy gain over answering directly.
  double delta_clar = 0.0;
  double delta_multi = 0.0;
  // Extra answer words a multi-answer costs over a direct answer.
  int extra_words = 0;

  friend bool operator==(const KnowledgeEntry&, const KnowledgeEntry&) = default;
};

struct DecisionConstants {
  double delta_clar = 0.0;
  double delta_multi = 0.0;
  int extra_words = 0;
};

class KnowledgeTable {
public:
  // One entry per example:
  //   direct answer    first gold of the highest-weight interpretation
  //   resolutions      (distinguishing words of i_j, first gold of i_j)
  //   multi answer     "<hint>: <gold>" joined by "; "
  //   clarification    "Do you mean <hint_1> or <hint_2> ...?"
  //   delta_clar/multi 100 * (1 - max_j P_q(j))
  //   extra_words      words(multi) - words(direct), floored at 0
  static KnowledgeTable derive(const std::vector<QueryExample>& dataset);

  void add(KnowledgeEntry entry);
  const KnowledgeEntry* find(std::string_view query_id) const;
  std::size_t size() const { return entries_.size(); }
  std::vector<const KnowledgeEntry*> entries() const;

  // Replaces the decision constants of every entry.
  void override_constants(const DecisionConstants& constants);

private:
  std::map<std::string, KnowledgeEntry, std::less<>> entries_;
};

// Words of the interpretation that tell it apart from the query and from the
// other interpretations; falls back to the interpretation's content words.
std::string distinguishing_phrase(const QueryExample& example, std::size_t index);

}  // namespace groundplay
