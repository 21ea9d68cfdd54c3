#include "groundplay/knowledge.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "groundplay/scoring.hpp"

namespace groundplay {

namespace {

// Sorted for binary search.
constexpr std::array<std::string_view, 56> kStopwords{
    "about", "and",   "any",   "are",   "as",    "at",    "be",    "been",  "but",  "by",
    "can",   "could", "did",   "do",    "does",  "for",   "from",  "had",   "has",  "have",
    "he",    "her",   "his",   "how",   "i",     "if",    "in",    "into",  "is",   "it",
    "its",   "me",    "my",    "of",    "on",    "or",    "our",   "she",   "so",   "that",
    "their", "them",  "they",  "this",  "to",    "was",   "we",    "were",  "what", "when",
    "where", "which", "who",   "whom",  "with",  "you"};
static_assert(std::is_sorted(kStopwords.begin(), kStopwords.end()));

std::string join(const std::vector<std::string>& words, std::string_view sep) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += sep;
    out += w;
  }
  return out;
}

std::vector<std::string> unique_in_order(const std::vector<std::string>& words) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& w : words) {
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

}  // namespace

bool is_stopword(std::string_view token) {
  return std::binary_search(kStopwords.begin(), kStopwords.end(), token);
}

std::vector<std::string> content_words(std::string_view text) {
  auto tokens = normalize_text(text);
  std::erase_if(tokens, [](const std::string& t) { return is_stopword(t); });
  return tokens;
}

std::string distinguishing_phrase(const QueryExample& example, std::size_t index) {
  const auto own = unique_in_order(content_words(example.interpretations.at(index).text));
  const auto query_words = content_words(example.query_text);
  const std::set<std::string> in_query(query_words.begin(), query_words.end());

  std::vector<std::set<std::string>> others;
  for (std::size_t j = 0; j < example.interpretations.size(); ++j) {
    if (j == index) continue;
    const auto words = content_words(example.interpretations[j].text);
    others.emplace_back(words.begin(), words.end());
  }
  auto in_every_other = [&](const std::string& w) {
    return !others.empty() &&
           std::all_of(others.begin(), others.end(), [&](const auto& s) { return s.count(w) > 0; });
  };

  std::vector<std::string> phrase;
  for (const auto& w : own) {
    if (!in_query.count(w) && !in_every_other(w)) phrase.push_back(w);
  }
  if (phrase.empty()) {
    for (const auto& w : own) {
      if (!in_query.count(w)) phrase.push_back(w);
    }
  }
  if (phrase.empty()) phrase = own;
  if (phrase.empty()) return example.interpretations[index].text;
  return join(phrase, " ");
}

KnowledgeTable KnowledgeTable::derive(const std::vector<QueryExample>& dataset) {
  KnowledgeTable table;
  for (const auto& example : dataset) {
    if (example.interpretations.empty()) continue;
    KnowledgeEntry entry;
    entry.query_id = example.id;

    std::size_t best = 0;
    double max_weight = example.weight(0);
    for (std::size_t j = 1; j < example.interpretations.size(); ++j) {
      if (example.weight(j) > max_weight) {
        max_weight = example.weight(j);
        best = j;
      }
    }
    auto first_gold = [&](std::size_t j) -> std::string {
      const auto& golds = example.interpretations[j].gold_answers;
      return golds.empty() ? std::string("unknown") : golds.front();
    };
    entry.direct_answer = first_gold(best);

    std::vector<std::string> hints;
    std::vector<std::string> parts;
    for (std::size_t j = 0; j < example.interpretations.size(); ++j) {
      Resolution r{distinguishing_phrase(example, j), first_gold(j)};
      hints.push_back(r.hint);
      parts.push_back(r.hint + ": " + r.answer);
      entry.resolutions.push_back(std::move(r));
    }
    entry.multi_answer = join(parts, "; ");
    if (hints.size() >= 2) {
      entry.clarification_question = "Do you mean " + join(hints, " or ") + "?";
    } else {
      entry.clarification_question = "Could you be more specific about what you are asking?";
    }

    entry.delta_clar = 100.0 * (1.0 - max_weight);
    entry.delta_multi = entry.delta_clar;
    entry.extra_words =
        std::max(0, count_words(entry.multi_answer) - count_words(entry.direct_answer));
    table.add(std::move(entry));
  }
  return table;
}

void KnowledgeTable::add(KnowledgeEntry entry) {
  std::string key = entry.query_id;
  entries_.insert_or_assign(std::move(key), std::move(entry));
}

const KnowledgeEntry* KnowledgeTable::find(std::string_view query_id) const {
  auto it = entries_.find(query_id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<const KnowledgeEntry*> KnowledgeTable::entries() const {
  std::vector<const KnowledgeEntry*> out;
  out.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) out.push_back(&entry);
  return out;
}

void KnowledgeTable::override_constants(const DecisionConstants& constants) {
  for (auto& [id, entry] : entries_) {
    entry.delta_clar = constants.delta_clar;
    entry.delta_multi = constants.delta_multi;
    entry.extra_words = constants.extra_words;
  }
}

}  // namespace groundplay
