#include "groundplay/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace groundplay {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Python's string.punctuation.
bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) ||
         (u >= 123 && u <= 126);
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool is_article(std::string_view token) {
  return token == "a" || token == "an" || token == "the";
}

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) fn(text.substr(start, i - start));
  }
}

// Lowercased word with punctuation removed and articles dropped; empty if
// nothing survives.
std::string normalize_word(std::string_view word) {
  std::string out;
  out.reserve(word.size());
  for (char c : word) {
    if (!is_ascii_punct(c)) out.push_back(ascii_lower(c));
  }
  if (is_article(out)) out.clear();
  return out;
}

std::optional<std::string> canonical_number(std::string_view raw) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  auto strip_lead = [](char c) { return c == '(' || c == '"' || c == '\'' || c == '['; };
  auto strip_trail = [](char c) {
    return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == ')' ||
           c == '"' || c == '\'' || c == ']';
  };
  while (begin < end && strip_lead(raw[begin])) ++begin;
  while (end > begin && strip_trail(raw[end - 1])) --end;

  std::string cleaned;
  for (std::size_t i = begin; i < end; ++i) {
    const char c = raw[i];
    if (c == ',' || c == '$' || c == '%') continue;
    cleaned.push_back(c);
  }
  if (!cleaned.empty() && cleaned.front() == '+') cleaned.erase(0, 1);
  if (cleaned.empty()) return std::nullopt;

  // Plain decimal only: [-]digits[.digits] or [-].digits
  std::size_t i = cleaned.front() == '-' ? 1 : 0;
  bool digits = false;
  bool dot = false;
  for (; i < cleaned.size(); ++i) {
    const char c = cleaned[i];
    if (c >= '0' && c <= '9') {
      digits = true;
    } else if (c == '.' && !dot) {
      dot = true;
    } else {
      return std::nullopt;
    }
  }
  if (!digits) return std::nullopt;

  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cleaned.data(), cleaned.data() + cleaned.size(), value);
  if (ec != std::errc{} || ptr != cleaned.data() + cleaned.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  if (value == 0.0) value = 0.0;  // fold -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double f1_from_counts(std::size_t overlap, std::size_t pred, std::size_t gold) {
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred);
  const double recall = static_cast<double>(overlap) / static_cast<double>(gold);
  return 2.0 * precision * recall / (precision + recall);
}

std::size_t multiset_overlap(std::vector<std::string> a, std::vector<std::string> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

}  // namespace

std::string_view to_string(ScoringMode mode) {
  return mode == ScoringMode::PlainTokenF1 ? "PLAIN_TOKEN_F1" : "NUMERIC_AWARE_F1";
}

ScoringMode scoring_mode_from_string(std::string_view name) {
  if (name == "PLAIN_TOKEN_F1") return ScoringMode::PlainTokenF1;
  if (name == "NUMERIC_AWARE_F1") return ScoringMode::NumericAwareF1;
  throw std::invalid_argument("unknown scoring mode '" + std::string(name) + "'");
}

std::vector<std::string> normalize_text(std::string_view text) {
  std::vector<std::string> tokens;
  for_each_word(text, [&](std::string_view word) {
    std::string w = normalize_word(word);
    if (!w.empty()) tokens.push_back(std::move(w));
  });
  return tokens;
}

std::vector<ScoringToken> numeric_aware_tokens(std::string_view text) {
  std::vector<ScoringToken> tokens;
  for_each_word(text, [&](std::string_view word) {
    if (auto number = canonical_number(word)) {
      tokens.push_back({std::move(*number), true});
      return;
    }
    std::string w = normalize_word(word);
    if (!w.empty()) tokens.push_back({std::move(w), false});
  });
  return tokens;
}

double token_f1(std::string_view prediction, std::string_view gold, ScoringMode mode) {
  std::vector<std::string> pred_tokens;
  std::vector<std::string> gold_tokens;
  if (mode == ScoringMode::PlainTokenF1) {
    pred_tokens = normalize_text(prediction);
    gold_tokens = normalize_text(gold);
  } else {
    std::vector<std::string> pred_numbers;
    std::vector<std::string> gold_numbers;
    for (auto& t : numeric_aware_tokens(prediction)) {
      if (t.numeric) pred_numbers.push_back(t.text);
      pred_tokens.push_back(std::move(t.text));
    }
    for (auto& t : numeric_aware_tokens(gold)) {
      if (t.numeric) gold_numbers.push_back(t.text);
      gold_tokens.push_back(std::move(t.text));
    }
    if (!pred_numbers.empty() && !gold_numbers.empty() &&
        multiset_overlap(pred_numbers, gold_numbers) == 0) {
      return 0.0;
    }
  }
  if (pred_tokens.empty() || gold_tokens.empty()) {
    return pred_tokens.empty() && gold_tokens.empty() ? 1.0 : 0.0;
  }
  const std::size_t np = pred_tokens.size();
  const std::size_t ng = gold_tokens.size();
  return f1_from_counts(multiset_overlap(std::move(pred_tokens), std::move(gold_tokens)), np, ng);
}

double accuracy(std::string_view prediction, const Interpretation& interpretation,
                ScoringMode mode) {
  if (interpretation.gold_answers.empty()) {
    throw std::invalid_argument("accuracy: interpretation has no gold answers");
  }
  double best = 0.0;
  for (const auto& gold : interpretation.gold_answers) {
    best = std::max(best, token_f1(prediction, gold, mode));
  }
  return 100.0 * best;
}

int count_words(std::string_view text) {
  int n = 0;
  for_each_word(text, [&](std::string_view) { ++n; });
  return n;
}

RewardBreakdown make_reward(double accuracy_value, int n_clarifications, int answer_words,
                            CostCoefficients coefficients) {
  RewardBreakdown r;
  r.accuracy = accuracy_value;
  r.n_clarifications = n_clarifications;
  r.answer_words = answer_words;
  r.alpha = coefficients.alpha;
  r.beta = coefficients.beta;
  r.total = accuracy_value - coefficients.alpha * n_clarifications -
            coefficients.beta * answer_words;
  return r;
}

RewardBreakdown reward(const Rollout& rollout, const Interpretation& interpretation,
                       ScoringMode mode) {
  if (!rollout.terminal() || rollout.turns.size() < 3) {
    throw std::invalid_argument("reward: rollout '" + rollout.rollout_id + "' is not terminal");
  }
  int n_clar = 0;
  for (const auto& turn : rollout.turns) n_clar += turn.action == Action::Clarify ? 1 : 0;
  const auto& assistant_answer = rollout.turns[rollout.turns.size() - 2].observation;
  return make_reward(accuracy(rollout.final_answer, interpretation, mode), n_clar,
                     count_words(assistant_answer), rollout.coefficients);
}

double decision_margin(double delta_acc, double alpha, double beta, int extra_words,
                       int extra_clar) {
  return delta_acc - alpha * extra_clar - beta * extra_words;
}

}  // namespace groundplay
