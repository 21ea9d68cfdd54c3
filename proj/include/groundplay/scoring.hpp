#pragma once

// Answer normalization, token F1, word counts and the cost-penalized reward
//
//   total = accuracy - alpha * n_clarifications - beta * answer_words
//
// Accuracy is on the 0..100 scale. answer_words counts the penultimate
// (assistant) observation; accuracy is measured on the final user answer.

#include <string>
#include <string_view>
#include <vector>

#include "groundplay/core.hpp"

namespace groundplay {

enum class ScoringMode { PlainTokenF1, NumericAwareF1 };

std::string_view to_string(ScoringMode mode);
ScoringMode scoring_mode_from_string(std::string_view name);

// SQuAD-style normalization: lowercase, drop ASCII punctuation, drop the
// articles a/an/the, split on whitespace.
std::vector<std::string> normalize_text(std::string_view text);

// Tokens used by the numeric-aware mode. Numeric tokens carry their
// canonical decimal rendering ("$212,000" -> "212000", "3.50%" -> "3.5").
struct ScoringToken {
  std::string text;
  bool numeric = false;
};
std::vector<ScoringToken> numeric_aware_tokens(std::string_view text);

double token_f1(std::string_view prediction, std::string_view gold,
                ScoringMode mode = ScoringMode::PlainTokenF1);

// 100 x max over gold answers of token_f1.
double accuracy(std::string_view prediction, const Interpretation& interpretation,
                ScoringMode mode = ScoringMode::PlainTokenF1);

// Number of maximal runs of non-whitespace characters.
int count_words(std::string_view text);

RewardBreakdown make_reward(double accuracy, int n_clarifications, int answer_words,
                            CostCoefficients coefficients);

// Scores a terminal rollout against the interpretation it was played for.
// Throws std::invalid_argument for non-terminal rollouts.
RewardBreakdown reward(const Rollout& rollout, const Interpretation& interpretation,
                       ScoringMode mode = ScoringMode::PlainTokenF1);

// delta_acc - alpha * extra_clar - beta * extra_words. Positive means the
// richer strategy beats answering directly.
double decision_margin(double delta_acc, double alpha, double beta, int extra_words,
                       int extra_clar);

}  // namespace groundplay
