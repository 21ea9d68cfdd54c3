#pragma once

// Fixture builders and brute-force references shared by the test binaries.
// The references deliberately avoid the library's selection and scoring code.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "groundplay/core.hpp"
#include "groundplay/dataset.hpp"

namespace testing {

using namespace groundplay;

inline QueryExample make_example(std::string id, std::string query,
                                 std::vector<std::pair<std::string, std::string>> interps,
                                 std::optional<std::vector<double>> weights = std::nullopt) {
  QueryExample e;
  e.id = std::move(id);
  e.query_text = std::move(query);
  for (auto& [text, gold] : interps) e.interpretations.push_back({text, {gold}});
  e.ambiguous = e.interpretations.size() > 1;
  e.weights = std::move(weights);
  return e;
}

// A structurally valid rollout following `letters` whose reward total is
// fixed by hand.
inline Rollout synthetic_rollout(const std::string& query_id, std::size_t interp,
                                 CostCoefficients c, std::string_view letters, double total,
                                 std::size_t ordinal) {
  Rollout r;
  r.rollout_id = query_id + "#" + std::to_string(interp) + "#" + std::to_string(ordinal);
  r.query_id = query_id;
  r.interpretation_index = interp;
  r.coefficients = c;
  for (Action a : parse_letters(letters).actions) {
    Turn t;
    t.role = agent_of(a);
    t.action = a;
    t.prompt = "prompt " + std::to_string(r.turns.size()) + " of " + r.rollout_id;
    t.observation = std::string(to_string(a)) + " " + r.rollout_id;
    r.turns.push_back(std::move(t));
  }
  r.final_answer = r.turns.back().observation;
  RewardBreakdown rb;
  rb.alpha = c.alpha;
  rb.beta = c.beta;
  rb.total = total;
  r.reward = rb;
  r.validity = ValidityVerdict::ok();
  return r;
}

// Independent selection reference over (letters, interpretation, reward).
struct RefRollout {
  std::string letters;
  std::size_t interp;
  double reward;
};

struct RefSelection {
  std::optional<std::string> best;
  double best_value = 0.0;
  std::map<std::size_t, std::size_t> chosen;  // interpretation -> position in input
};

inline bool ref_canonical_less(const std::string& a, const std::string& b) {
  // Letter ranks follow the action enumeration Q, C, R, A, M, F.
  auto rank = [](char ch) { return std::string("QCRAMF").find(ch); };
  if (a.size() != b.size()) return a.size() < b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return rank(a[i]) < rank(b[i]);
  }
  return false;
}

inline RefSelection ref_select(const std::vector<RefRollout>& rollouts, std::size_t n_interps,
                               const std::vector<double>& weights, bool require_full) {
  std::set<std::string> sequences;
  for (const auto& r : rollouts) sequences.insert(r.letters);
  RefSelection out;
  for (const auto& s : sequences) {
    double value = 0.0;
    double covered = 0.0;
    std::size_t covered_count = 0;
    for (std::size_t j = 0; j < n_interps; ++j) {
      double sum = 0.0;
      int n = 0;
      for (const auto& r : rollouts) {
        if (r.letters == s && r.interp == j) {
          sum += r.reward;
          ++n;
        }
      }
      if (n == 0) continue;
      const double w = weights.empty() ? 1.0 / static_cast<double>(n_interps) : weights[j];
      value += w * (sum / n);
      covered += w;
      ++covered_count;
    }
    const bool partial = covered_count < n_interps;
    if (partial && require_full) continue;
    if (partial) value /= covered;
    const bool better = !out.best || value > out.best_value ||
                        (value == out.best_value && ref_canonical_less(s, *out.best));
    if (better) {
      out.best = s;
      out.best_value = value;
    }
  }
  if (!out.best) return out;
  for (std::size_t k = 0; k < rollouts.size(); ++k) {
    const auto& r = rollouts[k];
    if (r.letters != *out.best) continue;
    auto it = out.chosen.find(r.interp);
    if (it == out.chosen.end() || r.reward > rollouts[it->second].reward) out.chosen[r.interp] = k;
  }
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("groundplay_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_dataset(const std::filesystem::path& path,
                          const std::vector<QueryExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& e : examples) out << to_json(e).dump() << '\n';
}

// Twenty queries with one to three interpretations each; two in three are
// ambiguous.
inline std::vector<QueryExample> scripted_corpus(std::size_t n = 20) {
  static const std::vector<std::string> subjects{"book", "movie", "album", "series", "play",
                                                 "game", "song", "poem"};
  static const std::vector<std::string> places{"uk", "us", "france", "japan", "canada", "india"};
  std::vector<QueryExample> out;
  for (std::size_t q = 0; q < n; ++q) {
    const std::string topic = "title" + std::to_string(q);
    const std::string query = "When was " + topic + " released?";
    std::vector<std::pair<std::string, std::string>> interps;
    const std::size_t k = q % 3 == 2 ? 1 : 2 + q % 2;
    for (std::size_t j = 0; j < k; ++j) {
      const std::string what = subjects[(q + j) % subjects.size()];
      const std::string where = places[(q * 3 + j) % places.size()];
      if (k == 1) {
        interps.push_back({query, std::to_string(1950 + q)});
      } else {
        interps.push_back({"When was the " + what + " " + topic + " released in the " + where + "?",
                           std::to_string(1950 + q * 3 + j)});
      }
    }
    std::optional<std::vector<double>> weights;
    if (k == 3 && q % 4 == 1) weights = std::vector<double>{0.5, 0.3, 0.2};
    out.push_back(make_example("c" + std::string(q < 10 ? "0" : "") + std::to_string(q), query,
                               interps, weights));
  }
  return out;
}

}  // namespace testing
