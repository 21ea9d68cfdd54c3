#include "groundplay/io.hpp"

#include <cmath>

namespace groundplay {

namespace {

const Json& require(const Json& j, const char* key) {
  if (!j.is_object()) throw DataError("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
  return *it;
}

template <typename T>
T get(const Json& j, const char* key) {
  const Json& v = require(j, key);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string("field '") + key + "' has the wrong type");
  }
}

std::string get_string(const Json& j, const char* key) {
  const Json& v = require(j, key);
  if (!v.is_string()) throw DataError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double get_number(const Json& j, const char* key) {
  const Json& v = require(j, key);
  if (!v.is_number()) throw DataError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::optional<std::string> get_optional_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DataError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

Json optional_string(const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); }

Action action_field(const Json& j, const char* key) {
  const auto name = get_string(j, key);
  auto action = action_from_string(name);
  if (!action) throw DataError("unknown action '" + name + "'");
  return *action;
}

template <typename V, typename Fn>
Json index_map(const std::map<std::size_t, V>& m, Fn&& value) {
  Json out = Json::object();
  for (const auto& [k, v] : m) out[std::to_string(k)] = value(v);
  return out;
}

std::size_t parse_index(const std::string& key) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(key, &pos);
    if (pos != key.size()) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError("invalid interpretation index '" + key + "'");
  }
}

template <typename T, typename Parse>
std::vector<T> read_file(const std::filesystem::path& path, Parse&& parse) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<T> out;
  for_each_jsonl(in, path.string(), [&](const Json& j, std::size_t) { out.push_back(parse(j)); });
  return out;
}

}  // namespace

Json to_json(const QueryExample& e) {
  Json j;
  j["id"] = e.id;
  j["query_text"] = e.query_text;
  j["context"] = optional_string(e.context);
  Json interps = Json::array();
  for (const auto& i : e.interpretations) {
    interps.push_back({{"text", i.text}, {"gold_answers", i.gold_answers}});
  }
  j["interpretations"] = std::move(interps);
  j["ambiguous"] = e.ambiguous;
  j["weights"] = e.weights ? Json(*e.weights) : Json(nullptr);
  return j;
}

QueryExample query_example_from_json(const Json& j, bool* had_ambiguous_field) {
  QueryExample e;
  e.id = get_string(j, "id");
  e.query_text = get_string(j, "query_text");
  e.context = get_optional_string(j, "context");
  const Json& interps = require(j, "interpretations");
  if (!interps.is_array()) throw DataError("field 'interpretations' must be an array");
  for (const auto& item : interps) {
    Interpretation interp;
    interp.text = get_string(item, "text");
    interp.gold_answers = get<std::vector<std::string>>(item, "gold_answers");
    e.interpretations.push_back(std::move(interp));
  }
  auto amb = j.find("ambiguous");
  const bool has_amb = amb != j.end() && !amb->is_null();
  if (has_amb) {
    if (!amb->is_boolean()) throw DataError("field 'ambiguous' must be a boolean");
    e.ambiguous = amb->get<bool>();
  }
  if (had_ambiguous_field) *had_ambiguous_field = has_amb;
  auto w = j.find("weights");
  if (w != j.end() && !w->is_null()) e.weights = get<std::vector<double>>(j, "weights");
  return e;
}

Json to_json(const Rollout& r) {
  Json j;
  j["rollout_id"] = r.rollout_id;
  j["query_id"] = r.query_id;
  j["interpretation_index"] = r.interpretation_index;
  j["alpha"] = r.coefficients.alpha;
  j["beta"] = r.coefficients.beta;
  Json turns = Json::array();
  for (const auto& t : r.turns) {
    Json tj;
    tj["role"] = to_string(t.role);
    tj["prompt"] = t.prompt;
    tj["thought"] = optional_string(t.thought);
    tj["action"] = to_string(t.action);
    tj["observation"] = t.observation;
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  j["final_answer"] = r.final_answer;
  if (r.reward) {
    j["reward"] = {{"accuracy", r.reward->accuracy},
                   {"n_clarifications", r.reward->n_clarifications},
                   {"answer_words", r.reward->answer_words},
                   {"total", r.reward->total}};
  } else {
    j["reward"] = nullptr;
  }
  const bool valid = r.is_valid();
  j["valid"] = valid;
  j["invalid_reason"] =
      (r.validity && !valid) ? Json(std::string(to_string(r.validity->reason))) : Json(nullptr);
  return j;
}

Rollout rollout_from_json(const Json& j) {
  Rollout r;
  r.rollout_id = get_string(j, "rollout_id");
  r.query_id = get_string(j, "query_id");
  r.interpretation_index = get<std::size_t>(j, "interpretation_index");
  r.coefficients = {get_number(j, "alpha"), get_number(j, "beta")};
  const Json& turns = require(j, "turns");
  if (!turns.is_array()) throw DataError("field 'turns' must be an array");
  for (const auto& tj : turns) {
    Turn t;
    const auto role_name = get_string(tj, "role");
    auto role = role_from_string(role_name);
    if (!role) throw DataError("unknown role '" + role_name + "'");
    t.role = *role;
    t.prompt = get_string(tj, "prompt");
    t.thought = get_optional_string(tj, "thought");
    t.action = action_field(tj, "action");
    t.observation = get_string(tj, "observation");
    r.turns.push_back(std::move(t));
  }
  r.final_answer = get_string(j, "final_answer");
  const Json& reward = require(j, "reward");
  if (!reward.is_null()) {
    RewardBreakdown b;
    b.accuracy = get_number(reward, "accuracy");
    b.n_clarifications = get<int>(reward, "n_clarifications");
    b.answer_words = get<int>(reward, "answer_words");
    b.total = get_number(reward, "total");
    b.alpha = r.coefficients.alpha;
    b.beta = r.coefficients.beta;
    r.reward = b;
  }
  const bool valid = get<bool>(j, "valid");
  if (valid) {
    r.validity = ValidityVerdict::ok();
  } else {
    const auto reason_name = get_optional_string(j, "invalid_reason");
    auto reason = reason_name ? verdict_reason_from_string(*reason_name) : std::nullopt;
    if (!reason || *reason == VerdictReason::Ok) {
      throw DataError("invalid rollout needs an invalid_reason other than OK");
    }
    r.validity = ValidityVerdict::invalid(*reason);
  }
  return r;
}

Json to_json(const ActionSequence& sequence) {
  Json out = Json::array();
  for (Action a : sequence.actions) out.push_back(std::string(to_string(a)));
  return out;
}

ActionSequence action_sequence_from_json(const Json& j) {
  if (!j.is_array()) throw DataError("action sequence must be an array of action names");
  ActionSequence seq;
  for (const auto& item : j) {
    if (!item.is_string()) throw DataError("action sequence entries must be strings");
    auto a = action_from_string(item.get<std::string>());
    if (!a) throw DataError("unknown action '" + item.get<std::string>() + "'");
    seq.actions.push_back(*a);
  }
  return seq;
}

Json to_json(const SelectionResult& s) {
  Json j;
  j["query_id"] = s.query_id;
  j["alpha"] = s.coefficients.alpha;
  j["beta"] = s.coefficients.beta;
  j["best_sequence"] = s.best_sequence ? to_json(*s.best_sequence) : Json(nullptr);
  j["chosen_rollouts"] = index_map(s.chosen_rollouts, [](const std::string& id) { return id; });
  Json scores = Json::array();
  for (const auto& sc : s.sequence_scores) {
    Json sj;
    sj["sequence"] = to_json(sc.sequence);
    sj["per_interpretation_mean"] = index_map(sc.per_interpretation_mean, [](double v) { return v; });
    sj["support"] = index_map(sc.support, [](std::size_t v) { return v; });
    sj["expected_reward"] = sc.expected_reward;
    sj["partial"] = sc.partial;
    scores.push_back(std::move(sj));
  }
  j["sequence_scores"] = std::move(scores);
  j["partial"] = s.partial;
  j["under_supported"] = s.under_supported;
  return j;
}

SelectionResult selection_result_from_json(const Json& j) {
  SelectionResult s;
  s.query_id = get_string(j, "query_id");
  s.coefficients = {get_number(j, "alpha"), get_number(j, "beta")};
  const Json& best = require(j, "best_sequence");
  if (!best.is_null()) s.best_sequence = action_sequence_from_json(best);
  for (const auto& [k, v] : require(j, "chosen_rollouts").items()) {
    if (!v.is_string()) throw DataError("chosen_rollouts values must be strings");
    s.chosen_rollouts[parse_index(k)] = v.get<std::string>();
  }
  for (const auto& sj : require(j, "sequence_scores")) {
    SequenceScore sc;
    sc.sequence = action_sequence_from_json(require(sj, "sequence"));
    for (const auto& [k, v] : require(sj, "per_interpretation_mean").items()) {
      sc.per_interpretation_mean[parse_index(k)] = v.get<double>();
    }
    for (const auto& [k, v] : require(sj, "support").items()) {
      sc.support[parse_index(k)] = v.get<std::size_t>();
    }
    sc.expected_reward = get_number(sj, "expected_reward");
    sc.partial = get<bool>(sj, "partial");
    s.sequence_scores.push_back(std::move(sc));
  }
  s.partial = get<bool>(j, "partial");
  s.under_supported = get<bool>(j, "under_supported");
  return s;
}

Json to_json(const TrainingExample& e) {
  Json j;
  j["query_id"] = e.query_id;
  j["rollout_id"] = e.rollout_id;
  j["turn_index"] = e.turn_index;
  j["prompt"] = e.prompt;
  j["target"] = e.target;
  j["coefficients"] = {{"alpha", e.coefficients.alpha}, {"beta", e.coefficients.beta}};
  j["reward_total"] = e.reward_total;
  return j;
}

TrainingExample training_example_from_json(const Json& j) {
  TrainingExample e;
  e.query_id = get_string(j, "query_id");
  e.rollout_id = get_string(j, "rollout_id");
  e.turn_index = get<std::size_t>(j, "turn_index");
  e.prompt = get_string(j, "prompt");
  e.target = get_string(j, "target");
  const Json& c = require(j, "coefficients");
  e.coefficients = {get_number(c, "alpha"), get_number(c, "beta")};
  e.reward_total = get_number(j, "reward_total");
  return e;
}

Json to_json(const KnowledgeEntry& e) {
  Json j;
  j["query_id"] = e.query_id;
  j["clarification_question"] = e.clarification_question;
  j["direct_answer"] = e.direct_answer;
  j["multi_answer"] = e.multi_answer;
  Json res = Json::array();
  for (const auto& r : e.resolutions) res.push_back({{"hint", r.hint}, {"answer", r.answer}});
  j["resolutions"] = std::move(res);
  j["delta_clar"] = e.delta_clar;
  j["delta_multi"] = e.delta_multi;
  j["extra_words"] = e.extra_words;
  return j;
}

KnowledgeEntry knowledge_entry_from_json(const Json& j) {
  KnowledgeEntry e;
  e.query_id = get_string(j, "query_id");
  e.clarification_question = get_string(j, "clarification_question");
  e.direct_answer = get_string(j, "direct_answer");
  e.multi_answer = get_string(j, "multi_answer");
  auto res = j.find("resolutions");
  if (res != j.end()) {
    for (const auto& rj : *res) e.resolutions.push_back({get_string(rj, "hint"), get_string(rj, "answer")});
  }
  e.delta_clar = get_number(j, "delta_clar");
  e.delta_multi = get_number(j, "delta_multi");
  e.extra_words = get<int>(j, "extra_words");
  return e;
}

Json to_json(const MetricsReport& m) {
  Json j;
  j["stratum"] = to_string(m.stratum);
  j["alpha"] = m.alpha ? Json(*m.alpha) : Json(nullptr);
  j["beta"] = m.beta ? Json(*m.beta) : Json(nullptr);
  j["n_rollouts"] = m.n_rollouts;
  j["avg_reward"] = m.avg_reward;
  j["avg_f1_percent"] = m.avg_f1_percent;
  j["pct_clarify"] = m.pct_clarify;
  j["pct_multi_answer"] = m.pct_multi_answer;
  j["avg_answer_words"] = m.avg_answer_words;
  return j;
}

Json to_json(const SteerabilityReport& report) {
  Json series = Json::array();
  for (const auto& s : report.series) {
    Json sj;
    sj["metric"] = s.metric;
    sj["swept"] = s.swept;
    sj["fixed_value"] = s.fixed_value;
    sj["tolerance"] = s.tolerance;
    Json points = Json::array();
    for (const auto& p : s.points) {
      points.push_back({{"coefficient", p.coefficient},
                        {"value", p.value},
                        {"n_rollouts", p.n_rollouts},
                        {"unseen", p.unseen}});
    }
    sj["points"] = std::move(points);
    sj["monotone_nonincreasing"] = s.monotone_nonincreasing;
    series.push_back(std::move(sj));
  }
  return {{"series", std::move(series)}};
}

Json to_json(const OracleComparison& c) {
  Json j;
  j["query_id"] = c.query_id;
  j["alpha"] = c.coefficients.alpha;
  j["beta"] = c.coefficients.beta;
  j["policy_expected_reward"] = c.policy_expected_reward;
  j["oracle_expected_reward"] = c.oracle_expected_reward;
  j["oracle_sequence"] = to_json(c.oracle_sequence);
  j["oracle_partial"] = c.oracle_partial;
  j["oracle_ge_policy"] = c.oracle_ge_policy;
  return j;
}

void for_each_jsonl(std::istream& in, const std::string& source,
                    const std::function<void(const Json&, std::size_t line)>& fn) {
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      fn(Json::parse(text), line);
    } catch (const std::exception& e) {
      throw DataError(source + ":" + std::to_string(line) + ": " + e.what());
    }
  }
}

std::vector<Rollout> read_rollouts(const std::filesystem::path& path) {
  return read_file<Rollout>(path, rollout_from_json);
}

std::vector<TrainingExample> read_training_examples(const std::filesystem::path& path) {
  return read_file<TrainingExample>(path, training_example_from_json);
}

std::vector<SelectionResult> read_selection_results(const std::filesystem::path& path) {
  return read_file<SelectionResult>(path, selection_result_from_json);
}

KnowledgeTable read_knowledge(const std::filesystem::path& path) {
  KnowledgeTable table;
  for (auto& e : read_file<KnowledgeEntry>(path, knowledge_entry_from_json)) table.add(std::move(e));
  return table;
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot create " + path.string());
}

void JsonlWriter::write(const Json& record) {
  out_ << record.dump() << '\n';
  if (!out_) throw std::runtime_error("write to " + path_.string() + " failed");
}

void JsonlWriter::close() {
  out_.close();
  if (out_.fail()) throw std::runtime_error("closing " + path_.string() + " failed");
}

}  // namespace groundplay
