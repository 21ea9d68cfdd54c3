#include "groundplay/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>

namespace groundplay {

namespace {

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::optional<std::filesystem::path> read_path(const Json& obj, const char* key,
                                               const std::filesystem::path& base) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ConfigError(std::string(key) + " must be a string");
  return resolve(base, it->get<std::string>());
}

void require_exists(const std::optional<std::filesystem::path>& path, const char* what) {
  if (path && !std::filesystem::exists(*path)) {
    throw ConfigError(std::string(what) + " does not exist: " + path->string());
  }
}

RunConfig parse_run(const Json& j) {
  const std::string where = "run";
  check_keys(j, {"n_rollouts_per_interpretation", "alpha_grid", "beta_grid", "max_clarifications",
                 "scoring_mode", "f1_validity_threshold", "ignore_fraction_threshold", "seed",
                 "max_parallel_rollouts", "use_thoughts", "fixed_coefficients"},
             where);
  RunConfig run;
  read(j, "n_rollouts_per_interpretation", run.n_rollouts_per_interpretation, where);
  read(j, "alpha_grid", run.alpha_grid, where);
  read(j, "beta_grid", run.beta_grid, where);
  read(j, "max_clarifications", run.max_clarifications, where);
  read(j, "f1_validity_threshold", run.f1_validity_threshold, where);
  read(j, "ignore_fraction_threshold", run.ignore_fraction_threshold, where);
  read(j, "seed", run.seed, where);
  read(j, "max_parallel_rollouts", run.max_parallel_rollouts, where);
  read(j, "use_thoughts", run.use_thoughts, where);
  std::string mode;
  read(j, "scoring_mode", mode, where);
  if (!mode.empty()) {
    try {
      run.scoring_mode = scoring_mode_from_string(mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (auto it = j.find("fixed_coefficients"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ConfigError("run.fixed_coefficients must be an array");
    for (const auto& pair : *it) {
      check_keys(pair, {"alpha", "beta"}, "run.fixed_coefficients[]");
      double alpha = 0.0;
      double beta = 0.0;
      read(pair, "alpha", alpha, "run.fixed_coefficients[]");
      read(pair, "beta", beta, "run.fixed_coefficients[]");
      run.fixed_coefficients.push_back({alpha, beta});
    }
  }
  run.validate();
  return run;
}

RemoteEndpointConfig parse_endpoint(const Json& j, const std::string& name) {
  const std::string where = "endpoints." + name;
  check_keys(j, {"base_url", "model_name", "temperature", "max_output_tokens", "timeout_ms",
                 "max_retries", "max_in_flight", "api_key_env", "backoff_base_ms",
                 "backoff_max_ms"},
             where);
  RemoteEndpointConfig c;
  read(j, "base_url", c.base_url, where);
  read(j, "model_name", c.model_name, where);
  read(j, "temperature", c.temperature, where);
  read(j, "max_output_tokens", c.max_output_tokens, where);
  read(j, "timeout_ms", c.timeout_ms, where);
  read(j, "max_retries", c.max_retries, where);
  read(j, "max_in_flight", c.max_in_flight, where);
  read(j, "api_key_env", c.api_key_env, where);
  read(j, "backoff_base_ms", c.backoff_base_ms, where);
  read(j, "backoff_max_ms", c.backoff_max_ms, where);
  c.validate();
  return c;
}

}  // namespace

SteerabilityConfig PipelineConfig::steerability() const {
  SteerabilityConfig s;
  s.fixed_alpha = eval.fixed_alpha;
  s.fixed_beta = eval.fixed_beta;
  s.tolerance_pct = eval.tolerance_pct;
  s.tolerance_words = eval.tolerance_words;
  s.training_alpha_grid = run.alpha_grid;
  s.training_beta_grid = run.beta_grid;
  return s;
}

SweepConfig PipelineConfig::sweep_config() const {
  SweepConfig s;
  s.fixed_alpha = eval.fixed_alpha;
  s.fixed_beta = eval.fixed_beta;
  s.training_alpha_grid = run.alpha_grid;
  s.training_beta_grid = run.beta_grid;
  s.unseen_alpha = sweep.unseen_alpha;
  s.unseen_beta = sweep.unseen_beta;
  return s;
}

PipelineConfig pipeline_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"dataset_path", "output_dir", "run", "backends", "endpoints", "knowledge_path",
                 "decision_constants", "templates_dir", "selection", "eval", "sweep"},
             "config");
  PipelineConfig c;
  c.dataset_path = read_path(j, "dataset_path", base_dir);
  if (auto out = read_path(j, "output_dir", base_dir)) c.output_dir = *out;
  c.knowledge_path = read_path(j, "knowledge_path", base_dir);
  c.templates_dir = read_path(j, "templates_dir", base_dir);
  require_exists(c.dataset_path, "dataset_path");
  require_exists(c.knowledge_path, "knowledge_path");
  require_exists(c.templates_dir, "templates_dir");

  if (auto it = j.find("run"); it != j.end()) c.run = parse_run(*it);

  if (auto it = j.find("backends"); it != j.end()) {
    check_keys(*it, {"user", "assistant"}, "backends");
    read(*it, "user", c.user_backend, "backends");
    read(*it, "assistant", c.assistant_backend, "backends");
  }
  if (auto it = j.find("endpoints"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("endpoints must be a JSON object");
    for (const auto& [name, value] : it->items()) c.endpoints[name] = parse_endpoint(value, name);
  }
  if (auto it = j.find("decision_constants"); it != j.end() && !it->is_null()) {
    check_keys(*it, {"delta_clar", "delta_multi", "extra_words"}, "decision_constants");
    DecisionConstants d;
    read(*it, "delta_clar", d.delta_clar, "decision_constants");
    read(*it, "delta_multi", d.delta_multi, "decision_constants");
    read(*it, "extra_words", d.extra_words, "decision_constants");
    c.decision_constants = d;
  }
  if (auto it = j.find("selection"); it != j.end()) {
    check_keys(*it, {"min_cluster_size", "coverage_policy", "dedup"}, "selection");
    read(*it, "min_cluster_size", c.selection.min_cluster_size, "selection");
    read(*it, "dedup", c.selection.dedup, "selection");
    std::string policy;
    read(*it, "coverage_policy", policy, "selection");
    if (!policy.empty()) {
      try {
        c.selection.coverage_policy = coverage_policy_from_string(policy);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (auto it = j.find("eval"); it != j.end()) {
    check_keys(*it, {"fixed_alpha", "fixed_beta", "tolerance_pct", "tolerance_words",
                     "include_invalid"},
               "eval");
    read(*it, "fixed_alpha", c.eval.fixed_alpha, "eval");
    read(*it, "fixed_beta", c.eval.fixed_beta, "eval");
    read(*it, "tolerance_pct", c.eval.tolerance_pct, "eval");
    read(*it, "tolerance_words", c.eval.tolerance_words, "eval");
    read(*it, "include_invalid", c.eval.include_invalid, "eval");
  }
  if (auto it = j.find("sweep"); it != j.end()) {
    check_keys(*it, {"enabled", "unseen_alpha", "unseen_beta"}, "sweep");
    read(*it, "enabled", c.sweep.enabled, "sweep");
    std::vector<double> values;
    if (it->contains("unseen_alpha") && !(*it)["unseen_alpha"].is_null()) {
      read(*it, "unseen_alpha", values, "sweep");
      c.sweep.unseen_alpha = values;
    }
    if (it->contains("unseen_beta") && !(*it)["unseen_beta"].is_null()) {
      values.clear();
      read(*it, "unseen_beta", values, "sweep");
      c.sweep.unseen_beta = values;
    }
  }
  check_backend_names(c);
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return pipeline_config_from_json(j, path.parent_path());
}

void check_backend_names(const PipelineConfig& config) {
  auto check = [&](const std::string& name, Role role) {
    if (name.rfind("remote:", 0) == 0) {
      const auto endpoint = name.substr(7);
      if (!config.endpoints.count(endpoint)) {
        throw ConfigError("backend '" + name + "' names an endpoint that is not configured");
      }
      return;
    }
    const bool known = role == Role::User ? scripted_user_from_name(name).has_value()
                                          : assistant_policy_from_name(name).has_value();
    if (!known) {
      throw ConfigError("unknown " + std::string(role == Role::User ? "user" : "assistant") +
                        " backend '" + name + "'");
    }
  };
  check(config.user_backend, Role::User);
  check(config.assistant_backend, Role::Assistant);
}

std::unique_ptr<AgentBackend> make_backend(const std::string& name, Role role,
                                           const PipelineConfig& config,
                                           std::shared_ptr<const KnowledgeTable> knowledge) {
  if (name.rfind("remote:", 0) == 0) {
    const auto endpoint = name.substr(7);
    auto it = config.endpoints.find(endpoint);
    if (it == config.endpoints.end()) {
      throw ConfigError("backend '" + name + "' names an endpoint that is not configured");
    }
    return std::make_unique<RemoteBackend>(endpoint, it->second);
  }
  if (role == Role::User) {
    if (auto user = scripted_user_from_name(name)) return std::make_unique<ScriptedUser>(*user);
  } else if (auto policy = assistant_policy_from_name(name)) {
    return std::make_unique<ScriptedAssistant>(*policy, std::move(knowledge));
  }
  throw ConfigError("unknown backend '" + name + "'");
}

}  // namespace groundplay
