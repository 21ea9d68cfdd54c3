#include "groundplay/commands.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "groundplay/dataset.hpp"

namespace groundplay {

namespace {

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

// Loads the dataset named by the config; prints problems and returns nullopt
// when it is unusable.
std::optional<DatasetLoad> load_checked_dataset(const std::filesystem::path& path,
                                                std::ostream& err) {
  DatasetLoad load = load_dataset(path);
  for (const auto& w : load.warnings) err << "warning: " << w << '\n';
  for (const auto& e : load.errors) err << "error: " << e << '\n';
  if (!load.errors.empty()) return std::nullopt;
  if (load.examples.empty()) {
    err << "error: dataset " << path.string() << " is empty\n";
    return std::nullopt;
  }
  return load;
}

std::string percent(double fraction) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(3);
  s << fraction;
  return s.str();
}

// Runs fn, mapping the pipeline's exception types onto exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const BackendError& e) {
    err << "backend failure: " << e.what() << '\n';
    return kExitBackend;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace

PipelineConfig resolve_config(const CommandOptions& options) {
  PipelineConfig config =
      options.config_path ? load_pipeline_config(*options.config_path) : PipelineConfig{};
  if (options.seed) config.run.seed = *options.seed;
  if (options.output_dir) config.output_dir = *options.output_dir;
  if (options.parallel) config.run.max_parallel_rollouts = *options.parallel;
  if (options.user_backend) config.user_backend = *options.user_backend;
  if (options.assistant_backend) config.assistant_backend = *options.assistant_backend;
  if (options.dataset_path) {
    if (!std::filesystem::exists(*options.dataset_path)) {
      throw ConfigError("dataset does not exist: " + options.dataset_path->string());
    }
    config.dataset_path = *options.dataset_path;
  }
  config.run.validate();
  check_backend_names(config);
  return config;
}

int cmd_validate_dataset(const std::filesystem::path& path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!std::filesystem::exists(path)) {
      err << "error: dataset does not exist: " << path.string() << '\n';
      return static_cast<int>(kExitConfig);
    }
    DatasetLoad load = load_dataset(path);
    for (const auto& w : load.warnings) err << "warning: " << w << '\n';
    for (const auto& e : load.errors) err << "error: " << e << '\n';
    const DatasetStats stats = dataset_stats(load.examples);
    out << "queries: " << stats.queries << '\n'
        << "interpretations: " << stats.interpretations << '\n';
    if (load.labels_present) {
      out << "ambiguous: " << stats.ambiguous << '\n'
          << "ambiguous fraction: " << percent(stats.ambiguous_fraction()) << '\n';
    } else {
      out << "ambiguous: unlabeled\n";
    }
    out << "with context: " << stats.with_context << '\n'
        << "errors: " << load.errors.size() << '\n';
    return static_cast<int>(load.errors.empty() ? kExitOk : kExitData);
  });
}

int cmd_rollout(const PipelineConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!config.dataset_path) throw ConfigError("rollout needs a dataset (dataset_path or --dataset)");
    auto load = load_checked_dataset(*config.dataset_path, err);
    if (!load) return static_cast<int>(kExitData);

    auto knowledge = std::make_shared<KnowledgeTable>(
        config.knowledge_path ? read_knowledge(*config.knowledge_path)
                              : KnowledgeTable::derive(load->examples));
    if (config.decision_constants) knowledge->override_constants(*config.decision_constants);

    const TemplateStore templates = config.templates_dir
                                        ? TemplateStore::load_directory(*config.templates_dir)
                                        : TemplateStore::builtin();
    auto user = make_backend(config.user_backend, Role::User, config, knowledge);
    auto assistant = make_backend(config.assistant_backend, Role::Assistant, config, knowledge);

    RunConfig run = config.run;
    if (config.sweep.enabled && run.fixed_coefficients.empty()) {
      run.fixed_coefficients = sweep_pairs(config.sweep_config());
    }
    run.validate();

    ensure_dir(config.output_dir);
    const auto path = config.output_dir / "rollouts.jsonl";
    JsonlWriter writer(path);
    const auto dataset = share_examples(load->examples);
    err << "rollout: " << user->descriptor() << " / " << assistant->descriptor() << ", "
        << dataset.size() << " queries\n";
    const BatchSummary summary = run_batch(
        dataset, run, *user, *assistant, templates,
        [&](const Rollout& r) { writer.write(to_json(r)); }, &err);
    writer.close();

    out << "planned: " << summary.planned << '\n'
        << "written: " << summary.written << '\n'
        << "valid: " << summary.valid() << '\n';
    for (const auto& [reason, count] : summary.by_reason) {
      out << "  " << to_string(reason) << ": " << count << '\n';
    }
    out << "output: " << path.string() << '\n';
    if (summary.aborted) {
      err << "error: batch aborted: " << summary.abort_message << '\n';
      return static_cast<int>(kExitData);
    }
    auto parse_failures = summary.by_reason.find(VerdictReason::ParseFailure);
    if (summary.written > 0 && parse_failures != summary.by_reason.end() &&
        parse_failures->second == summary.written) {
      err << "error: every rollout failed to get a usable backend reply\n";
      return static_cast<int>(kExitBackend);
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_select(const std::filesystem::path& rollouts_path, const PipelineConfig& config,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::vector<Rollout> rollouts = read_rollouts(rollouts_path);

    QueryInfoMap info;
    if (config.dataset_path) {
      auto load = load_checked_dataset(*config.dataset_path, err);
      if (!load) return static_cast<int>(kExitData);
      info = make_query_info(load->examples, load->labels_present);
    }
    std::map<std::string, std::size_t, std::less<>> counts;
    for (const auto& [id, qi] : info) counts.emplace(id, qi.interpretation_count);

    const auto clusters = cluster_rollouts(rollouts, config.selection.min_cluster_size, counts);
    const RolloutIndex index = index_rollouts(rollouts);

    ensure_dir(config.output_dir);
    JsonlWriter selections(config.output_dir / "selections.jsonl");
    std::vector<TrainingExample> examples;
    std::size_t skipped = 0;
    std::size_t under_supported = 0;
    for (const auto& cluster : clusters) {
      auto it = info.find(cluster.query_id);
      const std::vector<double> weights = it == info.end() ? std::vector<double>{} : it->second.weights;
      const SelectionResult result =
          select_cluster(cluster, weights, config.selection.coverage_policy);
      selections.write(to_json(result));
      under_supported += result.under_supported ? 1 : 0;
      if (!result.best_sequence) {
        ++skipped;
        err << "skipped " << cluster.query_id << " (alpha=" << format_number(cluster.coefficients.alpha)
            << ", beta=" << format_number(cluster.coefficients.beta)
            << "): no sequence eligible under " << to_string(config.selection.coverage_policy)
            << '\n';
        continue;
      }
      auto emitted = emit_training_examples(result, index);
      examples.insert(examples.end(), std::make_move_iterator(emitted.begin()),
                      std::make_move_iterator(emitted.end()));
    }
    selections.close();

    const std::size_t before_dedup = examples.size();
    if (config.selection.dedup) examples = dedup_training_examples(std::move(examples));
    JsonlWriter training(config.output_dir / "training.jsonl");
    for (const auto& e : examples) training.write(to_json(e));
    training.close();

    out << "rollouts: " << rollouts.size() << '\n'
        << "clusters: " << clusters.size() << '\n'
        << "skipped: " << skipped << '\n'
        << "under-supported: " << under_supported << '\n'
        << "training examples: " << examples.size();
    if (config.selection.dedup) out << " (" << before_dedup - examples.size() << " duplicates dropped)";
    out << '\n' << "output: " << config.output_dir.string() << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_eval(const std::filesystem::path& rollouts_path, const PipelineConfig& config,
             std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::vector<Rollout> rollouts = read_rollouts(rollouts_path);
    QueryInfoMap info;
    bool has_labels = false;
    if (config.dataset_path) {
      auto load = load_checked_dataset(*config.dataset_path, err);
      if (!load) return static_cast<int>(kExitData);
      has_labels = load->labels_present;
      info = make_query_info(load->examples, has_labels);
    } else {
      err << "warning: no dataset given; weights are uniform and strata are unavailable\n";
    }
    if (config.dataset_path && !has_labels) {
      err << "warning: ambiguity labels missing; stratified reports omitted\n";
    }

    const MetricsOptions options{config.eval.include_invalid};
    std::vector<MetricsReport> aggregate;
    for (Stratum s : {Stratum::All, Stratum::Ambiguous, Stratum::Unambiguous}) {
      if (auto report = aggregate_metrics(rollouts, s, info, options)) {
        aggregate.push_back(*report);
      } else if (s == Stratum::All || has_labels) {
        err << "warning: stratum " << to_string(s) << " has no rollouts; report omitted\n";
      }
    }
    const CoefficientMetrics by_pair = metrics_by_coefficient(rollouts, info, options);

    ensure_dir(config.output_dir);
    const auto& dir = config.output_dir;

    std::vector<MetricsReport> all_rows = aggregate;
    all_rows.insert(all_rows.end(), by_pair.per_pair.begin(), by_pair.per_pair.end());
    all_rows.insert(all_rows.end(), by_pair.alpha_marginals.begin(), by_pair.alpha_marginals.end());
    all_rows.insert(all_rows.end(), by_pair.beta_marginals.begin(), by_pair.beta_marginals.end());
    std::ostringstream csv;
    write_metrics_csv(csv, all_rows);
    write_text_file(dir / "metrics.csv", csv.str());

    auto to_array = [](const std::vector<MetricsReport>& reports) {
      Json a = Json::array();
      for (const auto& r : reports) a.push_back(to_json(r));
      return a;
    };

    Json distributions = Json::object();
    std::ostringstream dist_csv;
    dist_csv << "stratum,sequence,fraction\n";
    for (Stratum s : {Stratum::All, Stratum::Ambiguous, Stratum::Unambiguous}) {
      if (s != Stratum::All && !has_labels) continue;
      Json entries = Json::array();
      for (const auto& [seq, fraction] : action_distribution(rollouts, s, info, options)) {
        entries.push_back({{"sequence", seq.letters()}, {"fraction", fraction}});
        dist_csv << to_string(s) << ',' << seq.letters() << ',' << format_number(fraction) << '\n';
      }
      distributions[std::string(to_string(s))] = std::move(entries);
    }
    write_text_file(dir / "action_distribution.csv", dist_csv.str());

    const auto oracle = compare_with_oracle(rollouts, info);
    bool oracle_dominates = true;
    JsonlWriter oracle_out(dir / "oracle.jsonl");
    for (const auto& c : oracle) {
      oracle_out.write(to_json(c));
      oracle_dominates = oracle_dominates && c.oracle_ge_policy;
    }
    oracle_out.close();

    Json metrics;
    metrics["aggregate"] = to_array(aggregate);
    metrics["per_pair"] = to_array(by_pair.per_pair);
    metrics["alpha_marginals"] = to_array(by_pair.alpha_marginals);
    metrics["beta_marginals"] = to_array(by_pair.beta_marginals);
    metrics["action_distribution"] = std::move(distributions);
    metrics["oracle_pairs"] = oracle.size();
    metrics["oracle_ge_policy"] = oracle_dominates;
    write_text_file(dir / "metrics.json", metrics.dump(2) + "\n");

    try {
      const SteerabilityReport steer = steerability_check(by_pair.per_pair, config.steerability());
      std::ostringstream steer_csv;
      write_steerability_csv(steer_csv, steer);
      write_text_file(dir / "steerability.csv", steer_csv.str());
      write_text_file(dir / "steerability.json", to_json(steer).dump(2) + "\n");
      for (const auto& s : steer.series) {
        out << "steerability " << s.metric << " vs " << s.swept << ": "
            << (s.monotone_nonincreasing ? "non-increasing" : "NOT non-increasing") << '\n';
      }
    } catch (const std::invalid_argument& e) {
      err << "warning: steerability report omitted: " << e.what() << '\n';
    }

    for (const auto& r : aggregate) {
      out << to_string(r.stratum) << ": n=" << r.n_rollouts
          << " reward=" << format_number(r.avg_reward)
          << " f1=" << format_number(r.avg_f1_percent)
          << " clar%=" << format_number(r.pct_clarify)
          << " ma%=" << format_number(r.pct_multi_answer)
          << " words=" << format_number(r.avg_answer_words) << '\n';
    }
    out << "oracle >= policy on all " << oracle.size()
        << " (query, pair) cells: " << (oracle_dominates ? "yes" : "NO") << '\n'
        << "output: " << dir.string() << '\n';
    if (!oracle_dominates) err << "error: oracle below policy on some cell\n";
    return static_cast<int>(oracle_dominates ? kExitOk : kExitData);
  });
}

int cmd_convert(const std::string& format, const std::filesystem::path& input,
                const std::filesystem::path& output, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SourceFormat source;
    try {
      source = source_format_from_string(format);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (!std::filesystem::exists(input)) throw ConfigError("input does not exist: " + input.string());
    if (output.has_parent_path()) ensure_dir(output.parent_path());
    const ConversionReport report = convert_dataset(source, input, output);
    for (const auto& f : report.failures) err << "unconverted: " << f << '\n';
    out << "converted: " << report.converted << '\n'
        << "failed: " << report.failures.size() << '\n'
        << "output: " << output.string() << '\n';
    return static_cast<int>(report.failures.empty() ? kExitOk : kExitData);
  });
}

}  // namespace groundplay
