#include <iostream>

#include <CLI11.hpp>

#include "groundplay/commands.hpp"

namespace {

using groundplay::CommandOptions;

void add_common(CLI::App* cmd, CommandOptions& opts) {
  cmd->add_option("--config", opts.config_path, "pipeline config JSON");
  cmd->add_option("--out", opts.output_dir, "output directory");
  cmd->add_option("--dataset", opts.dataset_path, "QueryExample JSONL (overrides config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-play rollouts, selection and evaluation for clarifying assistants"};
  app.require_subcommand(1);

  CommandOptions opts;
  std::filesystem::path dataset;
  std::filesystem::path rollouts;
  std::string format;
  std::filesystem::path input;
  std::filesystem::path output;

  auto* validate = app.add_subcommand("validate-dataset", "check a QueryExample JSONL file");
  validate->add_option("dataset", dataset, "dataset path")->required();

  auto* rollout = app.add_subcommand("rollout", "generate scored rollouts");
  add_common(rollout, opts);
  rollout->add_option("--seed", opts.seed, "random seed");
  rollout->add_option("--parallel", opts.parallel, "worker count")->check(CLI::PositiveNumber);
  rollout->add_option("--backend-user", opts.user_backend, "scripted:<policy> or remote:<endpoint>");
  rollout->add_option("--backend-assistant", opts.assistant_backend,
                      "scripted:<policy> or remote:<endpoint>");

  auto* select = app.add_subcommand("select", "pick training rollouts per (query, pair)");
  add_common(select, opts);
  select->add_option("--rollouts", rollouts, "rollouts JSONL")->required();

  auto* eval = app.add_subcommand("eval", "compute metric, steerability and oracle reports");
  add_common(eval, opts);
  eval->add_option("--rollouts", rollouts, "rollouts JSONL")->required();

  auto* convert = app.add_subcommand("convert", "convert source records to QueryExample JSONL");
  convert->add_option("--format", format, "ambigqa or pacific")->required();
  convert->add_option("--input", input, "source JSONL")->required();
  convert->add_option("--output", output, "destination JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? groundplay::kExitOk : groundplay::kExitConfig;
  }

  if (validate->parsed()) return groundplay::cmd_validate_dataset(dataset, std::cout, std::cerr);
  if (convert->parsed()) return groundplay::cmd_convert(format, input, output, std::cout, std::cerr);

  groundplay::PipelineConfig config;
  try {
    config = groundplay::resolve_config(opts);
  } catch (const groundplay::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return groundplay::kExitConfig;
  }
  if (rollout->parsed()) return groundplay::cmd_rollout(config, std::cout, std::cerr);
  if (select->parsed()) return groundplay::cmd_select(rollouts, config, std::cout, std::cerr);
  return groundplay::cmd_eval(rollouts, config, std::cout, std::cerr);
}
