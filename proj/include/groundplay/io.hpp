#pragma once

// JSON and JSONL persistence for every record the pipeline writes.
// Writers emit one compact object per line with keys in a fixed order, so
// equal records always serialize to equal bytes. Readers accept exactly
// what the writers produce and report the offending line on failure.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "groundplay/core.hpp"
#include "groundplay/eval.hpp"
#include "groundplay/knowledge.hpp"
#include "groundplay/selection.hpp"

namespace groundplay {

using Json = nlohmann::ordered_json;

// Malformed or invalid input data.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

Json to_json(const QueryExample& example);
// Sets *had_ambiguous_field when the optional "ambiguous" key is present.
QueryExample query_example_from_json(const Json& j, bool* had_ambiguous_field = nullptr);

Json to_json(const Rollout& rollout);
Rollout rollout_from_json(const Json& j);

Json to_json(const ActionSequence& sequence);
ActionSequence action_sequence_from_json(const Json& j);

Json to_json(const SelectionResult& result);
SelectionResult selection_result_from_json(const Json& j);

Json to_json(const TrainingExample& example);
TrainingExample training_example_from_json(const Json& j);

Json to_json(const KnowledgeEntry& entry);
KnowledgeEntry knowledge_entry_from_json(const Json& j);

Json to_json(const MetricsReport& report);
Json to_json(const SteerabilityReport& report);
Json to_json(const OracleComparison& comparison);

// Calls fn for each non-blank line parsed as JSON. Errors thrown by fn or
// the parser are rethrown as DataError prefixed with "<source>:<line>: ".
void for_each_jsonl(std::istream& in, const std::string& source,
                    const std::function<void(const Json&, std::size_t line)>& fn);

std::vector<Rollout> read_rollouts(const std::filesystem::path& path);
std::vector<TrainingExample> read_training_examples(const std::filesystem::path& path);
std::vector<SelectionResult> read_selection_results(const std::filesystem::path& path);
KnowledgeTable read_knowledge(const std::filesystem::path& path);

class JsonlWriter {
public:
  // Throws std::runtime_error if the file cannot be created.
  explicit JsonlWriter(const std::filesystem::path& path);
  void write(const Json& record);
  void close();

private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace groundplay
