#pragma once

// Dataset loading, validation statistics and source-format conversion.
//
// Converter rules, AmbigQA-style records
//   {id, question, annotations: [{type, answer | qaPairs}], ...}:
//   - id, question            -> id, query_text
//   - the first annotation decides the interpretations:
//       singleAnswer          -> one interpretation (question, answer)
//       multipleQAs           -> one interpretation per qaPair (question, answer)
//   - ambiguous               -> more than one interpretation
//   - weights                 -> omitted (uniform)
//
// Converter rules, Pacific-style records
//   {uid | id, question, answer, table?, paragraphs?, req_clari?,
//    interpretations?: [{question, answer}]}:
//   - uid (or id), question   -> id, query_text
//   - table rows joined by " | ", then paragraph texts, one per line -> context
//   - interpretations present -> one interpretation each, else (question, answer)
//   - answers                 -> strings kept, numbers rendered shortest, lists flattened
//   - ambiguous               -> req_clari if present, else more than one interpretation
//
// Records that cannot be converted are reported with their line number and
// skipped; they are never silently dropped.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "groundplay/core.hpp"
#include "groundplay/io.hpp"

namespace groundplay {

struct DatasetLoad {
  std::vector<QueryExample> examples;
  // False when any record lacks the "ambiguous" field.
  bool labels_present = true;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
};

// Throws DataError for unreadable files and malformed lines; invariant
// violations are collected in errors, tagged with their line number.
DatasetLoad load_dataset(const std::filesystem::path& path);

std::vector<std::shared_ptr<const QueryExample>> share_examples(
    const std::vector<QueryExample>& examples);

struct DatasetStats {
  std::size_t queries = 0;
  std::size_t interpretations = 0;
  std::size_t ambiguous = 0;
  std::size_t with_context = 0;

  double ambiguous_fraction() const;
};

DatasetStats dataset_stats(const std::vector<QueryExample>& examples);

enum class SourceFormat { AmbigQA, Pacific };

SourceFormat source_format_from_string(std::string_view name);

QueryExample convert_ambigqa_record(const Json& record);
QueryExample convert_pacific_record(const Json& record);

struct ConversionReport {
  std::size_t converted = 0;
  std::vector<std::string> failures;
};

// Reads source JSONL records and writes QueryExample JSONL.
ConversionReport convert_dataset(SourceFormat format, const std::filesystem::path& input,
                                 const std::filesystem::path& output);

}  // namespace groundplay
