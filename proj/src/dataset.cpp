#include "groundplay/dataset.hpp"

#include <fstream>
#include <set>

#include "groundplay/eval.hpp"

namespace groundplay {

namespace {

std::string require_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw DataError(std::string("missing or empty string field '") + key + "'");
  }
  return it->get<std::string>();
}

void append_answers(const Json& value, std::vector<std::string>& out) {
  if (value.is_string()) {
    if (!value.get<std::string>().empty()) out.push_back(value.get<std::string>());
  } else if (value.is_number()) {
    out.push_back(format_number(value.get<double>()));
  } else if (value.is_array()) {
    for (const auto& v : value) append_answers(v, out);
  } else if (!value.is_null()) {
    throw DataError("unsupported answer value " + value.dump());
  }
}

std::vector<std::string> answers_of(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
  std::vector<std::string> out;
  append_answers(*it, out);
  if (out.empty()) throw DataError(std::string("field '") + key + "' holds no answer");
  return out;
}

}  // namespace

DatasetLoad load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  DatasetLoad load;
  std::set<std::string> ids;
  for_each_jsonl(in, path.string(), [&](const Json& j, std::size_t line) {
    bool has_label = false;
    QueryExample e = query_example_from_json(j, &has_label);
    load.labels_present = load.labels_present && has_label;
    const std::string where = path.string() + ":" + std::to_string(line) + ": ";
    auto issues = check_query_example(e);
    for (auto& msg : issues.errors) load.errors.push_back(where + msg);
    for (auto& msg : issues.warnings) load.warnings.push_back(where + msg);
    if (!ids.insert(e.id).second) load.errors.push_back(where + "duplicate query id '" + e.id + "'");
    load.examples.push_back(std::move(e));
  });
  if (load.examples.empty()) load.labels_present = false;
  return load;
}

std::vector<std::shared_ptr<const QueryExample>> share_examples(
    const std::vector<QueryExample>& examples) {
  std::vector<std::shared_ptr<const QueryExample>> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(std::make_shared<const QueryExample>(e));
  return out;
}

double DatasetStats::ambiguous_fraction() const {
  return queries == 0 ? 0.0 : static_cast<double>(ambiguous) / static_cast<double>(queries);
}

DatasetStats dataset_stats(const std::vector<QueryExample>& examples) {
  DatasetStats s;
  for (const auto& e : examples) {
    ++s.queries;
    s.interpretations += e.interpretations.size();
    s.ambiguous += e.ambiguous ? 1 : 0;
    s.with_context += (e.context && !e.context->empty()) ? 1 : 0;
  }
  return s;
}

SourceFormat source_format_from_string(std::string_view name) {
  if (name == "ambigqa") return SourceFormat::AmbigQA;
  if (name == "pacific") return SourceFormat::Pacific;
  throw std::invalid_argument("unknown source format '" + std::string(name) +
                              "' (expected ambigqa or pacific)");
}

QueryExample convert_ambigqa_record(const Json& record) {
  QueryExample e;
  e.id = require_string(record, "id");
  e.query_text = require_string(record, "question");
  auto annotations = record.find("annotations");
  if (annotations == record.end() || !annotations->is_array() || annotations->empty()) {
    throw DataError("record '" + e.id + "' has no annotations");
  }
  const Json& first = annotations->front();
  const std::string type = require_string(first, "type");
  if (type == "singleAnswer") {
    e.interpretations.push_back({e.query_text, answers_of(first, "answer")});
  } else if (type == "multipleQAs") {
    auto pairs = first.find("qaPairs");
    if (pairs == first.end() || !pairs->is_array() || pairs->empty()) {
      throw DataError("record '" + e.id + "' multipleQAs annotation has no qaPairs");
    }
    for (const auto& qa : *pairs) {
      e.interpretations.push_back({require_string(qa, "question"), answers_of(qa, "answer")});
    }
  } else {
    throw DataError("record '" + e.id + "' has unknown annotation type '" + type + "'");
  }
  e.ambiguous = e.interpretations.size() > 1;
  return e;
}

QueryExample convert_pacific_record(const Json& record) {
  QueryExample e;
  e.id = record.contains("uid") ? require_string(record, "uid") : require_string(record, "id");
  e.query_text = require_string(record, "question");

  std::string context;
  if (auto table = record.find("table"); table != record.end() && table->is_array()) {
    for (const auto& row : *table) {
      if (!row.is_array()) throw DataError("record '" + e.id + "' table rows must be arrays");
      std::string line;
      for (const auto& cell : row) {
        if (!line.empty()) line += " | ";
        line += cell.is_string() ? cell.get<std::string>() : cell.dump();
      }
      context += line + "\n";
    }
  }
  if (auto paragraphs = record.find("paragraphs"); paragraphs != record.end() && paragraphs->is_array()) {
    for (const auto& p : *paragraphs) {
      context += (p.is_object() ? require_string(p, "text") : p.get<std::string>()) + "\n";
    }
  }
  if (!context.empty()) {
    context.pop_back();
    e.context = std::move(context);
  }

  if (auto interps = record.find("interpretations"); interps != record.end() && interps->is_array() &&
                                                     !interps->empty()) {
    for (const auto& i : *interps) {
      e.interpretations.push_back({require_string(i, "question"), answers_of(i, "answer")});
    }
  } else {
    e.interpretations.push_back({e.query_text, answers_of(record, "answer")});
  }
  if (auto req = record.find("req_clari"); req != record.end() && req->is_boolean()) {
    e.ambiguous = req->get<bool>();
  } else {
    e.ambiguous = e.interpretations.size() > 1;
  }
  return e;
}

ConversionReport convert_dataset(SourceFormat format, const std::filesystem::path& input,
                                 const std::filesystem::path& output) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw DataError("cannot open " + input.string());
  JsonlWriter writer(output);
  ConversionReport report;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json record = Json::parse(text);
      QueryExample e = format == SourceFormat::AmbigQA ? convert_ambigqa_record(record)
                                                       : convert_pacific_record(record);
      const auto issues = check_query_example(e);
      if (!issues.ok()) throw DataError(issues.errors.front());
      writer.write(to_json(e));
      ++report.converted;
    } catch (const std::exception& ex) {
      report.failures.push_back(input.string() + ":" + std::to_string(line) + ": " + ex.what());
    }
  }
  writer.close();
  return report;
}

}  // namespace groundplay
