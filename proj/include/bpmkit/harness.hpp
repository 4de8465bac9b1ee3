#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bpmkit/breakdown.hpp"
#include "bpmkit/generation.hpp"
#include "bpmkit/model.hpp"
#include "bpmkit/similarity.hpp"

namespace bpmkit {

// ---------------------------------------------------------------------------
// Evaluation harness: dataset layout, batch runs, summary statistics, and
// report emission.
// ---------------------------------------------------------------------------

struct DatasetEntry {
  std::string id;
  std::filesystem::path ground_truth_path;
  std::filesystem::path pages_dir;
  std::optional<std::filesystem::path> source_document;
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;     // valid entries, sorted by id
  std::vector<std::string> example_ids;  // reserved as prompt examples
  std::vector<std::string> warnings;

  bool is_example(const std::string& id) const {
    return std::find(example_ids.begin(), example_ids.end(), id) !=
           example_ids.end();
  }
  std::vector<DatasetEntry> example_entries() const {
    std::vector<DatasetEntry> out;
    for (const auto& id : example_ids) {
      for (const auto& entry : entries) {
        if (entry.id == id) out.push_back(entry);
      }
    }
    return out;
  }
  std::vector<DatasetEntry> evaluation_entries() const {
    std::vector<DatasetEntry> out;
    for (const auto& entry : entries) {
      if (!is_example(entry.id)) out.push_back(entry);
    }
    return out;
  }
};

namespace detail {

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline bool has_page_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) return false;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() &&
        media_type_for_extension(entry.path().extension().string())) {
      return true;
    }
  }
  return false;
}

}  // namespace detail

// Reads and validates a ground-truth model file.
inline CanonicalModel load_ground_truth(const std::filesystem::path& path) {
  ParseResult parsed = parse_model(detail::read_text_file(path));
  ValidationReport report = validate_model(parsed.model);
  if (!report.valid()) {
    const Issue& first = report.errors.front();
    throw std::runtime_error(path.string() + ": invalid model (" +
                             first.code + " on '" + first.element_id + "': " +
                             first.message + ")");
  }
  return std::move(parsed.model);
}

// Dataset layout: <root>/<id>/ground_truth.json plus <root>/<id>/pages/ with
// one image per page. <root>/examples.txt lists the ids reserved as prompt
// examples (default: the first three ids in sorted order). Entries with a
// missing/invalid ground truth or no pages are skipped with a warning.
inline DatasetIndex load_dataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw std::invalid_argument("dataset root not found: " + root.string());
  }
  DatasetIndex index;
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());

  for (const auto& dir : dirs) {
    const std::string id = dir.filename().string();
    DatasetEntry entry{id, dir / "ground_truth.json", dir / "pages", {}};
    if (!std::filesystem::is_regular_file(entry.ground_truth_path)) {
      index.warnings.push_back("skipping " + id + ": no ground_truth.json");
      continue;
    }
    if (!detail::has_page_images(entry.pages_dir)) {
      index.warnings.push_back("skipping " + id + ": no page images");
      continue;
    }
    try {
      load_ground_truth(entry.ground_truth_path);
    } catch (const std::exception& e) {
      index.warnings.push_back("skipping " + id + ": " + e.what());
      continue;
    }
    for (const auto& file : std::filesystem::directory_iterator(dir)) {
      if (file.is_regular_file() &&
          file.path().stem().string() == "document") {
        entry.source_document = file.path();
        break;
      }
    }
    index.entries.push_back(std::move(entry));
  }

  if (index.entries.empty()) {
    throw std::runtime_error("no usable dataset entries under " +
                             root.string());
  }

  const std::filesystem::path examples_file = root / "examples.txt";
  if (std::filesystem::is_regular_file(examples_file)) {
    std::istringstream in(detail::read_text_file(examples_file));
    std::string id;
    while (in >> id) {
      const bool known =
          std::any_of(index.entries.begin(), index.entries.end(),
                      [&](const DatasetEntry& e) { return e.id == id; });
      if (!known) {
        index.warnings.push_back("examples.txt names unknown entry '" + id +
                                 "'");
        continue;
      }
      if (!index.is_example(id)) index.example_ids.push_back(id);
    }
  } else {
    const std::size_t n = std::min<std::size_t>(3, index.entries.size());
    for (std::size_t i = 0; i < n; ++i) {
      index.example_ids.push_back(index.entries[i].id);
    }
  }
  return index;
}

// Builds the prompting strategy from the dataset's reserved example entries
// (pages + ground truth per example).
inline PromptStrategy make_strategy(const DatasetIndex& index, ShotKind kind) {
  PromptStrategy strategy;
  strategy.kind = kind;
  const std::size_t needed = shot_example_count(kind);
  const auto examples = index.example_entries();
  if (examples.size() < needed) {
    throw std::invalid_argument(
        to_string(kind) + " prompting needs " + std::to_string(needed) +
        " example entries, dataset reserves " +
        std::to_string(examples.size()));
  }
  for (std::size_t i = 0; i < needed; ++i) {
    PromptExample example;
    example.pages = load_document_pages(examples[i].pages_dir, examples[i].id);
    example.model = load_ground_truth(examples[i].ground_truth_path);
    strategy.examples.push_back(std::move(example));
  }
  return strategy;
}

enum class RecordStatus { scored, generation_failed, parse_failed };

inline std::string to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::scored: return "scored";
    case RecordStatus::generation_failed: return "generation-failed";
    case RecordStatus::parse_failed: return "parse-failed";
  }
  return "?";
}

inline RecordStatus record_status_from_string(const std::string& s) {
  if (s == "scored") return RecordStatus::scored;
  if (s == "generation-failed") return RecordStatus::generation_failed;
  if (s == "parse-failed") return RecordStatus::parse_failed;
  throw std::invalid_argument("unknown record status '" + s + "'");
}

// One evaluated document. report is present exactly when status is scored;
// trace_ref names the trace file a report directory would hold.
struct ScoreRecord {
  std::string id;
  ShotKind strategy = ShotKind::zero_shot;
  RecordStatus status = RecordStatus::scored;
  std::optional<ScoreReport> report;
  GenerationTrace trace;
  std::string trace_ref;
};

// Generates a model for one dataset entry and scores it against the ground
// truth. Never throws: every failure mode lands in the record's status.
inline ScoreRecord evaluate_pair(const DatasetEntry& entry,
                                 const PromptStrategy& strategy,
                                 const LlmClientConfig& llm_cfg,
                                 ChatClient& client, SimilarityScorer& scorer,
                                 double threshold) {
  ScoreRecord record;
  record.id = entry.id;
  record.strategy = strategy.kind;
  record.trace_ref = entry.id + ".trace.json";

  CanonicalModel ground_truth;
  DocumentPages pages;
  try {
    ground_truth = load_ground_truth(entry.ground_truth_path);
    pages = load_document_pages(entry.pages_dir, entry.id);
  } catch (const std::exception& e) {
    record.status = RecordStatus::generation_failed;
    record.trace.stage = GenerationStage::prompt_failed;
    record.trace.error = e.what();
    return record;
  }

  record.trace = generate_model(pages, strategy, llm_cfg, client);
  switch (record.trace.stage) {
    case GenerationStage::prompt_failed:
    case GenerationStage::transport_failed:
      record.status = RecordStatus::generation_failed;
      return record;
    case GenerationStage::extraction_failed:
    case GenerationStage::parse_failed:
      record.status = RecordStatus::parse_failed;
      return record;
    case GenerationStage::complete:
      break;
  }
  if (!record.trace.validation.valid()) {
    const Issue& first = record.trace.validation.errors.front();
    record.status = RecordStatus::parse_failed;
    record.trace.error = "generated model failed validation: " + first.code +
                         " on '" + first.element_id + "': " + first.message;
    return record;
  }

  try {
    record.report = score_models(breakdown(ground_truth),
                                 breakdown(*record.trace.parsed), scorer,
                                 threshold);
    record.status = RecordStatus::scored;
  } catch (const std::exception& e) {
    record.status = RecordStatus::generation_failed;
    record.trace.error = std::string("scoring failed: ") + e.what();
    record.report.reset();
  }
  return record;
}

// Evaluates every non-example entry with bounded parallelism. Records come
// back in dataset order regardless of completion order; a failing entry
// affects only its own record.
inline std::vector<ScoreRecord> run_batch(const DatasetIndex& index,
                                          const PromptStrategy& strategy,
                                          const LlmClientConfig& llm_cfg,
                                          const MatchingConfig& match_cfg,
                                          ChatClient& client,
                                          std::size_t parallelism = 1) {
  if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  const auto entries = index.evaluation_entries();
  std::vector<ScoreRecord> records(entries.size());
  if (entries.empty()) return records;

  const auto scorer = make_scorer(match_cfg.provider);
  auto evaluate_at = [&](std::size_t i) {
    try {
      records[i] = evaluate_pair(entries[i], strategy, llm_cfg, client,
                                 *scorer, match_cfg.threshold);
    } catch (const std::exception& e) {
      records[i].id = entries[i].id;
      records[i].strategy = strategy.kind;
      records[i].status = RecordStatus::generation_failed;
      records[i].trace.error = e.what();
    }
  };

  const std::size_t workers = std::min(parallelism, entries.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < entries.size(); ++i) evaluate_at(i);
    return records;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < entries.size();
           i = next.fetch_add(1)) {
        evaluate_at(i);
      }
    });
  }
  for (auto& thread : pool) thread.join();
  return records;
}

// ---------------------------------------------------------------------------
// Summary statistics
// ---------------------------------------------------------------------------

inline constexpr std::size_t kScoreRowCount = 16;
inline constexpr std::array<std::string_view, kScoreRowCount> kScoreRowNames =
    {"Overall",        "Tasks Overall",  "Task Names",   "Task Types",
     "Events Overall", "Event Names",    "Event Types",  "Gateways Overall",
     "Gateway Names",  "Gateway Types",  "Flows Overall", "Sequence Flows",
     "Message Flows",  "Lanes Overall",  "Lane Names",   "Lane Refs"};

// Value of one summary row in a single report; absent when that score was
// reported absent (zero weight on both sides).
inline std::optional<double> score_row_value(const ScoreReport& report,
                                             std::size_t row) {
  switch (row) {
    case 0: return report.overall;
    case 1: return report.category(Category::tasks);
    case 2: return report.element(Element::task_names);
    case 3: return report.element(Element::task_types);
    case 4: return report.category(Category::events);
    case 5: return report.element(Element::event_names);
    case 6: return report.element(Element::event_types);
    case 7: return report.category(Category::gateways);
    case 8: return report.element(Element::gateway_names);
    case 9: return report.element(Element::gateway_types);
    case 10: return report.category(Category::flows);
    case 11: return report.element(Element::sequence_flows);
    case 12: return report.element(Element::message_flows);
    case 13: return report.category(Category::lanes);
    case 14: return report.element(Element::lane_names);
    case 15: return report.element(Element::lane_refs);
    default: throw std::out_of_range("score row index");
  }
}

// Quantile by linear interpolation between closest order statistics:
// h = p·(n-1), interpolating between values[floor(h)] and values[floor(h)+1].
inline double quantile_linear(const std::vector<double>& sorted_values,
                              double p) {
  if (sorted_values.empty()) {
    throw std::invalid_argument("quantile of empty sample");
  }
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("p outside [0, 1]");
  const std::size_t n = sorted_values.size();
  if (n == 1) return sorted_values[0];
  const double h = p * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

struct StatRow {
  std::string name;
  std::size_t n = 0;  // contributing records
  std::optional<double> mean;
  std::optional<double> median;
  std::optional<double> q25;
  std::optional<double> q75;
};

struct SummaryStats {
  std::size_t total_records = 0;
  std::size_t scored_records = 0;
  std::vector<StatRow> rows;  // 16 rows, or empty when nothing scored
};

// Mean/median/quartiles per score row over the scored records. With zero
// scored records the stats are empty apart from the counts.
inline SummaryStats summarize(const std::vector<ScoreRecord>& records) {
  SummaryStats stats;
  stats.total_records = records.size();
  for (const auto& record : records) {
    if (record.status == RecordStatus::scored && record.report) {
      ++stats.scored_records;
    }
  }
  if (stats.scored_records == 0) return stats;

  for (std::size_t row = 0; row < kScoreRowCount; ++row) {
    StatRow out;
    out.name = std::string(kScoreRowNames[row]);
    std::vector<double> values;
    for (const auto& record : records) {
      if (record.status != RecordStatus::scored || !record.report) continue;
      if (auto value = score_row_value(*record.report, row)) {
        values.push_back(*value);
      }
    }
    out.n = values.size();
    if (!values.empty()) {
      double sum = 0.0;
      for (double v : values) sum += v;
      out.mean = sum / static_cast<double>(values.size());
      std::sort(values.begin(), values.end());
      out.q25 = quantile_linear(values, 0.25);
      out.median = quantile_linear(values, 0.5);
      out.q75 = quantile_linear(values, 0.75);
    }
    stats.rows.push_back(std::move(out));
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json record_to_json(const ScoreRecord& record,
                                             bool include_trace = false) {
  nlohmann::ordered_json j;
  j["id"] = record.id;
  j["strategy"] = to_string(record.strategy);
  j["status"] = to_string(record.status);
  if (!record.trace.error.empty()) j["error"] = record.trace.error;
  j["trace"] = record.trace_ref;
  j["report"] = record.report ? score_report_to_json(*record.report)
                              : nlohmann::ordered_json(nullptr);
  if (include_trace) j["generation"] = trace_to_json(record.trace);
  return j;
}

inline nlohmann::ordered_json records_to_json(
    const std::vector<ScoreRecord>& records) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& record : records) arr.push_back(record_to_json(record));
  return arr;
}

// Accepts either a bare record array or a full report object holding one
// under "records". Traces are not reconstructed.
inline std::vector<ScoreRecord> records_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_array() ? j : j.at("records");
  std::vector<ScoreRecord> records;
  for (const auto& item : arr) {
    ScoreRecord record;
    record.id = item.at("id").get<std::string>();
    record.strategy =
        shot_kind_from_string(item.at("strategy").get<std::string>());
    record.status =
        record_status_from_string(item.at("status").get<std::string>());
    if (item.contains("error") && item["error"].is_string()) {
      record.trace.error = item["error"].get<std::string>();
    }
    if (item.contains("trace") && item["trace"].is_string()) {
      record.trace_ref = item["trace"].get<std::string>();
    }
    if (item.contains("report") && !item["report"].is_null()) {
      record.report = score_report_from_json(item["report"]);
    }
    records.push_back(std::move(record));
  }
  return records;
}

inline nlohmann::ordered_json stats_to_json(const SummaryStats& stats) {
  nlohmann::ordered_json j;
  j["total_records"] = stats.total_records;
  j["scored_records"] = stats.scored_records;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : stats.rows) {
    auto opt = [](const std::optional<double>& v) {
      return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    };
    rows.push_back({{"name", row.name},
                    {"mean", opt(row.mean)},
                    {"median", opt(row.median)},
                    {"q25", opt(row.q25)},
                    {"q75", opt(row.q75)},
                    {"n", row.n}});
  }
  j["rows"] = std::move(rows);
  return j;
}

inline std::string report_to_json_text(const SummaryStats& stats,
                                       const std::vector<ScoreRecord>& records) {
  nlohmann::ordered_json j;
  j["summary"] = stats_to_json(stats);
  j["records"] = records_to_json(records);
  return j.dump(2) + "\n";
}

inline std::string format_stat_cell(const std::optional<double>& value) {
  if (!value) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *value);
  return buf;
}

inline std::string report_to_csv(const SummaryStats& stats) {
  std::string out = "score_name,mean,median,q25,q75,n\n";
  for (const auto& row : stats.rows) {
    out += row.name;
    out += ',' + format_stat_cell(row.mean);
    out += ',' + format_stat_cell(row.median);
    out += ',' + format_stat_cell(row.q25);
    out += ',' + format_stat_cell(row.q75);
    out += ',' + std::to_string(row.n) + '\n';
  }
  return out;
}

enum class ReportFormat { json, csv };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw std::invalid_argument("unknown report format '" + s + "'");
}

inline void write_report(const SummaryStats& stats,
                         const std::vector<ScoreRecord>& records,
                         ReportFormat format,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (format == ReportFormat::json ? report_to_json_text(stats, records)
                                       : report_to_csv(stats));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace bpmkit
