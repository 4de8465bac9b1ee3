#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <bpmkit/harness.hpp>

#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace bpmkit;
namespace fs = std::filesystem;

namespace {

const std::string kFixtureDir = BPMKIT_FIXTURE_DIR;
const fs::path kDatasetDir = fs::path(kFixtureDir) / "dataset";
const fs::path kReplayDir = fs::path(kFixtureDir) / "replay";

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() /
               (name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Copies selected dataset entries into a scratch root, optionally without
// the examples.txt marker.
fs::path copy_dataset(const std::string& name,
                      const std::vector<std::string>& ids,
                      bool with_examples_file) {
  const fs::path root = temp_dir(name);
  for (const auto& id : ids) {
    fs::copy(kDatasetDir / id, root / id, fs::copy_options::recursive);
  }
  if (with_examples_file) {
    fs::copy_file(kDatasetDir / "examples.txt", root / "examples.txt");
  }
  return root;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

ScoreRecord synthetic_record(const std::string& id, double overall) {
  ScoreRecord r;
  r.id = id;
  r.strategy = ShotKind::one_shot;
  r.status = RecordStatus::scored;
  ScoreReport report;
  report.overall = overall;
  r.report = report;
  r.trace_ref = id + ".trace.json";
  return r;
}

std::vector<std::string> record_ids(const std::vector<ScoreRecord>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.id);
  return out;
}

}  // namespace

TEST_CASE("dataset indexing matches the bundled manifest", "[harness]") {
  const DatasetIndex index = load_dataset(kDatasetDir);
  const auto manifest = nlohmann::json::parse(
      detail::read_text_file(fs::path(kFixtureDir) / "dataset_manifest.json"));

  CHECK(index.warnings.empty());
  std::vector<std::string> ids;
  for (const auto& entry : index.entries) ids.push_back(entry.id);
  CHECK(ids == manifest["ids"].get<std::vector<std::string>>());
  CHECK(index.example_ids ==
        manifest["examples"].get<std::vector<std::string>>());

  CHECK(index.is_example("m01"));
  CHECK_FALSE(index.is_example("m04"));
  const auto evals = index.evaluation_entries();
  REQUIRE(evals.size() == 3);
  CHECK(evals[0].id == "m04");
  CHECK(evals[2].id == "m06");
  for (const auto& entry : index.entries) {
    CHECK(fs::is_regular_file(entry.ground_truth_path));
    CHECK(fs::is_directory(entry.pages_dir));
    CHECK_FALSE(entry.source_document.has_value());
  }
}

TEST_CASE("without examples.txt the first three ids become examples",
          "[harness]") {
  const fs::path root =
      copy_dataset("bpmkit-ds-default", {"m01", "m02", "m03", "m04"}, false);
  const DatasetIndex index = load_dataset(root);
  CHECK(index.example_ids == std::vector<std::string>{"m01", "m02", "m03"});
  REQUIRE(index.evaluation_entries().size() == 1);
  CHECK(index.evaluation_entries()[0].id == "m04");

  // Tiny datasets reserve everything they have.
  const fs::path tiny = copy_dataset("bpmkit-ds-tiny", {"m01", "m02"}, false);
  const DatasetIndex tiny_index = load_dataset(tiny);
  CHECK(tiny_index.example_ids == std::vector<std::string>{"m01", "m02"});
  CHECK(tiny_index.evaluation_entries().empty());
  fs::remove_all(root);
  fs::remove_all(tiny);
}

TEST_CASE("broken entries are skipped with a warning", "[harness]") {
  const fs::path root =
      copy_dataset("bpmkit-ds-broken", {"m01", "m02", "m03", "m04"}, false);
  // No pages at all.
  fs::remove_all(root / "m02" / "pages");
  // Ground truth with a dangling flow endpoint.
  write_file(root / "m03" / "ground_truth.json",
             R"({"tasks": [{"id": "0", "name": "A", "type": "task"}],
                 "sequenceFlows": [{"id": "1", "source": "0", "target": "9"}]})");
  // Unknown id in examples.txt.
  write_file(root / "examples.txt", "m01\nmXX\n");
  // A source document file is picked up when present.
  write_file(root / "m04" / "document.pdf", "%PDF-1.4 stub");

  const DatasetIndex index = load_dataset(root);
  std::vector<std::string> ids;
  for (const auto& entry : index.entries) ids.push_back(entry.id);
  CHECK(ids == std::vector<std::string>{"m01", "m04"});
  CHECK(index.example_ids == std::vector<std::string>{"m01"});
  REQUIRE(index.warnings.size() == 3);
  CHECK(index.warnings[0].find("m02") != std::string::npos);
  CHECK(index.warnings[0].find("page images") != std::string::npos);
  CHECK(index.warnings[1].find("m03") != std::string::npos);
  CHECK(index.warnings[1].find("DANGLING_REF") != std::string::npos);
  CHECK(index.warnings[2].find("mXX") != std::string::npos);
  REQUIRE(index.entries[1].source_document.has_value());
  CHECK(index.entries[1].source_document->filename() == "document.pdf");
  fs::remove_all(root);
}

TEST_CASE("unusable dataset roots fail loudly", "[harness]") {
  CHECK_THROWS_AS(load_dataset(fs::path("/no/such/dataset")),
                  std::invalid_argument);
  const fs::path root = temp_dir("bpmkit-ds-empty");
  CHECK_THROWS_AS(load_dataset(root), std::runtime_error);
  fs::create_directories(root / "only-junk");
  CHECK_THROWS_AS(load_dataset(root), std::runtime_error);
  fs::remove_all(root);
}

TEST_CASE("prompt strategies come from the reserved examples", "[harness]") {
  const DatasetIndex index = load_dataset(kDatasetDir);

  const PromptStrategy zero = make_strategy(index, ShotKind::zero_shot);
  CHECK(zero.examples.empty());

  const PromptStrategy one = make_strategy(index, ShotKind::one_shot);
  REQUIRE(one.examples.size() == 1);
  CHECK(one.examples[0].pages.doc_id == "m01");
  CHECK(one.examples[0].pages.pages.size() == 2);
  CHECK_FALSE(one.examples[0].model.tasks.empty());

  const PromptStrategy few = make_strategy(index, ShotKind::few_shot);
  REQUIRE(few.examples.size() == 3);
  CHECK(few.examples[2].pages.doc_id == "m03");

  DatasetIndex starved = index;
  starved.example_ids = {"m01"};
  CHECK_THROWS_AS(make_strategy(starved, ShotKind::few_shot),
                  std::invalid_argument);
}

TEST_CASE("a single pair evaluation lands in the right status", "[harness]") {
  const DatasetIndex index = load_dataset(kDatasetDir);
  const PromptStrategy strategy = make_strategy(index, ShotKind::one_shot);
  const LlmClientConfig llm_cfg;
  auto trigram = std::make_shared<TrigramProvider>();
  EmbeddingScorer scorer(trigram);
  ReplayChatClient replay(kReplayDir);

  const auto entry_by_id = [&](const std::string& id) {
    for (const auto& e : index.entries) {
      if (e.id == id) return e;
    }
    throw std::logic_error("missing entry " + id);
  };

  SECTION("an exact reproduction scores a perfect overall") {
    const ScoreRecord r = evaluate_pair(entry_by_id("m04"), strategy, llm_cfg,
                                        replay, scorer, 0.7);
    CHECK(r.id == "m04");
    CHECK(r.status == RecordStatus::scored);
    REQUIRE(r.report.has_value());
    CHECK(r.report->overall == 1.0);
    CHECK(r.trace.stage == GenerationStage::complete);
    CHECK(r.trace_ref == "m04.trace.json");
  }

  SECTION("a refusal without JSON is a parse failure") {
    const ScoreRecord r = evaluate_pair(entry_by_id("m05"), strategy, llm_cfg,
                                        replay, scorer, 0.7);
    CHECK(r.status == RecordStatus::parse_failed);
    CHECK(r.trace.stage == GenerationStage::extraction_failed);
    CHECK_FALSE(r.report.has_value());
  }

  SECTION("an imperfect reproduction scores below one") {
    const ScoreRecord r = evaluate_pair(entry_by_id("m06"), strategy, llm_cfg,
                                        replay, scorer, 0.7);
    CHECK(r.status == RecordStatus::scored);
    REQUIRE(r.report.has_value());
    CHECK_THAT(r.report->overall,
               Catch::Matchers::WithinAbs(8.0 / 9.0, 1e-12));
  }

  SECTION("a parsed model with broken references is a parse failure") {
    DatasetEntry bad = entry_by_id("m04");
    bad.id = "docbad";  // keyed to the canned response with a dangling ref
    ReplayChatClient unit_replay(fs::path(kFixtureDir) / "replay_unit");
    const ScoreRecord r =
        evaluate_pair(bad, strategy, llm_cfg, unit_replay, scorer, 0.7);
    CHECK(r.status == RecordStatus::parse_failed);
    CHECK(r.trace.stage == GenerationStage::complete);
    CHECK(r.trace.error.find("failed validation") != std::string::npos);
    CHECK(r.trace.error.find("DANGLING_REF") != std::string::npos);
    CHECK_FALSE(r.report.has_value());
  }

  SECTION("a missing canned response is a generation failure") {
    DatasetEntry orphan = entry_by_id("m04");
    orphan.id = "orphan";
    const ScoreRecord r =
        evaluate_pair(orphan, strategy, llm_cfg, replay, scorer, 0.7);
    CHECK(r.status == RecordStatus::generation_failed);
    CHECK(r.trace.stage == GenerationStage::transport_failed);
    CHECK(r.trace.error.find("no recorded response") != std::string::npos);
  }

  SECTION("an unreadable ground truth is a generation failure") {
    DatasetEntry gone = entry_by_id("m04");
    gone.ground_truth_path = "/no/such/ground_truth.json";
    const ScoreRecord r =
        evaluate_pair(gone, strategy, llm_cfg, replay, scorer, 0.7);
    CHECK(r.status == RecordStatus::generation_failed);
    CHECK(r.trace.stage == GenerationStage::prompt_failed);
  }
}

TEST_CASE("batch runs preserve dataset order and isolate failures",
          "[harness]") {
  const DatasetIndex index = load_dataset(kDatasetDir);
  const PromptStrategy strategy = make_strategy(index, ShotKind::one_shot);
  const LlmClientConfig llm_cfg;
  const MatchingConfig match_cfg;  // lexical fallback at 0.7
  ReplayChatClient replay(kReplayDir);

  const auto records = run_batch(index, strategy, llm_cfg, match_cfg, replay);
  REQUIRE(records.size() == 3);
  CHECK(record_ids(records) ==
        std::vector<std::string>{"m04", "m05", "m06"});
  CHECK(records[0].status == RecordStatus::scored);
  CHECK(records[1].status == RecordStatus::parse_failed);
  CHECK(records[2].status == RecordStatus::scored);
  CHECK(records[0].report->overall == 1.0);

  SECTION("parallelism changes nothing observable") {
    const auto parallel =
        run_batch(index, strategy, llm_cfg, match_cfg, replay, 4);
    CHECK(records_to_json(parallel).dump() == records_to_json(records).dump());
    const auto again =
        run_batch(index, strategy, llm_cfg, match_cfg, replay, 4);
    CHECK(records_to_json(again).dump() == records_to_json(records).dump());
    CHECK_THROWS_AS(
        run_batch(index, strategy, llm_cfg, match_cfg, replay, 0),
        std::invalid_argument);
  }

  SECTION("one missing response only fails its own record") {
    const fs::path partial = temp_dir("bpmkit-partial-replay");
    fs::copy_file(kReplayDir / "m04.json", partial / "m04.json");
    fs::copy_file(kReplayDir / "m06.json", partial / "m06.json");
    ReplayChatClient partial_replay(partial);
    const auto partial_records =
        run_batch(index, strategy, llm_cfg, match_cfg, partial_replay, 2);
    REQUIRE(partial_records.size() == 3);
    CHECK(partial_records[0].status == RecordStatus::scored);
    CHECK(partial_records[1].status == RecordStatus::generation_failed);
    CHECK(partial_records[2].status == RecordStatus::scored);
    fs::remove_all(partial);
  }
}

TEST_CASE("summary statistics", "[harness]") {
  SECTION("sixteen rows, named and ordered") {
    const auto stats = summarize({synthetic_record("a", 0.5)});
    CHECK(stats.total_records == 1);
    CHECK(stats.scored_records == 1);
    REQUIRE(stats.rows.size() == kScoreRowCount);
    for (std::size_t i = 0; i < kScoreRowCount; ++i) {
      CHECK(stats.rows[i].name == std::string(kScoreRowNames[i]));
    }
    CHECK(stats.rows[0].name == "Overall");
    CHECK(stats.rows[15].name == "Lane Refs");
  }

  SECTION("a single value is its own mean and quartiles") {
    const auto stats = summarize({synthetic_record("a", 0.5)});
    const StatRow& overall = stats.rows[0];
    CHECK(overall.n == 1);
    CHECK(overall.mean == 0.5);
    CHECK(overall.median == 0.5);
    CHECK(overall.q25 == 0.5);
    CHECK(overall.q75 == 0.5);
    // The synthetic report has no element scores, so every other row is
    // empty but still present.
    CHECK(stats.rows[1].n == 0);
    CHECK_FALSE(stats.rows[1].mean.has_value());
  }

  SECTION("quartiles interpolate linearly") {
    const auto stats = summarize(
        {synthetic_record("a", 0.0), synthetic_record("b", 1.0)});
    const StatRow& overall = stats.rows[0];
    CHECK(overall.mean == 0.5);
    CHECK(overall.median == 0.5);
    CHECK(overall.q25 == 0.25);
    CHECK(overall.q75 == 0.75);
    CHECK(overall.q25 == oracle::quantile({0.0, 1.0}, 0.25));
    CHECK(overall.q75 == oracle::quantile({0.0, 1.0}, 0.75));
  }

  SECTION("failed records count in totals but not in scores") {
    ScoreRecord failed;
    failed.id = "x";
    failed.status = RecordStatus::parse_failed;
    const auto stats = summarize({synthetic_record("a", 0.25),
                                  failed,
                                  synthetic_record("b", 0.75)});
    CHECK(stats.total_records == 3);
    CHECK(stats.scored_records == 2);
    CHECK(stats.rows[0].n == 2);
    CHECK(stats.rows[0].mean == 0.5);
  }

  SECTION("nothing scored leaves only the counts") {
    ScoreRecord failed;
    failed.id = "x";
    failed.status = RecordStatus::generation_failed;
    const auto stats = summarize({failed});
    CHECK(stats.total_records == 1);
    CHECK(stats.scored_records == 0);
    CHECK(stats.rows.empty());
    CHECK(summarize({}).rows.empty());
  }

  SECTION("every row agrees with reference statistics") {
    std::mt19937 rng(20240823);
    auto trigram = std::make_shared<TrigramProvider>();
    EmbeddingScorer scorer(trigram);
    std::vector<ScoreRecord> records;
    for (int i = 0; i < 12; ++i) {
      ScoreRecord r;
      r.id = "r" + std::to_string(i);
      r.status = RecordStatus::scored;
      r.report = score_models(testgen::random_breakdown(rng),
                              testgen::random_breakdown(rng), scorer, 0.7);
      records.push_back(std::move(r));
    }
    const auto stats = summarize(records);
    REQUIRE(stats.rows.size() == kScoreRowCount);
    for (std::size_t row = 0; row < kScoreRowCount; ++row) {
      std::vector<double> values;
      for (const auto& r : records) {
        if (auto v = score_row_value(*r.report, row)) values.push_back(*v);
      }
      const StatRow& got = stats.rows[row];
      REQUIRE(got.n == values.size());
      if (values.empty()) {
        CHECK_FALSE(got.mean.has_value());
        continue;
      }
      CHECK_THAT(*got.mean,
                 Catch::Matchers::WithinAbs(oracle::mean(values), 1e-12));
      CHECK_THAT(*got.median,
                 Catch::Matchers::WithinAbs(oracle::quantile(values, 0.5),
                                            1e-12));
      CHECK_THAT(*got.q25,
                 Catch::Matchers::WithinAbs(oracle::quantile(values, 0.25),
                                            1e-12));
      CHECK_THAT(*got.q75,
                 Catch::Matchers::WithinAbs(oracle::quantile(values, 0.75),
                                            1e-12));
      CHECK(*got.q25 <= *got.median);
      CHECK(*got.median <= *got.q75);
    }
  }
}

TEST_CASE("quantiles by linear interpolation", "[harness]") {
  CHECK_THROWS_AS(quantile_linear({}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(quantile_linear({1.0}, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(quantile_linear({1.0}, -0.1), std::invalid_argument);
  CHECK(quantile_linear({7.0}, 0.99) == 7.0);
  CHECK(quantile_linear({1.0, 2.0, 3.0, 4.0}, 0.0) == 1.0);
  CHECK(quantile_linear({1.0, 2.0, 3.0, 4.0}, 1.0) == 4.0);
  CHECK(quantile_linear({1.0, 2.0, 3.0, 4.0}, 0.25) == 1.75);
  CHECK(quantile_linear({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);

  std::mt19937 rng(20240824);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> size(1, 30);
  for (int round = 0; round < 100; ++round) {
    std::vector<double> values(size(rng));
    for (auto& v : values) v = value(rng);
    std::sort(values.begin(), values.end());
    const double p = value(rng);
    CHECK_THAT(quantile_linear(values, p),
               Catch::Matchers::WithinAbs(oracle::quantile(values, p), 1e-12));
  }
}

TEST_CASE("report serialization round-trips", "[harness]") {
  const DatasetIndex index = load_dataset(kDatasetDir);
  const PromptStrategy strategy = make_strategy(index, ShotKind::one_shot);
  ReplayChatClient replay(kReplayDir);
  const auto records =
      run_batch(index, strategy, LlmClientConfig{}, MatchingConfig{}, replay);

  SECTION("record array") {
    const auto back = records_from_json(records_to_json(records));
    REQUIRE(back.size() == records.size());
    CHECK(records_to_json(back).dump() == records_to_json(records).dump());
    CHECK(back[1].status == RecordStatus::parse_failed);
    CHECK(back[1].trace.error == records[1].trace.error);
    REQUIRE(back[2].report.has_value());
    CHECK(back[2].report->overall == records[2].report->overall);
  }

  SECTION("full report object") {
    const std::string text = report_to_json_text(summarize(records), records);
    const auto parsed = nlohmann::json::parse(text);
    CHECK(parsed["summary"]["total_records"] == 3);
    CHECK(parsed["summary"]["scored_records"] == 2);
    CHECK(parsed["summary"]["rows"][0]["name"] == "Overall");
    const auto back = records_from_json(parsed);
    CHECK(records_to_json(back).dump() == records_to_json(records).dump());
  }

  SECTION("status names round-trip") {
    for (RecordStatus s : {RecordStatus::scored, RecordStatus::generation_failed,
                           RecordStatus::parse_failed}) {
      CHECK(record_status_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(record_status_from_string("meh"), std::invalid_argument);
  }
}

TEST_CASE("CSV emission", "[harness]") {
  SECTION("no scored records means just the header") {
    CHECK(report_to_csv(summarize({})) == "score_name,mean,median,q25,q75,n\n");
  }

  SECTION("values use six decimals and empty rows keep their cells") {
    const auto stats = summarize(
        {synthetic_record("a", 0.0), synthetic_record("b", 1.0)});
    const std::string csv = report_to_csv(stats);
    CHECK(csv.find("score_name,mean,median,q25,q75,n\n") == 0);
    CHECK(csv.find("Overall,0.500000,0.500000,0.250000,0.750000,2\n") !=
          std::string::npos);
    // Rows with no contributing values keep empty cells but a zero count.
    CHECK(csv.find("Task Names,,,,,0\n") != std::string::npos);
  }
}

TEST_CASE("report files land on disk or fail loudly", "[harness]") {
  const std::vector<ScoreRecord> records = {synthetic_record("a", 0.25)};
  const auto stats = summarize(records);
  const fs::path dir = temp_dir("bpmkit-report-out");

  write_report(stats, records, ReportFormat::json, dir / "report.json");
  const auto parsed =
      nlohmann::json::parse(detail::read_text_file(dir / "report.json"));
  CHECK(parsed["records"][0]["id"] == "a");
  CHECK(parsed["summary"]["rows"][0]["mean"] == 0.25);

  write_report(stats, records, ReportFormat::csv, dir / "report.csv");
  const std::string csv = detail::read_text_file(dir / "report.csv");
  CHECK(csv.rfind("score_name,", 0) == 0);
  CHECK(csv.find("Overall,0.250000") != std::string::npos);

  CHECK_THROWS_AS(write_report(stats, records, ReportFormat::json,
                               "/no/such/dir/report.json"),
                  std::runtime_error);
  CHECK(report_format_from_string("json") == ReportFormat::json);
  CHECK(report_format_from_string("csv") == ReportFormat::csv);
  CHECK_THROWS_AS(report_format_from_string("xml"), std::invalid_argument);
  fs::remove_all(dir);
}
