// Command-line shell: breakdown, score, generate, evaluate, report.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <bpmkit/bpmkit.hpp>

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << text;
}

// Parses and validates a model file; exits via exception when unusable.
bpmkit::CanonicalModel load_model_file(const std::string& path) {
  bpmkit::ParseResult parsed = bpmkit::parse_model(read_file(path));
  for (const auto& warning : parsed.warnings) {
    std::cerr << path << ": warning: " << warning.code << " at "
              << warning.element_id << "\n";
  }
  bpmkit::ValidationReport report = bpmkit::validate_model(parsed.model);
  if (!report.valid()) {
    std::string message = path + ": invalid model:";
    for (const auto& issue : report.errors) {
      message += "\n  " + issue.code + " on '" + issue.element_id +
                 "': " + issue.message;
    }
    throw std::runtime_error(message);
  }
  return std::move(parsed.model);
}

struct ProviderFlags {
  std::string provider = "lexical-fallback";
  std::string endpoint;
  std::string model;
  std::string cache;
  double threshold = 0.7;

  void attach(CLI::App* cmd) {
    cmd->add_option("--threshold", threshold,
                    "Similarity threshold for matching (default 0.7)");
    cmd->add_option("--provider", provider,
                    "Embedding provider: lexical-fallback | remote | exact");
    cmd->add_option("--embeddings-endpoint", endpoint,
                    "Remote embeddings endpoint URL");
    cmd->add_option("--embeddings-model", model,
                    "Remote embeddings model name");
    cmd->add_option("--embeddings-cache", cache,
                    "JSONL cache file for embeddings");
  }

  bpmkit::MatchingConfig matching() const {
    bpmkit::MatchingConfig cfg;
    cfg.threshold = threshold;
    cfg.provider.kind = bpmkit::provider_kind_from_string(provider);
    cfg.provider.endpoint = endpoint;
    cfg.provider.model_name = model;
    cfg.provider.cache_path = cache;
    return cfg;
  }
};

struct LlmFlags {
  std::string endpoint;
  std::string model = "gpt-4-vision-preview";
  std::string strategy = "zero";
  std::string replay_dir;
  std::string record_dir;
  int timeout_seconds = 120;

  void attach(CLI::App* cmd) {
    cmd->add_option("--strategy", strategy,
                    "Prompting strategy: zero | one | few");
    cmd->add_option("--llm-endpoint", endpoint, "Chat completions endpoint");
    cmd->add_option("--model", model, "Chat model name");
    cmd->add_option("--replay", replay_dir,
                    "Replay recorded responses from this directory");
    cmd->add_option("--record", record_dir,
                    "Record raw responses into this directory");
    cmd->add_option("--llm-timeout", timeout_seconds,
                    "Request timeout in seconds");
  }

  bpmkit::LlmClientConfig llm_config() const {
    bpmkit::LlmClientConfig cfg;
    cfg.endpoint = endpoint;
    cfg.model_name = model;
    cfg.timeout_seconds = timeout_seconds;
    return cfg;
  }

  std::shared_ptr<bpmkit::ChatClient> make_client() const {
    std::shared_ptr<bpmkit::ChatClient> client;
    if (!replay_dir.empty()) {
      client = std::make_shared<bpmkit::ReplayChatClient>(replay_dir);
    } else {
      client = std::make_shared<bpmkit::HttpChatClient>(llm_config());
    }
    if (!record_dir.empty()) {
      client = std::make_shared<bpmkit::RecordingChatClient>(client,
                                                             record_dir);
    }
    return client;
  }
};

int run_breakdown(const std::string& model_path, const std::string& out) {
  const bpmkit::CanonicalModel model = load_model_file(model_path);
  write_output(
      bpmkit::breakdown_to_json(bpmkit::breakdown(model)).dump(2) + "\n", out);
  return 0;
}

int run_score(const std::string& gt_path, const std::string& gen_path,
              const ProviderFlags& provider, bool trace,
              const std::string& out) {
  const bpmkit::CanonicalModel gt = load_model_file(gt_path);
  const bpmkit::CanonicalModel gen = load_model_file(gen_path);
  const bpmkit::ScoreReport report = bpmkit::score_models(
      bpmkit::breakdown(gt), bpmkit::breakdown(gen), provider.matching());
  write_output(bpmkit::score_report_to_json(report, trace).dump(2) + "\n",
               out);
  return 0;
}

int run_generate(const std::string& pages_dir, const LlmFlags& llm,
                 const std::string& examples_root,
                 const std::string& trace_path, const std::string& out) {
  const bpmkit::ShotKind kind = bpmkit::shot_kind_from_string(llm.strategy);
  bpmkit::PromptStrategy strategy;
  strategy.kind = kind;
  if (kind != bpmkit::ShotKind::zero_shot) {
    if (examples_root.empty()) {
      throw std::runtime_error(
          "--examples <dataset-root> is required for one/few-shot prompting");
    }
    strategy = bpmkit::make_strategy(bpmkit::load_dataset(examples_root),
                                     kind);
  }

  const bpmkit::DocumentPages pages = bpmkit::load_document_pages(pages_dir);
  const auto client = llm.make_client();
  const bpmkit::GenerationTrace trace =
      bpmkit::generate_model(pages, strategy, llm.llm_config(), *client);

  if (!trace_path.empty()) {
    write_output(bpmkit::trace_to_json(trace, true).dump(2) + "\n",
                 trace_path);
  }
  if (trace.stage != bpmkit::GenerationStage::complete) {
    std::cerr << "generation failed (" << bpmkit::to_string(trace.stage)
              << "): " << trace.error << "\n";
    return 1;
  }
  for (const auto& issue : trace.validation.errors) {
    std::cerr << "validation: " << issue.code << " on '" << issue.element_id
              << "': " << issue.message << "\n";
  }
  write_output(bpmkit::serialize_model(*trace.parsed), out);
  return trace.validation.valid() ? 0 : 1;
}

int run_evaluate(const std::string& root, const LlmFlags& llm,
                 const ProviderFlags& provider, std::size_t parallelism,
                 const std::string& format, const std::string& out) {
  const bpmkit::DatasetIndex index = bpmkit::load_dataset(root);
  for (const auto& warning : index.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }
  const bpmkit::PromptStrategy strategy =
      bpmkit::make_strategy(index, bpmkit::shot_kind_from_string(llm.strategy));
  const auto client = llm.make_client();
  const std::vector<bpmkit::ScoreRecord> records =
      bpmkit::run_batch(index, strategy, llm.llm_config(),
                        provider.matching(), *client, parallelism);
  const bpmkit::SummaryStats stats = bpmkit::summarize(records);

  const bpmkit::ReportFormat fmt = bpmkit::report_format_from_string(format);
  const std::string text = fmt == bpmkit::ReportFormat::json
                               ? bpmkit::report_to_json_text(stats, records)
                               : bpmkit::report_to_csv(stats);
  write_output(text, out);
  return 0;
}

int run_report(const std::string& records_path, const std::string& format,
               const std::string& out) {
  const std::vector<bpmkit::ScoreRecord> records =
      bpmkit::records_from_json(nlohmann::json::parse(read_file(records_path)));
  const bpmkit::SummaryStats stats = bpmkit::summarize(records);
  const bpmkit::ReportFormat fmt = bpmkit::report_format_from_string(format);
  const std::string text = fmt == bpmkit::ReportFormat::json
                               ? bpmkit::report_to_json_text(stats, records)
                               : bpmkit::report_to_csv(stats);
  write_output(text, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Extract process models from paged documents and score them against "
      "ground truths"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Read options from an INI/TOML file (sections per "
                 "subcommand)");

  std::string out_path;
  auto add_out = [&out_path](CLI::App* cmd) {
    cmd->add_option("--out", out_path, "Write output here instead of stdout")
        ->configurable(false);
  };

  auto* breakdown_cmd = app.add_subcommand(
      "breakdown", "Decompose a model file into its element multisets");
  std::string breakdown_model;
  breakdown_cmd->add_option("model", breakdown_model, "Model JSON file")
      ->required();
  add_out(breakdown_cmd);

  auto* score_cmd = app.add_subcommand(
      "score", "Score a generated model against a ground truth");
  std::string score_gt, score_gen;
  bool score_trace = false;
  score_cmd->add_option("ground_truth", score_gt, "Ground-truth JSON file")
      ->required();
  score_cmd->add_option("generated", score_gen, "Generated JSON file")
      ->required();
  score_cmd->add_flag("--trace", score_trace,
                      "Include per-multiset matchings in the output");
  add_out(score_cmd);
  ProviderFlags score_provider;
  score_provider.attach(score_cmd);

  auto* generate_cmd = app.add_subcommand(
      "generate", "Extract a model from a directory of page images");
  std::string generate_pages, generate_examples, generate_trace;
  generate_cmd->add_option("pages", generate_pages, "Directory of page images")
      ->required();
  generate_cmd->add_option("--examples", generate_examples,
                           "Dataset root supplying shot examples");
  generate_cmd->add_option("--trace", generate_trace,
                           "Write the generation trace to this file");
  add_out(generate_cmd);
  LlmFlags generate_llm;
  generate_llm.attach(generate_cmd);

  auto* evaluate_cmd = app.add_subcommand(
      "evaluate", "Generate and score every entry of a dataset");
  std::string evaluate_root, evaluate_format = "json";
  std::size_t evaluate_parallelism = 1;
  evaluate_cmd->add_option("dataset", evaluate_root, "Dataset root directory")
      ->required();
  evaluate_cmd->add_option("--parallelism", evaluate_parallelism,
                           "Concurrent evaluations (default 1)");
  evaluate_cmd->add_option("--format", evaluate_format,
                           "Report format: json | csv");
  add_out(evaluate_cmd);
  LlmFlags evaluate_llm;
  evaluate_llm.attach(evaluate_cmd);
  ProviderFlags evaluate_provider;
  evaluate_provider.attach(evaluate_cmd);

  auto* report_cmd = app.add_subcommand(
      "report", "Summarize a records file into a report");
  std::string report_records, report_format = "csv";
  report_cmd->add_option("records", report_records, "Records JSON file")
      ->required();
  add_out(report_cmd);
  report_cmd->add_option("--format", report_format,
                         "Report format: csv | json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (breakdown_cmd->parsed()) {
      return run_breakdown(breakdown_model, out_path);
    }
    if (score_cmd->parsed()) {
      return run_score(score_gt, score_gen, score_provider, score_trace,
                       out_path);
    }
    if (generate_cmd->parsed()) {
      return run_generate(generate_pages, generate_llm, generate_examples,
                          generate_trace, out_path);
    }
    if (evaluate_cmd->parsed()) {
      return run_evaluate(evaluate_root, evaluate_llm, evaluate_provider,
                          evaluate_parallelism, evaluate_format, out_path);
    }
    if (report_cmd->parsed()) {
      return run_report(report_records, report_format, out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
