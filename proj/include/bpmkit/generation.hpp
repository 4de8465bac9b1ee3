#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "bpmkit/model.hpp"
#include "bpmkit/text.hpp"

namespace bpmkit {

// ---------------------------------------------------------------------------
// Model generation: drive a multimodal chat LLM with the paged document
// images and turn its reply into a canonical model, recording every step.
// ---------------------------------------------------------------------------

struct PageImage {
  int number = 0;
  std::string media_type;  // image/png or image/jpeg
  std::string bytes;
};

struct DocumentPages {
  std::string doc_id;       // replay/record key
  std::string source_path;
  std::vector<PageImage> pages;
};

namespace detail {

inline std::optional<std::string> media_type_for_extension(std::string ext) {
  ext = lowercase_ascii(ext);
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return std::nullopt;
}

}  // namespace detail

// Loads page images (PNG/JPEG) from a directory in lexicographic name order.
// The doc id defaults to the directory name, or its parent's name when the
// directory is just called "pages".
inline DocumentPages load_document_pages(const std::filesystem::path& dir,
                                         std::string doc_id = {}) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::invalid_argument("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (detail::media_type_for_extension(entry.path().extension().string())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw std::invalid_argument("no page images in " + dir.string());
  }
  DocumentPages doc;
  doc.source_path = dir.string();
  if (doc_id.empty()) {
    doc_id = dir.filename().string();
    if (doc_id == "pages" && dir.has_parent_path()) {
      doc_id = dir.parent_path().filename().string();
    }
  }
  doc.doc_id = std::move(doc_id);
  int number = 1;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    doc.pages.push_back(
        {number++, *detail::media_type_for_extension(file.extension().string()),
         buf.str()});
  }
  return doc;
}

enum class ShotKind { zero_shot, one_shot, few_shot };

inline std::size_t shot_example_count(ShotKind kind) {
  switch (kind) {
    case ShotKind::zero_shot: return 0;
    case ShotKind::one_shot: return 1;
    case ShotKind::few_shot: return 3;
  }
  return 0;
}

inline std::string to_string(ShotKind kind) {
  switch (kind) {
    case ShotKind::zero_shot: return "zero-shot";
    case ShotKind::one_shot: return "one-shot";
    case ShotKind::few_shot: return "few-shot";
  }
  return "?";
}

inline ShotKind shot_kind_from_string(const std::string& s) {
  if (s == "zero" || s == "zero-shot") return ShotKind::zero_shot;
  if (s == "one" || s == "one-shot") return ShotKind::one_shot;
  if (s == "few" || s == "few-shot") return ShotKind::few_shot;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

struct PromptExample {
  DocumentPages pages;
  CanonicalModel model;
};

struct PromptStrategy {
  ShotKind kind = ShotKind::zero_shot;
  std::vector<PromptExample> examples;
};

struct LlmClientConfig {
  std::string endpoint;
  std::string model_name;
  double temperature = 0.0;
  int max_output_tokens = 4096;
  int timeout_seconds = 120;
  int retries = 2;
  int backoff_ms = 500;
};

struct TextPart {
  std::string text;
};
struct ImagePart {
  std::string media_type;
  std::string bytes;
};
using MessagePart = std::variant<TextPart, ImagePart>;

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::vector<MessagePart> parts;
};

inline constexpr std::string_view kMetaPromptInstruction =
    "### Instruction ###\n"
    "You are a BPMN expert. Your task is to extract process information out "
    "of the passed documents which are parsed as a list of images where each "
    "image represents one page of the document. Make sure that you include "
    "the sequence and message flow. Use numbers for the ids starting from "
    "zero. Generate json according to the following schema for extracting "
    "the process information. Only output the generated json.";

inline std::string meta_prompt_text(const std::string& schema_text) {
  return std::string(kMetaPromptInstruction) + "\n\n### Schema ###\n" +
         schema_text;
}

// Message sequence: the meta prompt (instructions + schema) first, then one
// user/assistant exchange per worked example (pages in, ground-truth JSON
// out), then the target document's pages, all images in page order.
inline std::vector<ChatMessage> build_prompt(const std::string& schema_text,
                                             const PromptStrategy& strategy,
                                             const DocumentPages& doc) {
  if (strategy.examples.size() != shot_example_count(strategy.kind)) {
    throw std::invalid_argument(
        to_string(strategy.kind) + " prompting needs " +
        std::to_string(shot_example_count(strategy.kind)) +
        " examples, got " + std::to_string(strategy.examples.size()));
  }
  if (doc.pages.empty()) {
    throw std::invalid_argument("document has no pages");
  }

  std::vector<ChatMessage> messages;
  messages.push_back(
      {"system", {TextPart{meta_prompt_text(schema_text)}}});

  auto pages_message = [](const DocumentPages& pages) {
    ChatMessage msg{"user", {}};
    for (const auto& page : pages.pages) {
      msg.parts.push_back(ImagePart{page.media_type, page.bytes});
    }
    return msg;
  };

  for (const auto& example : strategy.examples) {
    messages.push_back(pages_message(example.pages));
    messages.push_back(
        {"assistant", {TextPart{serialize_model(example.model)}}});
  }
  messages.push_back(pages_message(doc));
  return messages;
}

// Chat-completions request body with image parts as base64 data URLs.
inline nlohmann::ordered_json chat_request_json(
    const LlmClientConfig& cfg, const std::vector<ChatMessage>& messages) {
  nlohmann::ordered_json body;
  body["model"] = cfg.model_name;
  body["temperature"] = cfg.temperature;
  body["max_tokens"] = cfg.max_output_tokens;
  body["messages"] = nlohmann::ordered_json::array();
  for (const auto& msg : messages) {
    nlohmann::ordered_json content = nlohmann::ordered_json::array();
    for (const auto& part : msg.parts) {
      if (const auto* text = std::get_if<TextPart>(&part)) {
        content.push_back({{"type", "text"}, {"text", text->text}});
      } else {
        const auto& image = std::get<ImagePart>(part);
        content.push_back(
            {{"type", "image_url"},
             {"image_url",
              {{"url", "data:" + image.media_type + ";base64," +
                           base64_encode(image.bytes)}}}});
      }
    }
    body["messages"].push_back(
        {{"role", msg.role}, {"content", std::move(content)}});
  }
  return body;
}

// Assistant text from a chat-completions response body. Content may be a
// plain string or an array of text parts.
inline std::string parse_chat_content(const std::string& response_body) {
  nlohmann::json j = nlohmann::json::parse(response_body);
  const auto& message = j.at("choices").at(0).at("message");
  const auto& content = message.at("content");
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string out;
    for (const auto& part : content) {
      if (part.contains("text")) out += part["text"].get<std::string>();
    }
    return out;
  }
  throw std::runtime_error("chat response content has unexpected shape");
}

inline std::string make_chat_response_body(const std::string& content) {
  nlohmann::ordered_json j{
      {"choices",
       {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
  return j.dump();
}

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChatRequest {
  nlohmann::ordered_json body;
  std::string doc_id;  // replay/record key; never sent over the wire
};

// Sends one chat request and returns the raw response body.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string send(const ChatRequest& request) = 0;
};

// OpenAI-compatible chat endpoint. Transport failures and 429/5xx statuses
// are retried with exponential backoff; the API key comes from LLM_API_KEY.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(LlmClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) {
      throw std::invalid_argument("chat client requires an endpoint");
    }
  }

  std::string send(const ChatRequest& request) override {
    const auto [base, path] =
        detail::split_url(cfg_.endpoint, "/v1/chat/completions");
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(
            cfg_.backoff_ms * (1 << (attempt - 1))));
      }
      httplib::Client client(base);
      client.set_connection_timeout(cfg_.timeout_seconds, 0);
      client.set_read_timeout(cfg_.timeout_seconds, 0);
      httplib::Headers headers;
      if (const char* key = std::getenv("LLM_API_KEY")) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      }
      auto res = client.Post(path, headers, request.body.dump(),
                             "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) return res->body;
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      if (res->status != 429 && res->status < 500) break;  // not retryable
    }
    throw TransportError("chat request to " + cfg_.endpoint + " failed: " +
                         last_error);
  }

 private:
  LlmClientConfig cfg_;
};

// Replays raw response bodies recorded on disk, keyed by document id.
class ReplayChatClient : public ChatClient {
 public:
  explicit ReplayChatClient(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::string send(const ChatRequest& request) override {
    const std::filesystem::path file = dir_ / (request.doc_id + ".json");
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      throw TransportError("no recorded response at " + file.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

 private:
  std::filesystem::path dir_;
};

// Persists every raw response body next to forwarding it, producing the
// fixtures ReplayChatClient consumes.
class RecordingChatClient : public ChatClient {
 public:
  RecordingChatClient(std::shared_ptr<ChatClient> inner,
                      std::filesystem::path dir)
      : inner_(std::move(inner)), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::string send(const ChatRequest& request) override {
    std::string body = inner_->send(request);
    std::ofstream out(dir_ / (request.doc_id + ".json"), std::ios::binary);
    out << body;
    return body;
  }

 private:
  std::shared_ptr<ChatClient> inner_;
  std::filesystem::path dir_;
};

// Test hook: answer requests with an arbitrary function.
class FunctionChatClient : public ChatClient {
 public:
  explicit FunctionChatClient(
      std::function<std::string(const ChatRequest&)> fn)
      : fn_(std::move(fn)) {}
  std::string send(const ChatRequest& request) override {
    return fn_(request);
  }

 private:
  std::function<std::string(const ChatRequest&)> fn_;
};

class ExtractionError : public std::runtime_error {
 public:
  ExtractionError(const std::string& what, std::string raw)
      : std::runtime_error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Pulls the first balanced top-level JSON object out of a response that may
// wrap it in code fences or prose. Candidates that are not valid JSON are
// skipped in favor of a later balanced object.
inline std::string extract_json(const std::string& response) {
  std::string text = response;
  // Strip a leading/trailing code fence if the whole reply is fenced.
  {
    std::size_t begin = text.find_first_not_of(" \t\r\n");
    std::size_t end = text.find_last_not_of(" \t\r\n");
    if (begin != std::string::npos && text.compare(begin, 3, "```") == 0) {
      std::size_t line_end = text.find('\n', begin);
      std::size_t close = text.rfind("```", end);
      if (line_end != std::string::npos && close != std::string::npos &&
          close > line_end) {
        text = text.substr(line_end + 1, close - line_end - 1);
      }
    }
  }

  std::size_t start = 0;
  while ((start = text.find('{', start)) != std::string::npos) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          std::string candidate = text.substr(start, i - start + 1);
          if (nlohmann::json::accept(candidate)) return candidate;
          break;  // balanced but not JSON; scan on from the next brace
        }
      }
    }
    ++start;
  }
  throw ExtractionError("no JSON object found in response", response);
}

enum class GenerationStage {
  complete,
  prompt_failed,
  transport_failed,
  extraction_failed,
  parse_failed,
};

inline std::string to_string(GenerationStage s) {
  switch (s) {
    case GenerationStage::complete: return "complete";
    case GenerationStage::prompt_failed: return "prompt-failed";
    case GenerationStage::transport_failed: return "transport-failed";
    case GenerationStage::extraction_failed: return "extraction-failed";
    case GenerationStage::parse_failed: return "parse-failed";
  }
  return "?";
}

// Everything that happened while generating one model. parsed being present
// implies extracted_json is present; a failed stage leaves the later fields
// empty and the error populated.
struct GenerationTrace {
  std::vector<ChatMessage> messages;
  std::string raw_response;
  std::optional<std::string> extracted_json;
  std::optional<CanonicalModel> parsed;
  ValidationReport validation;
  std::vector<Issue> parse_warnings;
  std::int64_t elapsed_ms = 0;
  GenerationStage stage = GenerationStage::complete;
  std::string error;
};

// Full pipeline: build prompt, send, extract, parse, validate. Failures do
// not escape; each lands in the trace with its stage recorded.
inline GenerationTrace generate_model(const DocumentPages& doc,
                                      const PromptStrategy& strategy,
                                      const LlmClientConfig& cfg,
                                      ChatClient& client) {
  GenerationTrace trace;
  const auto started = std::chrono::steady_clock::now();
  auto stop_clock = [&] {
    trace.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  };

  try {
    trace.messages = build_prompt(canonical_schema_text(), strategy, doc);
  } catch (const std::exception& e) {
    trace.stage = GenerationStage::prompt_failed;
    trace.error = e.what();
    stop_clock();
    return trace;
  }

  std::string body;
  try {
    body = client.send({chat_request_json(cfg, trace.messages), doc.doc_id});
    trace.raw_response = parse_chat_content(body);
  } catch (const std::exception& e) {
    trace.stage = GenerationStage::transport_failed;
    trace.error = e.what();
    stop_clock();
    return trace;
  }

  try {
    trace.extracted_json = extract_json(trace.raw_response);
  } catch (const std::exception& e) {
    trace.stage = GenerationStage::extraction_failed;
    trace.error = e.what();
    stop_clock();
    return trace;
  }

  try {
    ParseResult parsed = parse_model(*trace.extracted_json);
    trace.parsed = std::move(parsed.model);
    trace.parse_warnings = std::move(parsed.warnings);
    trace.validation = validate_model(*trace.parsed);
  } catch (const std::exception& e) {
    trace.stage = GenerationStage::parse_failed;
    trace.error = e.what();
    stop_clock();
    return trace;
  }

  stop_clock();
  return trace;
}

inline nlohmann::ordered_json trace_to_json(const GenerationTrace& trace,
                                            bool include_messages = false) {
  nlohmann::ordered_json j;
  j["stage"] = to_string(trace.stage);
  if (!trace.error.empty()) j["error"] = trace.error;
  j["elapsed_ms"] = trace.elapsed_ms;
  j["raw_response"] = trace.raw_response;
  j["extracted_json"] = trace.extracted_json
                            ? nlohmann::ordered_json(*trace.extracted_json)
                            : nlohmann::ordered_json(nullptr);
  j["parsed"] = trace.parsed.has_value();
  nlohmann::ordered_json issues = nlohmann::ordered_json::array();
  for (const auto& issue : trace.validation.errors) {
    issues.push_back(
        {{"code", issue.code}, {"id", issue.element_id},
         {"message", issue.message}});
  }
  j["validation_errors"] = std::move(issues);
  if (include_messages) {
    nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
    for (const auto& msg : trace.messages) {
      nlohmann::ordered_json parts = nlohmann::ordered_json::array();
      for (const auto& part : msg.parts) {
        if (const auto* text = std::get_if<TextPart>(&part)) {
          parts.push_back({{"type", "text"}, {"text", text->text}});
        } else {
          const auto& image = std::get<ImagePart>(part);
          parts.push_back({{"type", "image"},
                           {"media_type", image.media_type},
                           {"bytes", image.bytes.size()}});
        }
      }
      msgs.push_back({{"role", msg.role}, {"parts", std::move(parts)}});
    }
    j["messages"] = std::move(msgs);
  }
  return j;
}

}  // namespace bpmkit
