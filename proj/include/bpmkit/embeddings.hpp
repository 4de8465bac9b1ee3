#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "bpmkit/text.hpp"

namespace bpmkit {

using EmbeddingVector = std::vector<double>;
using SimilarityMatrix = std::vector<std::vector<double>>;

struct ProviderConfig {
  enum class Kind { remote, lexical_fallback, exact };
  Kind kind = Kind::lexical_fallback;
  std::string endpoint;    // required for remote
  std::string model_name;  // remote model id
  std::string cache_path;  // optional persistent embedding cache
};

inline std::string to_string(ProviderConfig::Kind k) {
  switch (k) {
    case ProviderConfig::Kind::remote: return "remote";
    case ProviderConfig::Kind::lexical_fallback: return "lexical-fallback";
    case ProviderConfig::Kind::exact: return "exact";
  }
  return "?";
}

inline ProviderConfig::Kind provider_kind_from_string(const std::string& s) {
  if (s == "remote") return ProviderConfig::Kind::remote;
  if (s == "lexical-fallback" || s == "lexical")
    return ProviderConfig::Kind::lexical_fallback;
  if (s == "exact") return ProviderConfig::Kind::exact;
  throw std::invalid_argument("unknown provider kind '" + s + "'");
}

class EmbeddingError : public std::runtime_error {
 public:
  EmbeddingError(const std::string& what, bool retryable)
      : std::runtime_error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

// Maps text to a fixed-dimension vector. Implementations must be
// deterministic per (kind, model, text) and tolerate concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingVector embed(const std::string& text) = 0;
  virtual std::vector<EmbeddingVector> embed_batch(
      const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
  }
  virtual std::string kind() const = 0;
  virtual std::string model_name() const = 0;
};

// Offline fallback: indicator vector of the text's character trigrams over a
// hashed trigram space. Case-folded so trivially respelled items still meet
// the match threshold; texts shorter than three characters contribute
// themselves as a single gram.
class TrigramProvider : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDimension = 512;

  EmbeddingVector embed(const std::string& text) override {
    if (text.empty()) {
      throw std::invalid_argument("embed: text must be non-empty");
    }
    EmbeddingVector v(kDimension, 0.0);
    const std::string folded = lowercase_ascii(text);
    if (folded.size() < 3) {
      v[fnv1a64(folded) % kDimension] = 1.0;
      return v;
    }
    for (std::size_t i = 0; i + 3 <= folded.size(); ++i) {
      v[fnv1a64(std::string_view(folded).substr(i, 3)) % kDimension] = 1.0;
    }
    return v;
  }

  std::string kind() const override { return "lexical-fallback"; }
  std::string model_name() const override { return "trigram-512"; }
};

// Speaks the embeddings wire format:
//   request  {"model": <name>, "input": [<text>...]}
//   response {"data": [{"index": i, "embedding": [floats]}...]}
// The API key is read from EMBEDDINGS_API_KEY.
class RemoteEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(std::string endpoint,
                                   std::string model_name,
                                   int timeout_seconds = 60,
                                   std::size_t batch_size = 64,
                                   std::size_t max_in_flight = 4)
      : endpoint_(std::move(endpoint)),
        model_name_(std::move(model_name)),
        timeout_seconds_(timeout_seconds),
        batch_size_(batch_size),
        max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {
    if (endpoint_.empty()) {
      throw std::invalid_argument("remote provider requires an endpoint");
    }
  }

  EmbeddingVector embed(const std::string& text) override {
    if (text.empty()) {
      throw std::invalid_argument("embed: text must be non-empty");
    }
    return embed_batch({text}).front();
  }

  std::vector<EmbeddingVector> embed_batch(
      const std::vector<std::string>& texts) override {
    for (const auto& t : texts) {
      if (t.empty()) {
        throw std::invalid_argument("embed: text must be non-empty");
      }
    }
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::pair<std::size_t, std::size_t>> chunks;
    for (std::size_t begin = 0; begin < texts.size(); begin += batch_size_) {
      chunks.emplace_back(begin,
                          std::min(texts.size(), begin + batch_size_));
    }
    // Bounded fan-out: at most max_in_flight_ requests at a time.
    for (std::size_t c = 0; c < chunks.size(); c += max_in_flight_) {
      std::vector<std::future<std::vector<EmbeddingVector>>> futures;
      const std::size_t last = std::min(chunks.size(), c + max_in_flight_);
      for (std::size_t k = c; k < last; ++k) {
        const auto [begin, end] = chunks[k];
        futures.push_back(std::async(std::launch::async, [this, &texts,
                                                          begin = begin,
                                                          end = end] {
          return request_chunk(
              std::vector<std::string>(texts.begin() + begin,
                                       texts.begin() + end));
        }));
      }
      for (std::size_t k = c; k < last; ++k) {
        auto vectors = futures[k - c].get();
        const auto [begin, end] = chunks[k];
        for (std::size_t i = begin; i < end; ++i) {
          out[i] = std::move(vectors[i - begin]);
        }
      }
    }
    return out;
  }

  std::string kind() const override { return "remote"; }
  std::string model_name() const override { return model_name_; }

 private:
  std::vector<EmbeddingVector> request_chunk(
      const std::vector<std::string>& texts) const {
    const auto [base, path] = detail::split_url(endpoint_, "/v1/embeddings");
    httplib::Client client(base);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv("EMBEDDINGS_API_KEY")) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    nlohmann::ordered_json body{{"model", model_name_}, {"input", texts}};
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      throw EmbeddingError("embeddings request to " + endpoint_ +
                               " failed: " + httplib::to_string(res.error()),
                           /*retryable=*/true);
    }
    if (res->status != 200) {
      throw EmbeddingError("embeddings request returned HTTP " +
                               std::to_string(res->status) + ": " + res->body,
                           /*retryable=*/res->status == 429 ||
                               res->status >= 500);
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw EmbeddingError(std::string("embeddings response is not JSON: ") +
                               e.what(),
                           /*retryable=*/false);
    }
    if (!parsed.contains("data") || !parsed["data"].is_array()) {
      throw EmbeddingError("embeddings response missing 'data' array",
                           /*retryable=*/false);
    }
    std::vector<EmbeddingVector> vectors(texts.size());
    std::vector<bool> seen(texts.size(), false);
    for (const auto& item : parsed["data"]) {
      const std::size_t index = item.at("index").get<std::size_t>();
      if (index >= vectors.size()) {
        throw EmbeddingError("embeddings response index out of range",
                             /*retryable=*/false);
      }
      vectors[index] = item.at("embedding").get<EmbeddingVector>();
      seen[index] = true;
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) {
        throw EmbeddingError("embeddings response missing index " +
                                 std::to_string(i),
                             /*retryable=*/false);
      }
    }
    return vectors;
  }

  std::string endpoint_;
  std::string model_name_;
  int timeout_seconds_;
  std::size_t batch_size_;
  std::size_t max_in_flight_;
};

// Persistent cache keyed by (provider kind, model name, exact text), stored
// as one JSON object per line so fresh entries can be appended in place.
// Reads are concurrent; writes are serialized internally.
class CachingProvider : public EmbeddingProvider {
 public:
  CachingProvider(std::shared_ptr<EmbeddingProvider> inner,
                  std::string cache_path)
      : inner_(std::move(inner)), cache_path_(std::move(cache_path)) {
    std::ifstream in(cache_path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json entry = nlohmann::json::parse(line, nullptr, false);
      if (entry.is_discarded() || !entry.is_object()) continue;
      if (!entry.contains("kind") || !entry.contains("model") ||
          !entry.contains("text") || !entry.contains("embedding")) {
        continue;
      }
      cache_[key_of(entry["kind"].get<std::string>(),
                    entry["model"].get<std::string>(),
                    entry["text"].get<std::string>())] =
          entry["embedding"].get<EmbeddingVector>();
    }
  }

  EmbeddingVector embed(const std::string& text) override {
    return embed_batch({text}).front();
  }

  std::vector<EmbeddingVector> embed_batch(
      const std::vector<std::string>& texts) override {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::size_t> misses;
    {
      std::shared_lock lock(mutex_);
      for (std::size_t i = 0; i < texts.size(); ++i) {
        auto it = cache_.find(key_of(kind(), model_name(), texts[i]));
        if (it != cache_.end()) {
          out[i] = it->second;
        } else {
          misses.push_back(i);
        }
      }
    }
    if (misses.empty()) return out;

    // Each unique missing text goes to the inner provider exactly once.
    std::vector<std::string> miss_texts;
    std::map<std::string, std::size_t> miss_slot;
    for (std::size_t i : misses) {
      if (miss_slot.emplace(texts[i], miss_texts.size()).second) {
        miss_texts.push_back(texts[i]);
      }
    }
    auto fresh = inner_->embed_batch(miss_texts);

    std::unique_lock lock(mutex_);
    std::ofstream append(cache_path_, std::ios::app);
    for (std::size_t k = 0; k < miss_texts.size(); ++k) {
      const std::string key = key_of(kind(), model_name(), miss_texts[k]);
      if (cache_.emplace(key, fresh[k]).second && append) {
        nlohmann::ordered_json entry{{"kind", kind()},
                                     {"model", model_name()},
                                     {"text", miss_texts[k]},
                                     {"embedding", fresh[k]}};
        append << entry.dump() << '\n';
      }
    }
    for (std::size_t i : misses) out[i] = fresh[miss_slot[texts[i]]];
    return out;
  }

  std::string kind() const override { return inner_->kind(); }
  std::string model_name() const override { return inner_->model_name(); }

 private:
  static std::string key_of(const std::string& kind, const std::string& model,
                            const std::string& text) {
    return kind + '\x1f' + model + '\x1f' + text;
  }

  std::shared_ptr<EmbeddingProvider> inner_;
  std::string cache_path_;
  std::unordered_map<std::string, EmbeddingVector> cache_;
  std::shared_mutex mutex_;
};

// Builds the provider a config describes (remote or lexical fallback,
// optionally wrapped in a cache). Exact-match configs have no vector space;
// they are handled by the matching layer, not here.
inline std::shared_ptr<EmbeddingProvider> make_provider(
    const ProviderConfig& cfg) {
  std::shared_ptr<EmbeddingProvider> provider;
  switch (cfg.kind) {
    case ProviderConfig::Kind::remote:
      if (cfg.endpoint.empty()) {
        throw std::invalid_argument(
            "provider kind 'remote' requires an endpoint");
      }
      provider = std::make_shared<RemoteEmbeddingProvider>(cfg.endpoint,
                                                           cfg.model_name);
      break;
    case ProviderConfig::Kind::lexical_fallback:
      provider = std::make_shared<TrigramProvider>();
      break;
    case ProviderConfig::Kind::exact:
      throw std::invalid_argument(
          "provider kind 'exact' does not embed; use make_scorer");
  }
  if (!cfg.cache_path.empty()) {
    provider = std::make_shared<CachingProvider>(provider, cfg.cache_path);
  }
  return provider;
}

// Standard cosine similarity in [-1, 1]. Bitwise-equal vectors short-circuit
// to exactly 1.0, which keeps identical texts above any threshold < 1. A zero
// vector has no direction; its similarity is defined as 0 with a warning.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine: length mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw std::invalid_argument("cosine: empty vectors");
  if (a == b) {
    double norm = 0.0;
    for (double x : a) norm += x * x;
    if (norm == 0.0) {
      std::cerr << "warning: cosine of zero vector, defined as 0\n";
      return 0.0;
    }
    return 1.0;
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    std::cerr << "warning: cosine of zero vector, defined as 0\n";
    return 0.0;
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Entry (i, j) is cosine(embed(a_i), embed(b_j)). Texts are deduplicated and
// embedded once, so equal texts share one vector and score exactly 1.0.
inline SimilarityMatrix pairwise_similarity(
    const std::vector<std::string>& list_a,
    const std::vector<std::string>& list_b, EmbeddingProvider& provider) {
  std::vector<std::string> unique_texts;
  std::unordered_map<std::string, std::size_t> position;
  auto intern = [&](const std::string& t) {
    auto [it, inserted] = position.emplace(t, unique_texts.size());
    if (inserted) unique_texts.push_back(t);
    return it->second;
  };
  std::vector<std::size_t> ia, ib;
  ia.reserve(list_a.size());
  ib.reserve(list_b.size());
  for (const auto& t : list_a) ia.push_back(intern(t));
  for (const auto& t : list_b) ib.push_back(intern(t));

  const std::vector<EmbeddingVector> vectors =
      unique_texts.empty() ? std::vector<EmbeddingVector>{}
                           : provider.embed_batch(unique_texts);

  SimilarityMatrix matrix(list_a.size(),
                          std::vector<double>(list_b.size(), 0.0));
  for (std::size_t i = 0; i < list_a.size(); ++i) {
    for (std::size_t j = 0; j < list_b.size(); ++j) {
      matrix[i][j] = cosine(vectors[ia[i]], vectors[ib[j]]);
    }
  }
  return matrix;
}

}  // namespace bpmkit
