#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpmkit/breakdown.hpp"
#include "bpmkit/embeddings.hpp"

namespace bpmkit {

// ---------------------------------------------------------------------------
// Sørensen–Dice similarity with a semantic- and frequency-aware adjustment:
// items from two multisets are paired greedily by embedding similarity above
// a threshold, each item at most once; duplicates are kept apart by indexing
// occurrences; the classical Dice coefficient runs on the result.
// ---------------------------------------------------------------------------

struct MatchingConfig {
  double threshold = 0.7;  // strict: a pair must score strictly above it
  ProviderConfig provider;
};

struct MatchPair {
  std::size_t index_a;
  std::size_t index_b;
  double similarity;
  bool operator==(const MatchPair&) const = default;
};

// Pairs sorted by descending similarity; each index used at most once per
// side; every similarity strictly above the threshold.
struct Matching {
  std::vector<MatchPair> pairs;
};

// Scores every (a, b) text pair in [0, 1]-ish similarity space. The embedding
// route is one implementation; exact string equality is another.
class SimilarityScorer {
 public:
  virtual ~SimilarityScorer() = default;
  virtual SimilarityMatrix score(const std::vector<std::string>& a,
                                 const std::vector<std::string>& b) = 0;
};

class EmbeddingScorer : public SimilarityScorer {
 public:
  explicit EmbeddingScorer(std::shared_ptr<EmbeddingProvider> provider)
      : provider_(std::move(provider)) {}
  SimilarityMatrix score(const std::vector<std::string>& a,
                         const std::vector<std::string>& b) override {
    return pairwise_similarity(a, b, *provider_);
  }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
};

// 1.0 for equal strings, 0.0 otherwise; reduces dice_sfa to plain
// multiset dice.
class ExactScorer : public SimilarityScorer {
 public:
  SimilarityMatrix score(const std::vector<std::string>& a,
                         const std::vector<std::string>& b) override {
    SimilarityMatrix m(a.size(), std::vector<double>(b.size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < b.size(); ++j) {
        m[i][j] = a[i] == b[j] ? 1.0 : 0.0;
      }
    }
    return m;
  }
};

inline std::shared_ptr<SimilarityScorer> make_scorer(
    const ProviderConfig& cfg) {
  if (cfg.kind == ProviderConfig::Kind::exact) {
    return std::make_shared<ExactScorer>();
  }
  return std::make_shared<EmbeddingScorer>(make_provider(cfg));
}

// Greedy matching over a similarity matrix: repeatedly take the
// highest-similarity pair strictly above the threshold whose items are both
// still free. Ties prefer the smaller a-index, then the smaller b-index.
inline Matching greedy_match(const SimilarityMatrix& matrix,
                             double threshold) {
  Matching result;
  std::vector<MatchPair> candidates;
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    for (std::size_t j = 0; j < matrix[i].size(); ++j) {
      if (matrix[i][j] > threshold) {
        candidates.push_back({i, j, matrix[i][j]});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const MatchPair& x, const MatchPair& y) {
              if (x.similarity != y.similarity) {
                return x.similarity > y.similarity;
              }
              if (x.index_a != y.index_a) return x.index_a < y.index_a;
              return x.index_b < y.index_b;
            });
  std::vector<bool> used_a(matrix.size(), false);
  std::vector<bool> used_b(matrix.empty() ? 0 : matrix[0].size(), false);
  for (const auto& c : candidates) {
    if (used_a[c.index_a] || used_b[c.index_b]) continue;
    used_a[c.index_a] = true;
    used_b[c.index_b] = true;
    result.pairs.push_back(c);
  }
  return result;
}

inline Matching match_items(const std::vector<std::string>& a,
                            const std::vector<std::string>& b,
                            SimilarityScorer& scorer, double threshold) {
  if (a.empty() || b.empty()) return {};
  return greedy_match(scorer.score(a, b), threshold);
}

inline Matching match_items(const std::vector<std::string>& a,
                            const std::vector<std::string>& b,
                            const MatchingConfig& cfg) {
  auto scorer = make_scorer(cfg.provider);
  return match_items(a, b, *scorer, cfg.threshold);
}

// An entry of a multiset converted to a set with preserved entries: the n-th
// occurrence of a value becomes (value, n).
struct IndexedItem {
  std::string value;
  std::size_t occurrence;
  bool operator==(const IndexedItem&) const = default;
  bool operator<(const IndexedItem& o) const {
    return value != o.value ? value < o.value : occurrence < o.occurrence;
  }
};

inline std::vector<IndexedItem> index_multiset(
    const std::vector<std::string>& items) {
  std::map<std::string, std::size_t> counts;
  std::vector<IndexedItem> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    out.push_back({item, ++counts[item]});
  }
  return out;
}

// The original Sørensen–Dice coefficient 2|a ∩ b| / (|a| + |b|) over indexed
// item sets; two empty sets are fully similar.
inline double dice(const std::vector<IndexedItem>& a,
                   const std::vector<IndexedItem>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::map<IndexedItem, int> in_a;
  for (const auto& item : a) in_a[item] = 1;
  std::size_t intersection = 0;
  for (const auto& item : b) {
    auto it = in_a.find(item);
    if (it != in_a.end() && it->second == 1) {
      it->second = 0;
      ++intersection;
    }
  }
  return 2.0 * static_cast<double>(intersection) /
         static_cast<double>(a.size() + b.size());
}

// Renders a multiset member as the text the matcher/vectorizer sees. Plain
// names and types pass through; tuples get fixed separators.
inline std::string serialize_item(const std::string& item) { return item; }
inline std::string serialize_item(const LaneName& item) {
  return item.pool + " / " + item.lane;
}
inline std::string serialize_item(const LaneRef& item) {
  return item.pool + " / " + item.lane + " | " + item.ref;
}
inline std::string serialize_item(const FlowTriple& item) {
  return item.source + " | " + item.connector + " | " + item.target;
}

template <typename T>
inline std::vector<std::string> serialize_items(const std::vector<T>& items) {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(serialize_item(item));
  return out;
}

inline std::vector<std::string> serialized_items(const ElementBreakdown& b,
                                                 Element e) {
  switch (e) {
    case Element::task_names: return b.task_names;
    case Element::task_types: return b.task_types;
    case Element::event_names: return b.event_names;
    case Element::event_types: return b.event_types;
    case Element::gateway_names: return b.gateway_names;
    case Element::gateway_types: return b.gateway_types;
    case Element::lane_names: return serialize_items(b.lane_names);
    case Element::lane_refs: return serialize_items(b.lane_refs);
    case Element::sequence_flows: return serialize_items(b.sequence_flows);
    case Element::message_flows: return serialize_items(b.message_flows);
  }
  return {};
}

namespace detail {

// dice_sfa core: matched items collapse to a shared identity per pair,
// unmatched items keep their raw text, occurrences are indexed, and the
// classical coefficient runs on the resulting sets.
struct MultisetScore {
  double score = 1.0;
  Matching matching;
};

inline MultisetScore score_multiset(const std::vector<std::string>& a,
                                    const std::vector<std::string>& b,
                                    SimilarityScorer& scorer,
                                    double threshold) {
  MultisetScore result;
  if (a.empty() && b.empty()) return result;

  result.matching = match_items(a, b, scorer, threshold);

  // Identity of an item after matching: (pair index, "") when matched,
  // (-1, raw text) when not. Keeping this out-of-band means no raw text can
  // ever collide with a match marker.
  using ItemId = std::pair<long, std::string>;
  std::vector<ItemId> ids_a(a.size(), {-1, ""}), ids_b(b.size(), {-1, ""});
  for (std::size_t k = 0; k < result.matching.pairs.size(); ++k) {
    ids_a[result.matching.pairs[k].index_a] = {static_cast<long>(k), ""};
    ids_b[result.matching.pairs[k].index_b] = {static_cast<long>(k), ""};
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ids_a[i].first < 0) ids_a[i].second = a[i];
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    if (ids_b[j].first < 0) ids_b[j].second = b[j];
  }

  std::map<ItemId, std::size_t> count_a, count_b;
  for (const auto& id : ids_a) ++count_a[id];
  for (const auto& id : ids_b) ++count_b[id];
  std::size_t intersection = 0;
  for (const auto& [id, n] : count_a) {
    auto it = count_b.find(id);
    if (it != count_b.end()) intersection += std::min(n, it->second);
  }
  result.score = 2.0 * static_cast<double>(intersection) /
                 static_cast<double>(a.size() + b.size());
  return result;
}

}  // namespace detail

inline double dice_sfa(const std::vector<std::string>& a,
                       const std::vector<std::string>& b,
                       SimilarityScorer& scorer, double threshold) {
  return detail::score_multiset(a, b, scorer, threshold).score;
}

inline double dice_sfa(const std::vector<std::string>& a,
                       const std::vector<std::string>& b,
                       const MatchingConfig& cfg) {
  auto scorer = make_scorer(cfg.provider);
  return dice_sfa(a, b, *scorer, cfg.threshold);
}

enum class Category { tasks = 0, events, gateways, flows, lanes };
inline constexpr std::size_t kCategoryCount = 5;
inline constexpr std::array<std::string_view, kCategoryCount> kCategoryNames{
    "tasks", "events", "gateways", "flows", "lanes"};

// Which two multisets make up each aggregate.
inline constexpr std::array<std::array<Element, 2>, kCategoryCount>
    kCategoryElements{{{Element::task_names, Element::task_types},
                       {Element::event_names, Element::event_types},
                       {Element::gateway_names, Element::gateway_types},
                       {Element::sequence_flows, Element::message_flows},
                       {Element::lane_names, Element::lane_refs}}};

// Per-multiset matching trace kept for auditability of scores.
struct MultisetTrace {
  std::vector<std::string> items_gt;
  std::vector<std::string> items_gen;
  Matching matching;
};

struct ScoreReport {
  double overall = 1.0;
  std::array<std::optional<double>, kCategoryCount> category_scores;
  std::array<std::optional<double>, kElementCount> element_scores;
  std::array<std::size_t, kElementCount> weights{};
  std::array<MultisetTrace, kElementCount> traces;

  std::optional<double> category(Category c) const {
    return category_scores[static_cast<std::size_t>(c)];
  }
  std::optional<double> element(Element e) const {
    return element_scores[static_cast<std::size_t>(e)];
  }
};

// Weighted recombination of the ten element scores with cardinality weights
// w_i = |E_i,gt| + |E_i,gen|. A zero-weight score is reported absent and
// contributes nothing; two empty models are fully similar.
inline ScoreReport score_models(const ElementBreakdown& gt,
                                const ElementBreakdown& gen,
                                SimilarityScorer& scorer, double threshold) {
  ScoreReport report;
  double weighted_sum = 0.0;
  std::size_t weight_total = 0;

  for (std::size_t i = 0; i < kElementCount; ++i) {
    const Element e = static_cast<Element>(i);
    MultisetTrace& trace = report.traces[i];
    trace.items_gt = serialized_items(gt, e);
    trace.items_gen = serialized_items(gen, e);
    const std::size_t weight = trace.items_gt.size() + trace.items_gen.size();
    report.weights[i] = weight;
    if (weight == 0) continue;
    auto scored =
        detail::score_multiset(trace.items_gt, trace.items_gen, scorer,
                               threshold);
    report.element_scores[i] = scored.score;
    trace.matching = std::move(scored.matching);
    weighted_sum += static_cast<double>(weight) * scored.score;
    weight_total += weight;
  }
  report.overall = weight_total == 0
                       ? 1.0
                       : weighted_sum / static_cast<double>(weight_total);

  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    double cat_sum = 0.0;
    std::size_t cat_weight = 0;
    for (Element e : kCategoryElements[c]) {
      const std::size_t i = static_cast<std::size_t>(e);
      if (!report.element_scores[i]) continue;
      cat_sum += static_cast<double>(report.weights[i]) *
                 *report.element_scores[i];
      cat_weight += report.weights[i];
    }
    if (cat_weight > 0) {
      report.category_scores[c] = cat_sum / static_cast<double>(cat_weight);
    }
  }
  return report;
}

inline ScoreReport score_models(const ElementBreakdown& gt,
                                const ElementBreakdown& gen,
                                const MatchingConfig& cfg) {
  auto scorer = make_scorer(cfg.provider);
  return score_models(gt, gen, *scorer, cfg.threshold);
}

inline nlohmann::ordered_json score_report_to_json(const ScoreReport& r,
                                                   bool include_trace = false) {
  nlohmann::ordered_json j;
  j["overall"] = r.overall;
  nlohmann::ordered_json categories;
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    const auto& s = r.category_scores[c];
    categories[std::string(kCategoryNames[c])] =
        s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json(nullptr);
  }
  j["categories"] = std::move(categories);
  nlohmann::ordered_json elements, weights;
  for (std::size_t i = 0; i < kElementCount; ++i) {
    const std::string code(kElementCodes[i]);
    const auto& s = r.element_scores[i];
    elements[code] =
        s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json(nullptr);
    weights[code] = r.weights[i];
  }
  j["elements"] = std::move(elements);
  j["weights"] = std::move(weights);
  if (include_trace) {
    nlohmann::ordered_json matchings;
    for (std::size_t i = 0; i < kElementCount; ++i) {
      nlohmann::ordered_json t;
      t["gt"] = r.traces[i].items_gt;
      t["generated"] = r.traces[i].items_gen;
      t["pairs"] = nlohmann::ordered_json::array();
      for (const auto& p : r.traces[i].matching.pairs) {
        t["pairs"].push_back({p.index_a, p.index_b, p.similarity});
      }
      matchings[std::string(kElementCodes[i])] = std::move(t);
    }
    j["matchings"] = std::move(matchings);
  }
  return j;
}

inline ScoreReport score_report_from_json(const nlohmann::json& j) {
  ScoreReport r;
  r.overall = j.at("overall").get<double>();
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    const auto& v = j.at("categories").at(std::string(kCategoryNames[c]));
    if (!v.is_null()) r.category_scores[c] = v.get<double>();
  }
  for (std::size_t i = 0; i < kElementCount; ++i) {
    const std::string code(kElementCodes[i]);
    const auto& v = j.at("elements").at(code);
    if (!v.is_null()) r.element_scores[i] = v.get<double>();
    r.weights[i] = j.at("weights").at(code).get<std::size_t>();
  }
  return r;
}

}  // namespace bpmkit
