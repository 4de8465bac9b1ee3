#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "bpmkit/text.hpp"

namespace bpmkit {

// ---------------------------------------------------------------------------
// Canonical simplified process-model schema.
//
// A model is a flat collection of tasks, events, gateways, pools (with lanes)
// and flows, cross-referenced by opaque string ids. Names, types, labels and
// conditions are whitespace-normalized at parse time; ids are never touched.
// ---------------------------------------------------------------------------

struct Task {
  std::string id;
  std::string name;
  std::string type;
  bool operator==(const Task&) const = default;
};

struct Event {
  std::string id;
  std::string name;  // may legitimately be empty (e.g. unlabeled end events)
  std::string type;
  bool operator==(const Event&) const = default;
};

struct Gateway {
  std::string id;
  std::optional<std::string> name;
  std::string type;
  bool operator==(const Gateway&) const = default;
};

struct Lane {
  std::string id;
  std::string name;
  std::vector<std::string> element_refs;
  bool operator==(const Lane&) const = default;
};

struct Pool {
  std::string id;
  std::string name;
  std::vector<Lane> lanes;
  bool operator==(const Pool&) const = default;
};

struct SequenceFlow {
  std::string id;
  std::string source;
  std::string target;
  std::optional<std::string> condition;
  bool operator==(const SequenceFlow&) const = default;
};

struct MessageFlow {
  std::string id;
  std::string source;
  std::string target;
  std::optional<std::string> label;
  bool operator==(const MessageFlow&) const = default;
};

struct CanonicalModel {
  std::vector<Task> tasks;
  std::vector<Event> events;
  std::vector<Gateway> gateways;
  std::vector<Pool> pools;
  std::vector<SequenceFlow> sequence_flows;
  std::vector<MessageFlow> message_flows;
};

struct Issue {
  std::string code;
  std::string element_id;
  std::string message;
  bool operator==(const Issue&) const = default;
};

struct ValidationReport {
  std::vector<Issue> errors;
  std::vector<Issue> warnings;
  bool valid() const { return errors.empty(); }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& what, std::string path)
      : std::runtime_error(what + " at " + path), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct ParseResult {
  CanonicalModel model;
  std::vector<Issue> warnings;  // e.g. unknown JSON keys, ignored
};

// Returns a copy with every collection sorted by id (lanes within their pool,
// lane element refs lexicographically). Serialization and equality both run
// on this form, so element order in the input never matters.
inline CanonicalModel canonicalize(CanonicalModel m) {
  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::sort(m.tasks.begin(), m.tasks.end(), by_id);
  std::sort(m.events.begin(), m.events.end(), by_id);
  std::sort(m.gateways.begin(), m.gateways.end(), by_id);
  std::sort(m.pools.begin(), m.pools.end(), by_id);
  std::sort(m.sequence_flows.begin(), m.sequence_flows.end(), by_id);
  std::sort(m.message_flows.begin(), m.message_flows.end(), by_id);
  for (auto& pool : m.pools) {
    std::sort(pool.lanes.begin(), pool.lanes.end(), by_id);
    for (auto& lane : pool.lanes) {
      std::sort(lane.element_refs.begin(), lane.element_refs.end());
    }
  }
  return m;
}

inline bool operator==(const CanonicalModel& a, const CanonicalModel& b) {
  const CanonicalModel ca = canonicalize(a);
  const CanonicalModel cb = canonicalize(b);
  return ca.tasks == cb.tasks && ca.events == cb.events &&
         ca.gateways == cb.gateways && ca.pools == cb.pools &&
         ca.sequence_flows == cb.sequence_flows &&
         ca.message_flows == cb.message_flows;
}

inline bool operator!=(const CanonicalModel& a, const CanonicalModel& b) {
  return !(a == b);
}

namespace detail {

inline std::string json_index(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

// Ids are opaque strings, but generated JSON often carries them as numbers
// ("use numbers for the ids"); both are accepted and canonicalized to text.
inline std::string read_id(const nlohmann::json& obj, const char* key,
                           const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw SchemaError("missing required field", path + "." + key);
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer() || it->is_number_unsigned()) return it->dump();
  throw SchemaError("expected a string identifier", path + "." + key);
}

inline std::string read_required_text(const nlohmann::json& obj,
                                      const char* key,
                                      const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw SchemaError("missing required field", path + "." + key);
  }
  if (!it->is_string()) throw SchemaError("expected a string", path + "." + key);
  return normalize_whitespace(it->get<std::string>());
}

inline std::string read_text_or_empty(const nlohmann::json& obj,
                                      const char* key,
                                      const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw SchemaError("expected a string", path + "." + key);
  return normalize_whitespace(it->get<std::string>());
}

inline std::optional<std::string> read_optional_text(const nlohmann::json& obj,
                                                     const char* key,
                                                     const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw SchemaError("expected a string", path + "." + key);
  return normalize_whitespace(it->get<std::string>());
}

inline const nlohmann::json& expect_array(const nlohmann::json& parent,
                                          const char* key,
                                          const std::string& path,
                                          const nlohmann::json& empty) {
  auto it = parent.find(key);
  if (it == parent.end() || it->is_null()) return empty;
  if (!it->is_array()) throw SchemaError("expected an array", path);
  return *it;
}

inline const nlohmann::json& expect_object(const nlohmann::json& v,
                                           const std::string& path) {
  if (!v.is_object()) throw SchemaError("expected an object", path);
  return v;
}

template <typename KnownKeys>
inline void warn_unknown_keys(const nlohmann::json& obj,
                              const KnownKeys& known, const std::string& path,
                              std::vector<Issue>& warnings) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      warnings.push_back({"UNKNOWN_KEY", path + "." + it.key(),
                          "unknown key ignored"});
    }
  }
}

}  // namespace detail

// Parses canonical model JSON. Malformed JSON raises ParseError (with the
// byte offset reported by the JSON parser); a missing or mistyped required
// field raises SchemaError naming the path. Unknown keys are ignored and
// reported as warnings.
inline ParseResult parse_model(std::string_view json_text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
  if (!root.is_object()) throw SchemaError("expected an object", "$");

  ParseResult result;
  CanonicalModel& m = result.model;
  const nlohmann::json empty_array = nlohmann::json::array();

  static const std::vector<std::string> top_keys{
      "tasks", "events", "gateways", "pools", "sequenceFlows", "messageFlows"};
  detail::warn_unknown_keys(root, top_keys, "$", result.warnings);

  static const std::vector<std::string> named_keys{"id", "name", "type"};
  static const std::vector<std::string> pool_keys{"id", "name", "lanes"};
  static const std::vector<std::string> lane_keys{"id", "name", "elementRefs"};
  static const std::vector<std::string> sf_keys{"id", "source", "target",
                                                "condition"};
  static const std::vector<std::string> mf_keys{"id", "source", "target",
                                                "label"};

  const auto& tasks =
      detail::expect_array(root, "tasks", "tasks", empty_array);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string path = detail::json_index("tasks", i);
    const auto& t = detail::expect_object(tasks[i], path);
    detail::warn_unknown_keys(t, named_keys, path, result.warnings);
    m.tasks.push_back({detail::read_id(t, "id", path),
                       detail::read_text_or_empty(t, "name", path),
                       detail::read_required_text(t, "type", path)});
  }

  const auto& events =
      detail::expect_array(root, "events", "events", empty_array);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::string path = detail::json_index("events", i);
    const auto& e = detail::expect_object(events[i], path);
    detail::warn_unknown_keys(e, named_keys, path, result.warnings);
    m.events.push_back({detail::read_id(e, "id", path),
                        detail::read_text_or_empty(e, "name", path),
                        detail::read_required_text(e, "type", path)});
  }

  const auto& gateways =
      detail::expect_array(root, "gateways", "gateways", empty_array);
  for (std::size_t i = 0; i < gateways.size(); ++i) {
    const std::string path = detail::json_index("gateways", i);
    const auto& g = detail::expect_object(gateways[i], path);
    detail::warn_unknown_keys(g, named_keys, path, result.warnings);
    m.gateways.push_back({detail::read_id(g, "id", path),
                          detail::read_optional_text(g, "name", path),
                          detail::read_required_text(g, "type", path)});
  }

  const auto& pools =
      detail::expect_array(root, "pools", "pools", empty_array);
  for (std::size_t i = 0; i < pools.size(); ++i) {
    const std::string path = detail::json_index("pools", i);
    const auto& p = detail::expect_object(pools[i], path);
    detail::warn_unknown_keys(p, pool_keys, path, result.warnings);
    Pool pool{detail::read_id(p, "id", path),
              detail::read_text_or_empty(p, "name", path),
              {}};
    const auto& lanes =
        detail::expect_array(p, "lanes", path + ".lanes", empty_array);
    for (std::size_t k = 0; k < lanes.size(); ++k) {
      const std::string lane_path = detail::json_index(path + ".lanes", k);
      const auto& l = detail::expect_object(lanes[k], lane_path);
      detail::warn_unknown_keys(l, lane_keys, lane_path, result.warnings);
      Lane lane{detail::read_id(l, "id", lane_path),
                detail::read_text_or_empty(l, "name", lane_path),
                {}};
      const auto& refs = detail::expect_array(
          l, "elementRefs", lane_path + ".elementRefs", empty_array);
      for (std::size_t r = 0; r < refs.size(); ++r) {
        const std::string ref_path =
            detail::json_index(lane_path + ".elementRefs", r);
        const auto& ref = refs[r];
        if (ref.is_string()) {
          lane.element_refs.push_back(ref.get<std::string>());
        } else if (ref.is_number_integer() || ref.is_number_unsigned()) {
          lane.element_refs.push_back(ref.dump());
        } else {
          throw SchemaError("expected a string identifier", ref_path);
        }
      }
      pool.lanes.push_back(std::move(lane));
    }
    m.pools.push_back(std::move(pool));
  }

  const auto& sfs = detail::expect_array(root, "sequenceFlows",
                                         "sequenceFlows", empty_array);
  for (std::size_t i = 0; i < sfs.size(); ++i) {
    const std::string path = detail::json_index("sequenceFlows", i);
    const auto& f = detail::expect_object(sfs[i], path);
    detail::warn_unknown_keys(f, sf_keys, path, result.warnings);
    m.sequence_flows.push_back({detail::read_id(f, "id", path),
                                detail::read_id(f, "source", path),
                                detail::read_id(f, "target", path),
                                detail::read_optional_text(f, "condition", path)});
  }

  const auto& mfs = detail::expect_array(root, "messageFlows",
                                         "messageFlows", empty_array);
  for (std::size_t i = 0; i < mfs.size(); ++i) {
    const std::string path = detail::json_index("messageFlows", i);
    const auto& f = detail::expect_object(mfs[i], path);
    detail::warn_unknown_keys(f, mf_keys, path, result.warnings);
    m.message_flows.push_back({detail::read_id(f, "id", path),
                               detail::read_id(f, "source", path),
                               detail::read_id(f, "target", path),
                               detail::read_optional_text(f, "label", path)});
  }

  return result;
}

// Checks referential integrity without mutating the model. Error codes:
//   DUPLICATE_ID     an id defined more than once anywhere in the model
//   DANGLING_REF     a flow endpoint or lane ref naming a nonexistent id
//   LANE_REF_KIND    a lane ref resolving to something other than a
//                    task, event, or gateway
//   EMPTY_TASK_NAME  a task whose name is empty after normalization
inline ValidationReport validate_model(const CanonicalModel& m) {
  ValidationReport report;
  enum class Kind { task, event, gateway, pool, lane, flow };
  std::unordered_map<std::string, Kind> ids;

  auto define = [&](const std::string& id, Kind kind) {
    auto [it, inserted] = ids.emplace(id, kind);
    if (!inserted) {
      report.errors.push_back(
          {"DUPLICATE_ID", id, "id defined more than once"});
    }
  };

  for (const auto& t : m.tasks) define(t.id, Kind::task);
  for (const auto& e : m.events) define(e.id, Kind::event);
  for (const auto& g : m.gateways) define(g.id, Kind::gateway);
  for (const auto& p : m.pools) {
    define(p.id, Kind::pool);
    for (const auto& l : p.lanes) define(l.id, Kind::lane);
  }
  for (const auto& f : m.sequence_flows) define(f.id, Kind::flow);
  for (const auto& f : m.message_flows) define(f.id, Kind::flow);

  for (const auto& t : m.tasks) {
    if (t.name.empty()) {
      report.errors.push_back(
          {"EMPTY_TASK_NAME", t.id, "task name must be non-empty"});
    }
  }

  auto check_lane_ref = [&](const Lane& lane, const std::string& ref) {
    auto it = ids.find(ref);
    if (it == ids.end()) {
      report.errors.push_back({"DANGLING_REF", lane.id,
                               "lane references unknown id '" + ref + "'"});
      return;
    }
    if (it->second != Kind::task && it->second != Kind::event &&
        it->second != Kind::gateway) {
      report.errors.push_back(
          {"LANE_REF_KIND", lane.id,
           "lane reference '" + ref +
               "' must name a task, event, or gateway"});
    }
  };
  for (const auto& p : m.pools) {
    for (const auto& l : p.lanes) {
      for (const auto& ref : l.element_refs) check_lane_ref(l, ref);
    }
  }

  auto check_endpoint = [&](const std::string& flow_id,
                            const std::string& ref, const char* which) {
    auto it = ids.find(ref);
    if (it == ids.end()) {
      report.errors.push_back({"DANGLING_REF", flow_id,
                               std::string(which) + " references unknown id '" +
                                   ref + "'"});
    } else if (it->second == Kind::flow) {
      report.errors.push_back(
          {"DANGLING_REF", flow_id,
           std::string(which) + " '" + ref + "' names a flow, not an element"});
    }
  };
  for (const auto& f : m.sequence_flows) {
    check_endpoint(f.id, f.source, "source");
    check_endpoint(f.id, f.target, "target");
  }
  for (const auto& f : m.message_flows) {
    check_endpoint(f.id, f.source, "source");
    check_endpoint(f.id, f.target, "target");
  }

  return report;
}

// Deterministic JSON text: canonical key order, elements sorted by id,
// absent optional fields omitted. Refuses models that fail validation.
inline std::string serialize_model(const CanonicalModel& m) {
  const ValidationReport report = validate_model(m);
  if (!report.valid()) {
    const Issue& first = report.errors.front();
    throw std::invalid_argument("serialize_model: model is invalid (" +
                                first.code + " on '" + first.element_id +
                                "': " + first.message + ")");
  }
  const CanonicalModel c = canonicalize(m);

  nlohmann::ordered_json j;
  j["tasks"] = nlohmann::ordered_json::array();
  for (const auto& t : c.tasks) {
    j["tasks"].push_back({{"id", t.id}, {"name", t.name}, {"type", t.type}});
  }
  j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : c.events) {
    j["events"].push_back({{"id", e.id}, {"name", e.name}, {"type", e.type}});
  }
  j["gateways"] = nlohmann::ordered_json::array();
  for (const auto& g : c.gateways) {
    nlohmann::ordered_json item{{"id", g.id}};
    if (g.name) item["name"] = *g.name;
    item["type"] = g.type;
    j["gateways"].push_back(std::move(item));
  }
  j["pools"] = nlohmann::ordered_json::array();
  for (const auto& p : c.pools) {
    nlohmann::ordered_json lanes = nlohmann::ordered_json::array();
    for (const auto& l : p.lanes) {
      lanes.push_back(
          {{"id", l.id}, {"name", l.name}, {"elementRefs", l.element_refs}});
    }
    j["pools"].push_back(
        {{"id", p.id}, {"name", p.name}, {"lanes", std::move(lanes)}});
  }
  j["sequenceFlows"] = nlohmann::ordered_json::array();
  for (const auto& f : c.sequence_flows) {
    nlohmann::ordered_json item{
        {"id", f.id}, {"source", f.source}, {"target", f.target}};
    if (f.condition) item["condition"] = *f.condition;
    j["sequenceFlows"].push_back(std::move(item));
  }
  j["messageFlows"] = nlohmann::ordered_json::array();
  for (const auto& f : c.message_flows) {
    nlohmann::ordered_json item{
        {"id", f.id}, {"source", f.source}, {"target", f.target}};
    if (f.label) item["label"] = *f.label;
    j["messageFlows"].push_back(std::move(item));
  }

  return j.dump(2) + "\n";
}

// Machine-readable description of the canonical model format; embedded in
// extraction prompts and kept in sync with parse_model/serialize_model.
inline const std::string& canonical_schema_text() {
  static const std::string schema = R"({
  "type": "object",
  "properties": {
    "tasks": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "id": {"type": "string"},
          "name": {"type": "string"},
          "type": {"type": "string", "description": "task type, e.g. abstract or manual"}
        },
        "required": ["id", "name", "type"]
      }
    },
    "events": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "id": {"type": "string"},
          "name": {"type": "string", "description": "may be empty"},
          "type": {"type": "string", "description": "event type, e.g. Start None or End None"}
        },
        "required": ["id", "type"]
      }
    },
    "gateways": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "id": {"type": "string"},
          "name": {"type": "string", "description": "optional"},
          "type": {"type": "string", "description": "gateway type, e.g. exclusive or parallel"}
        },
        "required": ["id", "type"]
      }
    },
    "pools": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "id": {"type": "string"},
          "name": {"type": "string"},
          "lanes": {
            "type": "array",
            "items": {
              "type": "object",
              "properties": {
                "id": {"type": "string"},
                "name": {"type": "string"},
                "elementRefs": {"type": "array", "items": {"type": "string"}}
              },
              "required": ["id", "name", "elementRefs"]
            }
          }
        },
        "required": ["id", "name", "lanes"]
      }
    },
    "sequenceFlows": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "id": {"type": "string"},
          "source": {"type": "string"},
          "target": {"type": "string"},
          "condition": {"type": "string", "description": "optional"}
        },
        "required": ["id", "source", "target"]
      }
    },
    "messageFlows": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "id": {"type": "string"},
          "source": {"type": "string"},
          "target": {"type": "string"},
          "label": {"type": "string", "description": "optional"}
        },
        "required": ["id", "source", "target"]
      }
    }
  },
  "required": ["tasks", "events", "gateways", "pools", "sequenceFlows", "messageFlows"]
})";
  return schema;
}

}  // namespace bpmkit
