#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "bpmkit/model.hpp"

namespace bpmkit {

// ---------------------------------------------------------------------------
// Element-wise breakdown of a model into ten multisets: task names/types,
// event names/types, gateway names/types, lane names, lane refs, and the
// sequence/message flow triples.
// ---------------------------------------------------------------------------

struct LaneName {
  std::string pool;
  std::string lane;
  bool operator==(const LaneName&) const = default;
};

// (pool, lane, referenced element) where the reference is rendered as the
// element's name (tasks, named events), type (gateways, unnamed events).
struct LaneRef {
  std::string pool;
  std::string lane;
  std::string ref;
  bool operator==(const LaneRef&) const = default;
};

// (source, connector, target) with the connector label empty when the flow
// carries no condition/label.
struct FlowTriple {
  std::string source;
  std::string connector;
  std::string target;
  bool operator==(const FlowTriple&) const = default;
};

enum class Element {
  task_names = 0,
  task_types,
  event_names,
  event_types,
  gateway_names,
  gateway_types,
  lane_names,
  lane_refs,
  sequence_flows,
  message_flows,
};

inline constexpr std::size_t kElementCount = 10;

inline constexpr std::array<std::string_view, kElementCount> kElementCodes{
    "TN", "TT", "EN", "ET", "GN", "GT", "LN", "LR", "SF", "MF"};

inline std::string_view element_code(Element e) {
  return kElementCodes[static_cast<std::size_t>(e)];
}

struct ElementBreakdown {
  std::vector<std::string> task_names;
  std::vector<std::string> task_types;
  std::vector<std::string> event_names;
  std::vector<std::string> event_types;
  std::vector<std::string> gateway_names;
  std::vector<std::string> gateway_types;
  std::vector<LaneName> lane_names;
  std::vector<LaneRef> lane_refs;
  std::vector<FlowTriple> sequence_flows;
  std::vector<FlowTriple> message_flows;

  std::size_t size_of(Element e) const {
    switch (e) {
      case Element::task_names: return task_names.size();
      case Element::task_types: return task_types.size();
      case Element::event_names: return event_names.size();
      case Element::event_types: return event_types.size();
      case Element::gateway_names: return gateway_names.size();
      case Element::gateway_types: return gateway_types.size();
      case Element::lane_names: return lane_names.size();
      case Element::lane_refs: return lane_refs.size();
      case Element::sequence_flows: return sequence_flows.size();
      case Element::message_flows: return message_flows.size();
    }
    return 0;
  }
};

// Id lookup across every referenceable element of a model. Lanes remember
// their enclosing pool so endpoints can render as "pool / lane".
struct ElementIndex {
  enum class Kind { task, event, gateway, pool, lane };
  struct Entry {
    Kind kind;
    std::size_t index;       // position within its collection
    std::size_t pool_index;  // lanes only
    std::size_t lane_index;  // lanes only
  };
  std::unordered_map<std::string, Entry> by_id;

  static ElementIndex build(const CanonicalModel& m) {
    ElementIndex idx;
    for (std::size_t i = 0; i < m.tasks.size(); ++i) {
      idx.by_id.emplace(m.tasks[i].id, Entry{Kind::task, i, 0, 0});
    }
    for (std::size_t i = 0; i < m.events.size(); ++i) {
      idx.by_id.emplace(m.events[i].id, Entry{Kind::event, i, 0, 0});
    }
    for (std::size_t i = 0; i < m.gateways.size(); ++i) {
      idx.by_id.emplace(m.gateways[i].id, Entry{Kind::gateway, i, 0, 0});
    }
    for (std::size_t p = 0; p < m.pools.size(); ++p) {
      idx.by_id.emplace(m.pools[p].id, Entry{Kind::pool, p, 0, 0});
      for (std::size_t l = 0; l < m.pools[p].lanes.size(); ++l) {
        idx.by_id.emplace(m.pools[p].lanes[l].id, Entry{Kind::lane, l, p, l});
      }
    }
    return idx;
  }
};

// Renders a flow endpoint or lane reference as comparable text:
// task -> name; event -> name, or its type when unnamed; gateway -> type;
// lane -> "pool / lane"; pool -> "pool / " with an empty lane part.
inline std::string render_endpoint(const std::string& element_id,
                                   const CanonicalModel& m,
                                   const ElementIndex& idx) {
  auto it = idx.by_id.find(element_id);
  if (it == idx.by_id.end()) {
    throw std::invalid_argument("render_endpoint: unresolvable id '" +
                                element_id + "'");
  }
  const ElementIndex::Entry& e = it->second;
  switch (e.kind) {
    case ElementIndex::Kind::task:
      return m.tasks[e.index].name;
    case ElementIndex::Kind::event: {
      const Event& ev = m.events[e.index];
      return ev.name.empty() ? ev.type : ev.name;
    }
    case ElementIndex::Kind::gateway:
      return m.gateways[e.index].type;
    case ElementIndex::Kind::pool:
      return m.pools[e.index].name + " / ";
    case ElementIndex::Kind::lane:
      return m.pools[e.pool_index].name + " / " +
             m.pools[e.pool_index].lanes[e.lane_index].name;
  }
  return {};
}

inline std::string render_endpoint(const std::string& element_id,
                                   const CanonicalModel& m) {
  return render_endpoint(element_id, m, ElementIndex::build(m));
}

// Decomposes a model into the ten multisets. Empty names are excluded from
// the name multisets; types are always included. The model must have passed
// validation: a dangling reference raises.
inline ElementBreakdown breakdown(const CanonicalModel& m) {
  const ElementIndex idx = ElementIndex::build(m);
  ElementBreakdown b;

  for (const auto& t : m.tasks) {
    if (!t.name.empty()) b.task_names.push_back(t.name);
    b.task_types.push_back(t.type);
  }
  for (const auto& e : m.events) {
    if (!e.name.empty()) b.event_names.push_back(e.name);
    b.event_types.push_back(e.type);
  }
  for (const auto& g : m.gateways) {
    if (g.name && !g.name->empty()) b.gateway_names.push_back(*g.name);
    b.gateway_types.push_back(g.type);
  }
  for (const auto& p : m.pools) {
    for (const auto& l : p.lanes) {
      b.lane_names.push_back({p.name, l.name});
      for (const auto& ref : l.element_refs) {
        b.lane_refs.push_back({p.name, l.name, render_endpoint(ref, m, idx)});
      }
    }
  }
  for (const auto& f : m.sequence_flows) {
    b.sequence_flows.push_back({render_endpoint(f.source, m, idx),
                                f.condition.value_or(""),
                                render_endpoint(f.target, m, idx)});
  }
  for (const auto& f : m.message_flows) {
    b.message_flows.push_back({render_endpoint(f.source, m, idx),
                               f.label.value_or(""),
                               render_endpoint(f.target, m, idx)});
  }
  return b;
}

// JSON object with keys TN..MF; tuple items become arrays.
inline nlohmann::ordered_json breakdown_to_json(const ElementBreakdown& b) {
  nlohmann::ordered_json j;
  j["TN"] = b.task_names;
  j["TT"] = b.task_types;
  j["EN"] = b.event_names;
  j["ET"] = b.event_types;
  j["GN"] = b.gateway_names;
  j["GT"] = b.gateway_types;
  j["LN"] = nlohmann::ordered_json::array();
  for (const auto& ln : b.lane_names) j["LN"].push_back({ln.pool, ln.lane});
  j["LR"] = nlohmann::ordered_json::array();
  for (const auto& lr : b.lane_refs) {
    j["LR"].push_back({lr.pool, lr.lane, lr.ref});
  }
  j["SF"] = nlohmann::ordered_json::array();
  for (const auto& f : b.sequence_flows) {
    j["SF"].push_back({f.source, f.connector, f.target});
  }
  j["MF"] = nlohmann::ordered_json::array();
  for (const auto& f : b.message_flows) {
    j["MF"].push_back({f.source, f.connector, f.target});
  }
  return j;
}

}  // namespace bpmkit
