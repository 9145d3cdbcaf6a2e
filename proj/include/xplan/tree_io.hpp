#pragma once

// Versioned search-tree documents shared by the planner, scorer, CLI and
// HTTP service. Serialization is deterministic (sorted keys, shortest
// round-trip doubles), so parse followed by dump reproduces the bytes.

#include <fstream>
#include <sstream>
#include <string>

#include "xplan/mcts.hpp"
#include "xplan/transit_io.hpp"

namespace xplan {

inline constexpr int kTreeVersion = 1;

inline void to_json(json& j, const Action& a) {
  j = json{{"kind", std::string(to_string(a.kind))}, {"request_id", a.request_id}};
  if (a.kind == ActionKind::assign) {
    j["vehicle"] = a.vehicle;
    j["insertion"] = json::array({a.insertion.pickup, a.insertion.dropoff});
  }
}

inline void from_json(const json& j, Action& a) {
  require_known_keys(j, {"kind", "request_id", "vehicle", "insertion"}, "action");
  a = Action{};
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "root") a.kind = ActionKind::root;
  else if (kind == "assign") a.kind = ActionKind::assign;
  else if (kind == "reject") a.kind = ActionKind::reject;
  else if (kind == "demand") a.kind = ActionKind::demand;
  else throw domain_error("unknown action kind '" + kind + "'");
  a.request_id = j.value("request_id", -1);
  if (a.kind == ActionKind::assign) {
    a.vehicle = j.at("vehicle").get<int>();
    const auto& ins = j.at("insertion");
    a.insertion = {ins.at(0).get<int>(), ins.at(1).get<int>()};
  }
}

inline void to_json(json& j, const MctsConfig& c) {
  j = json{{"iterations", c.iterations},   {"exploration", c.exploration},
           {"horizon", c.horizon},         {"max_children", c.max_children},
           {"chance_children", c.chance_children}, {"demand", c.demand},
           {"seed", c.seed}};
}

inline void from_json(const json& j, MctsConfig& c) {
  require_known_keys(j, {"iterations", "exploration", "horizon", "max_children", "chance_children", "demand", "seed"},
                     "mcts");
  MctsConfig def;
  c.iterations = j.value("iterations", def.iterations);
  c.exploration = j.value("exploration", def.exploration);
  c.horizon = j.value("horizon", def.horizon);
  c.max_children = j.value("max_children", def.max_children);
  c.chance_children = j.value("chance_children", def.chance_children);
  c.demand = j.contains("demand") ? j.at("demand").get<DemandModel>() : def.demand;
  c.seed = j.value("seed", def.seed);
  if (c.iterations < 1) throw domain_error("mcts.iterations must be >= 1");
  if (!(c.exploration > 0.0)) throw domain_error("mcts.exploration must be positive");
}

inline std::string state_digest(const WorldState& s) { return hex64(fnv1a(json(s).dump())); }

inline json tree_to_json(const SearchTree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    json rec{{"id", n.id},
             {"parent", n.parent ? json(*n.parent) : json(nullptr)},
             {"action", n.action},
             {"N", n.visits},
             {"W", n.value},
             {"decomp", json::array({n.value_fulfillment, n.value_timing})},
             {"depth", n.depth},
             {"children", n.children},
             {"digest", state_digest(n.state)},
             {"state", n.state}};
    nodes.push_back(std::move(rec));
  }
  return json{{"version", kTreeVersion}, {"root", t.root},     {"request_id", t.request_id},
              {"decision", t.decision},   {"config", t.config}, {"weights", t.weights},
              {"seed", t.seed},           {"nodes", std::move(nodes)}};
}

inline SearchTree tree_from_json(const json& j) {
  require_known_keys(j, {"version", "root", "request_id", "decision", "config", "weights", "seed", "nodes"}, "tree");
  if (j.at("version").get<int>() != kTreeVersion) throw domain_error("unsupported tree version");
  SearchTree t;
  t.root = j.at("root").get<int>();
  t.request_id = j.at("request_id").get<int>();
  t.decision = j.at("decision").get<Action>();
  t.config = j.at("config").get<MctsConfig>();
  t.weights = j.at("weights").get<RewardWeights>();
  t.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& rec : j.at("nodes")) {
    require_known_keys(rec, {"id", "parent", "action", "N", "W", "decomp", "depth", "children", "digest", "state"},
                       "node");
    TreeNode n;
    n.id = rec.at("id").get<int>();
    if (!rec.at("parent").is_null()) n.parent = rec.at("parent").get<int>();
    n.action = rec.at("action").get<Action>();
    n.visits = rec.at("N").get<int>();
    n.value = rec.at("W").get<double>();
    n.value_fulfillment = rec.at("decomp").at(0).get<double>();
    n.value_timing = rec.at("decomp").at(1).get<double>();
    n.depth = rec.at("depth").get<int>();
    n.children = rec.at("children").get<std::vector<int>>();
    n.state = rec.at("state").get<WorldState>();
    if (n.id != static_cast<int>(t.nodes.size())) throw domain_error("tree nodes must be listed by id");
    t.nodes.push_back(std::move(n));
  }
  if (t.nodes.empty()) throw domain_error("tree has no nodes");
  for (const auto& n : t.nodes) {
    for (int c : n.children)
      if (c <= n.id || c >= static_cast<int>(t.nodes.size()) || t.nodes[static_cast<std::size_t>(c)].parent != n.id)
        throw domain_error("tree node " + std::to_string(n.id) + " has an invalid child");
  }
  return t;
}

inline std::string dump_tree(const SearchTree& t) { return tree_to_json(t).dump() + "\n"; }

inline SearchTree parse_tree(const std::string& text) {
  try {
    return tree_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw domain_error(std::string("tree: ") + e.what());
  }
}

inline SearchTree load_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw domain_error("cannot open tree file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_tree(ss.str());
}

inline std::string tree_digest(const SearchTree& t) { return hex64(fnv1a(dump_tree(t))); }

} // namespace xplan
