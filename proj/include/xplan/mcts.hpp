#pragma once

// UCT search over vehicle-assignment actions at one decision epoch.
//
// The tree alternates two node roles:
//   decision nodes  (the root and every demand transition) hold a pending
//                   request; their children are assign/reject actions.
//   action nodes    (assign, reject) hold the state right after the action;
//                   their children are sampled demand transitions.
// Future demand under an action node is drawn from a key derived from the
// chance path only, so sibling actions see the same sampled futures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xplan/common.hpp"
#include "xplan/transit.hpp"

namespace xplan {

enum class ActionKind { root, assign, reject, demand };

inline std::string_view to_string(ActionKind k) {
  switch (k) {
  case ActionKind::root: return "root";
  case ActionKind::assign: return "assign";
  case ActionKind::reject: return "reject";
  case ActionKind::demand: return "demand";
  }
  return "root";
}

struct Action {
  ActionKind kind = ActionKind::root;
  int vehicle = -1;    // assign only
  Insertion insertion; // assign only
  int request_id = -1; // request decided (assign/reject) or arrived (demand)
  friend bool operator==(const Action&, const Action&) = default;
};

struct MctsConfig {
  int iterations = 1000;
  double exploration = 1.4142135623730951;
  int horizon = 60;         // simulated minutes past the root epoch
  int max_children = 3;     // insertions tried per vehicle at a decision node
  int chance_children = 2;  // sampled demand transitions per action node
  DemandModel demand;
  std::uint64_t seed = 0;
  friend bool operator==(const MctsConfig&, const MctsConfig&) = default;
};

struct TreeNode {
  int id = 0;
  std::optional<int> parent;
  Action action;
  WorldState state;
  int visits = 0;
  double value = 0.0;            // W, sum of backed-up rewards
  double value_fulfillment = 0.0; // sum of a*w_f parts
  double value_timing = 0.0;      // sum of b*w_t parts
  std::vector<int> children;
  int depth = 0;

  double mean() const { return visits > 0 ? value / visits : 0.0; }
  bool is_decision() const { return action.kind == ActionKind::root || action.kind == ActionKind::demand; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct SearchTree {
  std::vector<TreeNode> nodes; // indexed by id
  int root = 0;
  Action decision;
  int request_id = -1;
  MctsConfig config;
  RewardWeights weights;
  std::uint64_t seed = 0;

  const TreeNode& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
  const TreeNode& root_node() const { return node(root); }
  friend bool operator==(const SearchTree&, const SearchTree&) = default;
};

struct PlanResult {
  Action decision;
  SearchTree tree;
  std::optional<std::string> violation; // set when a what-if asks for an infeasible action
};

// ---------------------------------------------------------------------------
// Feasibility and simple policies

inline std::vector<int> feasible_vehicles(const WorldState& s, const TripRequest& req) {
  std::vector<int> out;
  for (const auto& v : s.vehicles)
    if (v.operable && !feasible_insertions(s, req, v).empty()) out.push_back(v.id);
  std::sort(out.begin(), out.end());
  return out;
}

/// Cheapest feasible insertion over the whole fleet, lowest vehicle id on ties.
inline std::optional<Action> greedy_action(const WorldState& s, const TripRequest& req) {
  std::optional<Action> best;
  double best_cost = 0.0;
  for (const auto& v : s.vehicles) {
    auto opts = feasible_insertions(s, req, v);
    if (opts.empty()) continue;
    const auto& o = opts.front();
    if (!best || o.cost < best_cost || (o.cost == best_cost && v.id < best->vehicle)) {
      best = Action{ActionKind::assign, v.id, o.insertion, req.id};
      best_cost = o.cost;
    }
  }
  return best;
}

inline WorldState apply_action(const WorldState& s, const Action& a) {
  if (a.kind == ActionKind::assign) return apply_assignment(s, a.request_id, a.vehicle, a.insertion);
  if (a.kind == ActionKind::reject) return apply_rejection(s, a.request_id);
  return s;
}

inline void apply_greedy(WorldState& s, int request_id) {
  const TripRequest* req = find_request(s, request_id);
  if (!req) return;
  auto a = greedy_action(s, *req);
  s = a ? apply_action(s, *a) : apply_rejection(s, request_id);
}

inline std::optional<Action> random_feasible_action(const WorldState& s, const TripRequest& req, Rng& rng) {
  auto ids = feasible_vehicles(s, req);
  if (ids.empty()) return std::nullopt;
  const int v = ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(ids.size()) - 1))];
  auto opts = feasible_insertions(s, req, *find_vehicle(s, v));
  return Action{ActionKind::assign, v, opts.front().insertion, req.id};
}

inline int next_request_id(const WorldState& s) {
  int id = 0;
  for (const auto& r : s.requests) id = std::max(id, r.id + 1);
  return id;
}

// ---------------------------------------------------------------------------
// Search

namespace detail {

struct NodeMeta {
  std::vector<Action> untried; // decision nodes
  int chance_next = 0;         // action nodes
  bool chance_done = false;
  std::uint64_t chance_key = 0;
};

class Search {
public:
  Search(const WorldState& root_state, int request_id, const MctsConfig& cfg, const RewardWeights& w,
         std::optional<int> only_vehicle)
      : cfg_(cfg), weights_(w), only_vehicle_(only_vehicle),
        horizon_end_(root_state.time + cfg.horizon) {
    tree_.config = cfg;
    tree_.weights = w;
    tree_.seed = cfg.seed;
    tree_.request_id = request_id;
    TreeNode root;
    root.id = 0;
    root.action = Action{ActionKind::root, -1, {}, request_id};
    root.state = root_state;
    tree_.nodes.push_back(std::move(root));
    meta_.push_back(NodeMeta{});
    meta_[0].chance_key = cfg.seed;
    meta_[0].untried = candidate_actions(tree_.nodes[0].state, request_id, true);
  }

  SearchTree run() {
    for (int it = 0; it < cfg_.iterations; ++it) iterate(it);
    tree_.decision = choose_decision();
    return std::move(tree_);
  }

private:
  std::vector<Action> candidate_actions(const WorldState& s, int request_id, bool at_root) const {
    std::vector<Action> out;
    const TripRequest* req = find_request(s, request_id);
    if (!req) return out;
    for (const auto& v : s.vehicles) {
      if (at_root && only_vehicle_ && v.id != *only_vehicle_) continue;
      auto opts = feasible_insertions(s, *req, v);
      const std::size_t n = std::min<std::size_t>(opts.size(), static_cast<std::size_t>(std::max(1, cfg_.max_children)));
      for (std::size_t k = 0; k < n; ++k) out.push_back(Action{ActionKind::assign, v.id, opts[k].insertion, request_id});
    }
    if (!(at_root && only_vehicle_)) out.push_back(Action{ActionKind::reject, -1, {}, request_id});
    return out;
  }

  int add_child(int parent, Action a, WorldState s) {
    TreeNode n;
    n.id = static_cast<int>(tree_.nodes.size());
    n.parent = parent;
    n.action = a;
    n.state = std::move(s);
    n.depth = tree_.nodes[static_cast<std::size_t>(parent)].depth + 1;
    tree_.nodes[static_cast<std::size_t>(parent)].children.push_back(n.id);
    NodeMeta m;
    m.chance_key = meta_[static_cast<std::size_t>(parent)].chance_key;
    tree_.nodes.push_back(std::move(n));
    meta_.push_back(std::move(m));
    return static_cast<int>(tree_.nodes.size()) - 1;
  }

  // Samples chance child `k` of action node `id`; nullopt when the next
  // arrival falls past the horizon.
  std::optional<int> expand_chance(int id) {
    auto& m = meta_[static_cast<std::size_t>(id)];
    const int k = m.chance_next++;
    const std::uint64_t key = mix_seed(m.chance_key, static_cast<std::uint64_t>(k) + 1);
    Rng rng(key);
    const int t = next_arrival(rng, tree_.nodes[static_cast<std::size_t>(id)].state.time, cfg_.demand.rate);
    if (t > horizon_end_) {
      m.chance_done = true;
      return std::nullopt;
    }
    WorldState next = advance(tree_.nodes[static_cast<std::size_t>(id)].state, t);
    TripRequest req = sample_request(rng, next_request_id(next), t, cfg_.demand, travel_model(next));
    next.requests.push_back(req);
    const int child = add_child(id, Action{ActionKind::demand, -1, {}, req.id}, std::move(next));
    meta_[static_cast<std::size_t>(child)].chance_key = key;
    meta_[static_cast<std::size_t>(child)].untried =
        candidate_actions(tree_.nodes[static_cast<std::size_t>(child)].state, req.id, false);
    auto& parent_meta = meta_[static_cast<std::size_t>(id)]; // add_child may reallocate
    if (parent_meta.chance_next >= cfg_.chance_children) parent_meta.chance_done = true;
    return child;
  }

  int select_uct(int id) const {
    const TreeNode& n = tree_.nodes[static_cast<std::size_t>(id)];
    const double log_n = std::log(static_cast<double>(std::max(1, n.visits)));
    int best = -1;
    double best_score = 0.0;
    for (int c : n.children) {
      const TreeNode& ch = tree_.nodes[static_cast<std::size_t>(c)];
      const double score = ch.mean() + cfg_.exploration * std::sqrt(log_n / std::max(1, ch.visits));
      if (best < 0 || score > best_score) {
        best = c;
        best_score = score;
      }
    }
    return best;
  }

  int select_chance(int id) const {
    const TreeNode& n = tree_.nodes[static_cast<std::size_t>(id)];
    int best = -1;
    for (int c : n.children)
      if (best < 0 || tree_.nodes[static_cast<std::size_t>(c)].visits < tree_.nodes[static_cast<std::size_t>(best)].visits)
        best = c;
    return best;
  }

  RewardBreakdown rollout(int id, int iteration) const {
    const TreeNode& n = tree_.nodes[static_cast<std::size_t>(id)];
    WorldState s = n.state;
    if (n.is_decision()) apply_greedy(s, n.action.request_id);
    Rng rng(mix_seed(cfg_.seed ^ 0x5bd1e995ULL, static_cast<std::uint64_t>(iteration)));
    int t = s.time;
    for (;;) {
      t = next_arrival(rng, t, cfg_.demand.rate);
      if (t > horizon_end_) break;
      advance_in_place(s, t);
      TripRequest req = sample_request(rng, next_request_id(s), t, cfg_.demand, travel_model(s));
      s.requests.push_back(req);
      apply_greedy(s, req.id);
    }
    advance_in_place(s, horizon_end_);
    return reward(s.requests, weights_);
  }

  void iterate(int iteration) {
    std::vector<int> path{0};
    int cur = 0;
    int leaf = -1;
    while (leaf < 0) {
      TreeNode& n = tree_.nodes[static_cast<std::size_t>(cur)];
      NodeMeta& m = meta_[static_cast<std::size_t>(cur)];
      if (n.is_decision()) {
        if (!m.untried.empty()) {
          Action a = m.untried.front();
          m.untried.erase(m.untried.begin());
          WorldState next = apply_action(n.state, a);
          leaf = add_child(cur, a, std::move(next));
          path.push_back(leaf);
        } else if (n.children.empty()) {
          leaf = cur;
        } else {
          cur = select_uct(cur);
          path.push_back(cur);
        }
      } else {
        if (!m.chance_done && m.chance_next < cfg_.chance_children) {
          if (auto child = expand_chance(cur)) {
            leaf = *child;
            path.push_back(leaf);
            continue;
          }
        }
        if (tree_.nodes[static_cast<std::size_t>(cur)].children.empty()) {
          leaf = cur;
        } else {
          cur = select_chance(cur);
          path.push_back(cur);
        }
      }
    }
    const RewardBreakdown r = rollout(leaf, iteration);
    for (int id : path) {
      TreeNode& n = tree_.nodes[static_cast<std::size_t>(id)];
      n.visits += 1;
      n.value += r.total();
      n.value_fulfillment += r.fulfillment;
      n.value_timing += r.timing;
    }
  }

  Action choose_decision() const {
    const TreeNode& root = tree_.nodes[0];
    const TreeNode* best = nullptr;
    for (int c : root.children) {
      const TreeNode& ch = tree_.nodes[static_cast<std::size_t>(c)];
      if (ch.action.kind != ActionKind::assign || ch.visits == 0) continue;
      if (!best || ch.mean() > best->mean() ||
          (ch.mean() == best->mean() && ch.action.vehicle < best->action.vehicle))
        best = &ch;
    }
    if (best) return best->action;
    return Action{ActionKind::reject, -1, {}, tree_.request_id};
  }

  MctsConfig cfg_;
  RewardWeights weights_;
  std::optional<int> only_vehicle_;
  int horizon_end_;
  SearchTree tree_;
  std::vector<NodeMeta> meta_;
};

inline WorldState with_request(const WorldState& state, const TripRequest& request) {
  WorldState s = state;
  if (TripRequest* existing = find_request(s, request.id))
    *existing = request;
  else
    s.requests.push_back(request);
  return s;
}

} // namespace detail

inline PlanResult plan_restricted(const WorldState& state, const TripRequest& request, const MctsConfig& cfg,
                                  const RewardWeights& weights, std::optional<int> only_vehicle) {
  if (state.vehicles.empty()) throw domain_error("plan: no vehicles in state");
  if (request.status != RequestStatus::pending) throw domain_error("plan: request is not pending");
  if (cfg.iterations < 1) throw domain_error("plan: iterations must be >= 1");
  WorldState root = detail::with_request(state, request);
  detail::Search search(root, request.id, cfg, weights, only_vehicle);
  PlanResult out;
  out.tree = search.run();
  out.decision = out.tree.decision;
  return out;
}

inline PlanResult plan(const WorldState& state, const TripRequest& request, const MctsConfig& cfg,
                       const RewardWeights& weights = {}) {
  return plan_restricted(state, request, cfg, weights, std::nullopt);
}

// ---------------------------------------------------------------------------
// What-if operators

/// Tree consisting of the root only, returned when the requested what-if
/// action violates a constraint.
inline PlanResult violation_result(const WorldState& state, const TripRequest& request, const MctsConfig& cfg,
                                   const RewardWeights& weights, std::string why) {
  PlanResult out;
  out.tree.config = cfg;
  out.tree.weights = weights;
  out.tree.seed = cfg.seed;
  out.tree.request_id = request.id;
  TreeNode root;
  root.action = Action{ActionKind::root, -1, {}, request.id};
  root.state = detail::with_request(state, request);
  out.tree.nodes.push_back(std::move(root));
  out.decision = Action{ActionKind::reject, -1, {}, request.id};
  out.tree.decision = out.decision;
  out.violation = std::move(why);
  return out;
}

inline PlanResult whatif_search(const WorldState& state, const TripRequest& request, int vehicle_id,
                                const MctsConfig& cfg, const RewardWeights& weights = {}) {
  const VehicleState* v = find_vehicle(state, vehicle_id);
  if (!v) return violation_result(state, request, cfg, weights, "no such vehicle " + std::to_string(vehicle_id));
  if (!v->operable)
    return violation_result(state, request, cfg, weights, "vehicle " + std::to_string(vehicle_id) + " is inoperable");
  WorldState root = detail::with_request(state, request);
  if (feasible_insertions(root, request, *v).empty())
    return violation_result(state, request, cfg, weights,
                            "vehicle " + std::to_string(vehicle_id) + " has no capacity-feasible insertion");
  return plan_restricted(state, request, cfg, weights, vehicle_id);
}

inline PlanResult whatif_congestion(const WorldState& state, const TripRequest& request, double factor,
                                    const MctsConfig& cfg, const RewardWeights& weights = {}) {
  if (!(factor >= 1.0)) throw domain_error("whatif_congestion: factor must be >= 1");
  WorldState s = state;
  s.congestion_factor *= factor;
  retime_routes(s);
  return plan(s, request, cfg, weights);
}

inline PlanResult whatif_exclude(const WorldState& state, const TripRequest& request, int vehicle_id,
                                 const MctsConfig& cfg, const RewardWeights& weights = {}) {
  WorldState s = state;
  if (VehicleState* v = find_vehicle(s, vehicle_id)) v->operable = false;
  return plan(s, request, cfg, weights);
}

inline PlanResult whatif_multi(const WorldState& state, const TripRequest& request, int passengers,
                               const MctsConfig& cfg, const RewardWeights& weights = {}) {
  if (passengers < 1) throw domain_error("whatif_multi: passenger count must be >= 1");
  TripRequest r = request;
  r.passengers = passengers;
  return plan(state, r, cfg, weights);
}

/// Breaks `vehicle_id` down and re-plans every request it carried or was
/// committed to, in requested-pickup order, against the remaining fleet.
/// Onboard passengers are picked up again where the vehicle stands.
inline std::map<int, PlanResult> whatif_reassign(const WorldState& state, int vehicle_id, const MctsConfig& cfg,
                                                 const RewardWeights& weights = {}) {
  std::map<int, PlanResult> out;
  WorldState s = state;
  VehicleState* v = find_vehicle(s, vehicle_id);
  if (!v) return out;
  std::vector<int> affected;
  for (const auto& st : v->route)
    if (std::find(affected.begin(), affected.end(), st.request_id) == affected.end())
      affected.push_back(st.request_id);
  const Coord breakdown_at = v->location;
  v->route.clear();
  v->occupancy = 0;
  v->operable = false;
  for (int id : affected) {
    TripRequest* r = find_request(s, id);
    if (!r) continue;
    if (r->status == RequestStatus::in_transit) {
      r->origin = breakdown_at;
      r->t_ap.reset();
    }
    r->status = RequestStatus::pending;
    r->vehicle.reset();
  }
  std::vector<TripRequest> queue;
  for (int id : affected)
    if (const TripRequest* r = find_request(s, id)) queue.push_back(*r);
  std::stable_sort(queue.begin(), queue.end(), [](const auto& a, const auto& b) {
    return a.t_p != b.t_p ? a.t_p < b.t_p : a.id < b.id;
  });
  for (const auto& r : queue) {
    MctsConfig c = cfg;
    c.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(r.id));
    PlanResult res = plan(s, *find_request(s, r.id), c, weights);
    s = apply_action(s, res.decision);
    out.emplace(r.id, std::move(res));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Episodes

enum class Policy { mcts, random_feasible, greedy };

struct EpisodeResult {
  RewardBreakdown reward;
  int served = 0;
  int rejected = 0;
  std::vector<Action> decisions;
  WorldState final_state;
};

/// Plays `demand` against `fleet` one request per decision epoch and scores
/// the state `cfg.horizon` minutes after the last arrival.
inline EpisodeResult run_episode(const WorldState& fleet, const std::vector<TripRequest>& demand, Policy policy,
                                 const MctsConfig& cfg, const RewardWeights& weights, std::uint64_t seed) {
  EpisodeResult out;
  WorldState s = fleet;
  Rng rng(mix_seed(seed, 0xe9150de5ULL));
  int last = s.time;
  for (std::size_t k = 0; k < demand.size(); ++k) {
    const TripRequest& req = demand[k];
    advance_in_place(s, req.t_req);
    s.requests.push_back(req);
    last = std::max(last, req.t_req);
    Action a;
    if (policy == Policy::mcts) {
      MctsConfig c = cfg;
      c.seed = mix_seed(seed, static_cast<std::uint64_t>(k));
      a = plan(s, req, c, weights).decision;
    } else if (policy == Policy::random_feasible) {
      a = random_feasible_action(s, req, rng).value_or(Action{ActionKind::reject, -1, {}, req.id});
    } else {
      a = greedy_action(s, req).value_or(Action{ActionKind::reject, -1, {}, req.id});
    }
    if (a.kind == ActionKind::reject) a.request_id = req.id;
    s = apply_action(s, a);
    out.decisions.push_back(a);
    (a.kind == ActionKind::assign ? out.served : out.rejected) += 1;
  }
  advance_in_place(s, last + cfg.horizon);
  if (!s.requests.empty()) out.reward = reward(s.requests, weights);
  out.final_state = std::move(s);
  return out;
}

} // namespace xplan
