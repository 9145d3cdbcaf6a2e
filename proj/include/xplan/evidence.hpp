#pragma once

// Evidence scoring over a search tree.
//
// Base variables read one node (the root, or the most visited root child
// that assigns the named vehicle). Derived variables aggregate over the
// visited states of that vehicle's branch, weighting each state by its visit
// count; viod/vioa compare the requested time with the expected eta.
// Comparison templates evaluate two operands and, for every state of each
// operand's branch, record whether "state is on the branch and within
// capacity" implies the per-state comparison. What-if operators re-plan from
// the root state.
//
// Errors are values: a formula that cannot be scored yields an error result
// and never aborts the rest of a batch.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "xplan/ctl.hpp"
#include "xplan/logic.hpp"
#include "xplan/mcts.hpp"
#include "xplan/tree_io.hpp"

namespace xplan {

struct Minutes { double value = 0; friend bool operator==(const Minutes&, const Minutes&) = default; };
struct Count { int value = 0; friend bool operator==(const Count&, const Count&) = default; };
struct Ratio { double value = 0; friend bool operator==(const Ratio&, const Ratio&) = default; };
struct Boolean { bool value = false; friend bool operator==(const Boolean&, const Boolean&) = default; };
struct RewardValue { double value = 0; friend bool operator==(const RewardValue&, const RewardValue&) = default; };
struct VehicleRef {
  std::optional<int> vehicle; // empty when the request was rejected
  friend bool operator==(const VehicleRef&, const VehicleRef&) = default;
};
struct EtaPair {
  int pickup = 0;
  int dropoff = 0;
  friend bool operator==(const EtaPair&, const EtaPair&) = default;
};
struct WhatIfOutcome {
  std::string op;
  int argument = 0;
  std::optional<int> vehicle;     // decision; empty means reject
  std::optional<double> value;    // mean value of the decision branch
  std::optional<std::string> violation;
  std::vector<std::pair<int, std::optional<int>>> reassignments; // request -> vehicle
  std::string tree_digest;
  friend bool operator==(const WhatIfOutcome&, const WhatIfOutcome&) = default;
};
struct EvidenceError {
  std::string code; // no_such_vehicle, not_explored, no_samples, type_mismatch, planner_error
  std::string message;
  friend bool operator==(const EvidenceError&, const EvidenceError&) = default;
};

using EvidenceValue =
    std::variant<Minutes, Count, Ratio, Boolean, RewardValue, VehicleRef, EtaPair, WhatIfOutcome, EvidenceError>;

struct Implication {
  int node = 0;
  bool premise = false;
  bool outcome = false;
  bool holds() const { return !premise || outcome; }
  friend bool operator==(const Implication&, const Implication&) = default;
};

struct EvidenceResult {
  std::string formula; // canonical text
  EvidenceValue value;
  std::vector<int> provenance;
  int basis = 0; // total visits behind the value
  std::vector<Implication> implications;
  std::vector<std::string> notes;

  bool is_error() const { return std::holds_alternative<EvidenceError>(value); }
  friend bool operator==(const EvidenceResult&, const EvidenceResult&) = default;
};

inline std::string_view value_kind(const EvidenceValue& v) {
  static constexpr std::string_view names[] = {"minutes", "count", "ratio", "boolean", "reward",
                                               "vehicle", "eta",   "whatif", "error"};
  return names[v.index()];
}

/// Numeric reading of scalar kinds; nullopt for the rest.
inline std::optional<double> scalar_of(const EvidenceValue& v) {
  if (auto* m = std::get_if<Minutes>(&v)) return m->value;
  if (auto* c = std::get_if<Count>(&v)) return c->value;
  if (auto* r = std::get_if<Ratio>(&v)) return r->value;
  if (auto* w = std::get_if<RewardValue>(&v)) return w->value;
  return std::nullopt;
}

// Scalar semantics of the derived variables.
inline double delay_of(double requested, double scheduled) { return std::max(0.0, scheduled - requested); }
inline double advance_of(double requested, double scheduled) { return std::max(0.0, requested - scheduled); }

struct EvidenceQueryContext {
  const SearchTree* tree = nullptr;
  int request_id = -1;
  RewardWeights weights;
};

class EvidenceScorer {
public:
  explicit EvidenceScorer(EvidenceQueryContext ctx) : ctx_(ctx), tree_(*ctx.tree) {
    if (ctx_.request_id < 0) ctx_.request_id = tree_.request_id;
  }

  /// Runs the base, derived and comparison passes in order, sharing one
  /// cache of intermediate results; output follows input order.
  std::vector<EvidenceResult> score_all(const FormulaList& list) {
    for (const auto& f : list) collect(f, TermKind::base);
    for (const auto& f : list) collect(f, TermKind::derived);
    for (const auto& f : list) collect(f, TermKind::compare);
    for (const auto& f : list) collect(f, TermKind::whatif);
    std::vector<EvidenceResult> out;
    out.reserve(list.size());
    for (const auto& f : list) out.push_back(score(f));
    return out;
  }

  EvidenceResult score(const Term& t) {
    const std::string key = print_term(t);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    EvidenceResult r;
    switch (t.kind) {
    case TermKind::base: r = score_base(t); break;
    case TermKind::derived: r = score_derived(t); break;
    case TermKind::compare: r = score_compare(t); break;
    case TermKind::whatif: r = score_whatif(t); break;
    case TermKind::integer: r = error(t, "type_mismatch", "an integer is not a variable"); break;
    }
    r.formula = key;
    cache_.emplace(key, r);
    return r;
  }

  EvidenceResult score_base(const Term& t) {
    const TreeNode& root = tree_.root_node();
    const TripRequest* req = find_request(root.state, ctx_.request_id);
    if (!req) return error(t, "no_such_request", "request " + std::to_string(ctx_.request_id) + " is not in the tree");
    EvidenceResult r = make(t, {root.id}, root.visits);
    const std::string& n = t.name;
    if (n == "tp" || n == "td") {
      r.value = Minutes{static_cast<double>(n == "tp" ? req->t_p : req->t_d)};
      return r;
    }
    if (n == "car") {
      if (tree_.decision.kind == ActionKind::assign) {
        r.value = VehicleRef{tree_.decision.vehicle};
        if (auto b = decision_child()) r.provenance.push_back(*b);
      } else {
        r.value = VehicleRef{std::nullopt};
      }
      return r;
    }
    if (n == "availablecar") {
      r.value = Count{static_cast<int>(feasible_vehicles(root.state, *req).size())};
      return r;
    }
    const int vid = t.args.back().value;
    const VehicleState* v = find_vehicle(root.state, vid);
    if (!v) return error(t, "no_such_vehicle", "no such vehicle " + std::to_string(vid));
    if (n == "c") {
      r.value = Count{v->capacity};
      return r;
    }
    if (n == "o") {
      r.value = Count{v->occupancy};
      return r;
    }
    auto branch = branch_root(vid);
    if (!branch) return error(t, "not_explored", "assignment to vehicle " + std::to_string(vid) + " was not explored");
    const TreeNode& b = tree_.node(*branch);
    r.provenance = {b.id};
    r.basis = b.visits;
    if (n == "eta") {
      const RequestTimes times = request_times(b.state, ctx_.request_id);
      if (!times.pickup || !times.dropoff) return error(t, "not_explored", "request has no schedule on vehicle " + std::to_string(vid));
      r.value = EtaPair{*times.pickup, *times.dropoff};
      return r;
    }
    if (n == "sp" || n == "sd") {
      r.value = Count{stop_count(b.state, vid, n == "sp")};
      return r;
    }
    return error(t, "type_mismatch", "unsupported base variable " + n);
  }

  EvidenceResult score_derived(const Term& t) {
    const std::string& n = t.name;
    if (n == "vcv" || n == "vcvq") return score_capacity(t);
    if (n == "r" || n == "rd1" || n == "rd2") {
      const int vid = t.args[0].value;
      if (!find_vehicle(tree_.root_node().state, vid))
        return error(t, "no_such_vehicle", "no such vehicle " + std::to_string(vid));
      auto branch = branch_root(vid);
      if (!branch) return error(t, "not_explored", "assignment to vehicle " + std::to_string(vid) + " was not explored");
      const TreeNode& b = tree_.node(*branch);
      if (b.visits == 0) return error(t, "no_samples", "branch of vehicle " + std::to_string(vid) + " has no visits");
      EvidenceResult r = make(t, {b.id}, b.visits);
      r.value = RewardValue{per_state(n, b)};
      return r;
    }
    // viod / vioa / pctd / pcta over (tp|td, eta(v))
    EvidenceResult requested = score(t.args[0]);
    if (requested.is_error()) return propagate(t, requested);
    EvidenceResult eta = score(t.args[1]);
    if (eta.is_error()) return propagate(t, eta);
    const int vid = t.args[1].args[0].value;
    const TreeNode& b = tree_.node(*branch_root(vid));
    const bool pickup = t.args[0].name == "tp";
    const double req_time = std::get<Minutes>(requested.value).value;
    const bool fraction = n == "pctd" || n == "pcta";
    const std::vector<int> states = fraction ? leaves_of(b.id) : subtree_of(b.id);
    double num = 0.0;
    long den = 0;
    EvidenceResult r = make(t, {}, 0);
    for (int id : states) {
      const TreeNode& s = tree_.node(id);
      if (s.visits == 0) continue;
      auto x = state_time(s, pickup);
      if (!x) continue;
      double v = *x;
      if (n == "pctd") v = *x > req_time ? 1.0 : 0.0;
      else if (n == "pcta") v = *x < req_time ? 1.0 : 0.0;
      num += v * s.visits;
      den += s.visits;
      r.provenance.push_back(id);
    }
    if (den == 0) return error(t, "no_samples", "branch of vehicle " + std::to_string(vid) + " has no visited states");
    r.basis = static_cast<int>(den);
    const double mean = num / static_cast<double>(den);
    if (fraction) r.value = Ratio{mean};
    else r.value = Minutes{n == "viod" ? delay_of(req_time, mean) : advance_of(req_time, mean)};
    return r;
  }

  EvidenceResult score_compare(const Term& t) {
    EvidenceResult x = score(t.args[0]);
    if (x.is_error()) return propagate(t, x);
    EvidenceResult y = score(t.args[1]);
    if (y.is_error()) return propagate(t, y);
    const auto xv = scalar_of(x.value);
    const auto yv = scalar_of(y.value);
    if (!xv || !yv)
      return error(t, "type_mismatch", std::string(t.name) + " needs scalar operands, got " +
                                           std::string(value_kind(x.value)) + " and " + std::string(value_kind(y.value)));
    if (t.name == "phi4" && (!std::holds_alternative<Count>(x.value) || !std::holds_alternative<Count>(y.value)))
      return error(t, "type_mismatch", "phi4 compares counts");
    if (t.name != "phi4" && x.value.index() != y.value.index())
      return error(t, "type_mismatch", std::string(t.name) + " operands have different kinds (" +
                                           std::string(value_kind(x.value)) + ", " + std::string(value_kind(y.value)) + ")");
    EvidenceResult r = make(t, x.provenance, x.basis + y.basis);
    for (int p : y.provenance)
      if (std::find(r.provenance.begin(), r.provenance.end(), p) == r.provenance.end()) r.provenance.push_back(p);
    const double diff = *xv - *yv;
    if (t.name == "phi3") {
      if (std::holds_alternative<RewardValue>(x.value)) r.value = RewardValue{diff};
      else if (std::holds_alternative<Minutes>(x.value)) r.value = Minutes{diff};
      else if (std::holds_alternative<Ratio>(x.value)) r.value = RewardValue{diff};
      else r.value = Count{static_cast<int>(diff)};
    } else {
      r.value = Boolean{compare(t.name, *xv, *yv)};
      if (*xv == *yv) r.notes.push_back("tie");
    }
    add_implications(t, r, *xv, *yv);
    return r;
  }

  EvidenceResult score_whatif(const Term& t) {
    const TreeNode& root = tree_.root_node();
    const TripRequest* req = find_request(root.state, ctx_.request_id);
    if (!req) return error(t, "no_such_request", "request is not in the tree");
    const int arg = t.args[0].value;
    WorldState base = root.state;
    TripRequest request = *req;
    request.status = RequestStatus::pending;
    WhatIfOutcome out;
    out.op = t.name;
    out.argument = arg;
    try {
      auto summarize = [&](const PlanResult& p) {
        if (p.decision.kind == ActionKind::assign) {
          out.vehicle = p.decision.vehicle;
          for (int c : p.tree.root_node().children) {
            const TreeNode& ch = p.tree.node(c);
            if (ch.action == p.decision) out.value = ch.mean();
          }
        }
        out.violation = p.violation;
        out.tree_digest = tree_digest(p.tree);
      };
      if (t.name == "search") summarize(whatif_search(base, request, arg, tree_.config, ctx_.weights));
      else if (t.name == "cong") summarize(whatif_congestion(base, request, arg == 0 ? kDefaultCongestion : arg, tree_.config, ctx_.weights));
      else if (t.name == "exclude") summarize(whatif_exclude(base, request, arg, tree_.config, ctx_.weights));
      else if (t.name == "multi") summarize(whatif_multi(base, request, arg, tree_.config, ctx_.weights));
      else if (t.name == "reassign") {
        // The epoch's request is placed first with the tree's decision, so
        // the breakdown also covers it when it went to this vehicle.
        WorldState s = apply_action(base, tree_.decision.kind == ActionKind::assign
                                              ? tree_.decision
                                              : Action{ActionKind::reject, -1, {}, request.id});
        auto plans = whatif_reassign(s, arg, tree_.config, ctx_.weights);
        std::string digests;
        for (const auto& [rid, p] : plans) {
          out.reassignments.emplace_back(rid, p.decision.kind == ActionKind::assign ? std::optional<int>(p.decision.vehicle)
                                                                                    : std::nullopt);
          digests += tree_digest(p.tree);
        }
        out.tree_digest = hex64(fnv1a(digests));
      }
    } catch (const std::exception& e) {
      return error(t, "planner_error", e.what());
    }
    EvidenceResult r = make(t, {root.id}, tree_.config.iterations);
    r.value = std::move(out);
    return r;
  }

  static constexpr double kDefaultCongestion = 1.5;

  // Branch helpers, public for tests and the CLI.

  /// Most visited root child assigning `vehicle`; lowest id on ties.
  std::optional<int> branch_root(int vehicle) const {
    std::optional<int> best;
    for (int c : tree_.root_node().children) {
      const TreeNode& ch = tree_.node(c);
      if (ch.action.kind != ActionKind::assign || ch.action.vehicle != vehicle) continue;
      if (!best || ch.visits > tree_.node(*best).visits) best = c;
    }
    return best;
  }

  std::vector<int> subtree_of(int id) const {
    std::vector<int> out{id};
    for (std::size_t i = 0; i < out.size(); ++i)
      for (int c : tree_.node(out[i]).children) out.push_back(c);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<int> leaves_of(int id) const {
    std::vector<int> out;
    for (int n : subtree_of(id))
      if (tree_.node(n).children.empty()) out.push_back(n);
    return out;
  }

private:
  EvidenceResult make(const Term& t, std::vector<int> prov, int basis) const {
    EvidenceResult r;
    r.formula = print_term(t);
    r.provenance = std::move(prov);
    r.basis = basis;
    return r;
  }

  EvidenceResult error(const Term& t, std::string code, std::string message) const {
    EvidenceResult r = make(t, {}, 0);
    r.value = EvidenceError{std::move(code), std::move(message)};
    return r;
  }

  EvidenceResult propagate(const Term& t, const EvidenceResult& inner) const {
    EvidenceResult r = make(t, inner.provenance, 0);
    r.value = inner.value;
    return r;
  }

  std::optional<int> decision_child() const {
    for (int c : tree_.root_node().children)
      if (tree_.node(c).action == tree_.decision) return c;
    return std::nullopt;
  }

  std::optional<double> state_time(const TreeNode& s, bool pickup) const {
    const RequestTimes times = request_times(s.state, ctx_.request_id);
    auto v = pickup ? times.pickup : times.dropoff;
    if (!v) return std::nullopt;
    return static_cast<double>(*v);
  }

  /// Stops on `vehicle`'s remaining route before the request's pickup, or
  /// strictly between its pickup and drop-off.
  int stop_count(const WorldState& s, int vehicle, bool before_pickup) const {
    const VehicleState* v = find_vehicle(s, vehicle);
    if (!v) return 0;
    std::optional<int> p, d;
    for (std::size_t i = 0; i < v->route.size(); ++i) {
      if (v->route[i].request_id != ctx_.request_id) continue;
      (v->route[i].kind == StopKind::pickup ? p : d) = static_cast<int>(i);
    }
    if (before_pickup) return p ? *p : 0;
    if (!d) return 0;
    return p ? *d - *p - 1 : *d;
  }

  double per_state(const std::string& name, const TreeNode& s) const {
    if (s.visits == 0) return 0.0;
    if (name == "rd1") return s.value_fulfillment / s.visits;
    if (name == "rd2") return s.value_timing / s.visits;
    return s.value / s.visits;
  }

  EvidenceResult score_capacity(const Term& t) {
    EvidenceResult cap = score(t.args[0]);
    if (cap.is_error()) return propagate(t, cap);
    EvidenceResult occ = score(t.args[1]);
    if (occ.is_error()) return propagate(t, occ);
    const int vid = t.args[0].args[0].value;
    const TreeNode& root = tree_.root_node();
    EvidenceResult r = make(t, {root.id}, root.visits);
    if (t.name == "vcvq") {
      r.value = Count{std::get<Count>(cap.value).value - std::get<Count>(occ.value).value};
      return r;
    }
    if (auto b = branch_root(vid)) {
      const VehicleState* v = find_vehicle(tree_.node(*b).state, vid);
      r.provenance.push_back(*b);
      r.basis = tree_.node(*b).visits;
      r.value = Boolean{!within_capacity(*v)};
      return r;
    }
    // Unexplored vehicle: violated iff no insertion fits its seats.
    VehicleState v = *find_vehicle(root.state, vid);
    v.operable = true;
    const TripRequest* req = find_request(root.state, ctx_.request_id);
    r.value = Boolean{req && feasible_insertions(root.state, *req, v).empty()};
    return r;
  }

  static bool compare(const std::string& name, double x, double y) {
    if (name == "phi1" || name == "phi4") return x < y;
    if (name == "phi2") return x > y;
    return (x - y) >= 0.0;
  }

  std::optional<int> operand_vehicle(const Term& t) const {
    if (t.name == "eta" || t.name == "r" || t.name == "rd1" || t.name == "rd2") return t.args[0].value;
    if (t.name == "sp" || t.name == "sd") return t.args[1].value;
    if (t.name == "viod" || t.name == "vioa" || t.name == "pctd" || t.name == "pcta") return t.args[1].args[0].value;
    return std::nullopt;
  }

  std::optional<double> operand_at(const Term& t, const TreeNode& s) const {
    const std::string& n = t.name;
    if (n == "r" || n == "rd1" || n == "rd2") return s.visits ? std::optional<double>(per_state(n, s)) : std::nullopt;
    if (n == "sp" || n == "sd") return static_cast<double>(stop_count(s.state, t.args[1].value, n == "sp"));
    if (n == "viod" || n == "vioa" || n == "pctd" || n == "pcta") {
      const TripRequest* req = find_request(tree_.root_node().state, ctx_.request_id);
      const bool pickup = t.args[0].name == "tp";
      auto x = state_time(s, pickup);
      if (!req || !x) return std::nullopt;
      const double want = pickup ? req->t_p : req->t_d;
      if (n == "viod") return delay_of(want, *x);
      if (n == "vioa") return advance_of(want, *x);
      if (n == "pctd") return *x > want ? 1.0 : 0.0;
      return *x < want ? 1.0 : 0.0;
    }
    return std::nullopt;
  }

  const KripkeView& kripke() {
    if (!kripke_) kripke_ = build_kripke(tree_);
    return *kripke_;
  }

  void add_implications(const Term& t, EvidenceResult& r, double x, double y) {
    const double sign = x - y;
    for (int side = 0; side < 2; ++side) {
      const Term& op = t.args[static_cast<std::size_t>(side)];
      auto vid = operand_vehicle(op);
      if (!vid) continue;
      auto b = branch_root(*vid);
      if (!b) continue;
      const CtlFormula premise = CtlFormula::binary(
          CtlOp::conj, CtlFormula::make_atom("on_branch(" + std::to_string(*vid) + ")"),
          CtlFormula::unary(CtlOp::negation, CtlFormula::make_atom("overcap")));
      const StateSet p = check_set(kripke(), premise);
      for (int id : subtree_of(*b)) {
        const TreeNode& s = tree_.node(id);
        if (s.visits == 0) continue;
        auto v = operand_at(op, s);
        if (!v) continue;
        const double lhs = side == 0 ? *v : x;
        const double rhs = side == 0 ? y : *v;
        bool outcome = t.name == "phi3" ? ((lhs - rhs >= 0.0) == (sign >= 0.0)) : compare(t.name, lhs, rhs);
        r.implications.push_back(Implication{id, p[static_cast<std::size_t>(id)] != 0, outcome});
      }
    }
  }

  void collect(const Term& t, TermKind level) {
    for (const auto& a : t.args)
      if (!a.is_integer()) collect(a, level);
    if (t.kind == level) score(t);
  }

  EvidenceQueryContext ctx_;
  const SearchTree& tree_;
  std::map<std::string, EvidenceResult> cache_;
  std::optional<KripkeView> kripke_;
};

inline std::vector<EvidenceResult> score_all(const FormulaList& list, const EvidenceQueryContext& ctx) {
  return EvidenceScorer(ctx).score_all(list);
}

inline EvidenceResult score_one(const Term& t, const EvidenceQueryContext& ctx) { return EvidenceScorer(ctx).score(t); }

// ---------------------------------------------------------------------------
// Serialization: {formula, kind, value, provenance, basis}

inline json evidence_value_json(const EvidenceValue& v) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, VehicleRef>) return x.vehicle ? json(*x.vehicle) : json(nullptr);
        else if constexpr (std::is_same_v<T, EtaPair>) return json{{"pickup", x.pickup}, {"dropoff", x.dropoff}};
        else if constexpr (std::is_same_v<T, WhatIfOutcome>) {
          json j{{"op", x.op}, {"argument", x.argument}, {"vehicle", x.vehicle ? json(*x.vehicle) : json(nullptr)},
                 {"value", x.value ? json(*x.value) : json(nullptr)}, {"tree_digest", x.tree_digest}};
          if (x.violation) j["violation"] = *x.violation;
          if (x.op == "reassign") {
            json m = json::array();
            for (const auto& [rid, veh] : x.reassignments)
              m.push_back(json{{"request_id", rid}, {"vehicle", veh ? json(*veh) : json(nullptr)}});
            j["reassignments"] = m;
          }
          return j;
        } else if constexpr (std::is_same_v<T, EvidenceError>) return json{{"code", x.code}, {"message", x.message}};
        else return json(x.value);
      },
      v);
}

inline json to_json_value(const EvidenceResult& r) {
  json j{{"formula", r.formula},
         {"kind", std::string(value_kind(r.value))},
         {"value", evidence_value_json(r.value)},
         {"provenance", r.provenance},
         {"basis", r.basis}};
  if (!r.implications.empty()) {
    json imps = json::array();
    for (const auto& i : r.implications)
      imps.push_back(json{{"node", i.node}, {"premise", i.premise}, {"outcome", i.outcome}, {"holds", i.holds()}});
    j["implications"] = imps;
  }
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j;
}

inline json evidence_list_json(const std::vector<EvidenceResult>& rs) {
  json arr = json::array();
  for (const auto& r : rs) arr.push_back(to_json_value(r));
  return arr;
}

} // namespace xplan
