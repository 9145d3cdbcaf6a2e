#pragma once

// Explicit-state CTL model checking over a search tree viewed as a Kripke
// structure. Tree edges are the transitions; each leaf loops to itself so the
// transition relation is total.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xplan/ctl_formula.hpp"
#include "xplan/mcts.hpp"

namespace xplan {

using StateSet = std::vector<char>; // membership flag per state index

struct KripkeView {
  int root = 0;
  std::vector<int> node_ids;                // state index -> tree node id
  std::vector<std::vector<int>> successors; // by state index
  std::map<std::string, StateSet> labels;   // atom -> states where it holds
  std::set<std::string> vocabulary;         // plain atoms accepted by check()
  std::set<std::string> parameterized;      // atoms of the form name(int)

  std::size_t size() const { return successors.size(); }
};

inline const std::set<std::string>& plain_propositions() {
  static const std::set<std::string> v{"assigned",      "dropped_off",  "rejected",     "overcap",
                                       "delayed_pickup", "delayed_dropoff", "early_pickup", "early_dropoff",
                                       "fulfilled"};
  return v;
}

inline const std::set<std::string>& parameterized_propositions() {
  static const std::set<std::string> v{"assigned", "on_branch"};
  return v;
}

/// Scheduled or actual pickup/drop-off minute of a request in a state.
struct RequestTimes {
  std::optional<int> pickup;
  std::optional<int> dropoff;
};

inline RequestTimes request_times(const WorldState& s, int request_id) {
  RequestTimes out;
  if (const TripRequest* r = find_request(s, request_id)) {
    out.pickup = r->t_ap;
    out.dropoff = r->t_ad;
  }
  for (const auto& v : s.vehicles)
    for (const auto& st : v.route)
      if (st.request_id == request_id) (st.kind == StopKind::pickup ? out.pickup : out.dropoff) = st.eta;
  return out;
}

inline bool any_overcap(const WorldState& s) {
  return std::any_of(s.vehicles.begin(), s.vehicles.end(), [](const auto& v) { return !within_capacity(v); });
}

/// Vehicle of the root action whose subtree contains `id`, if it is an assign.
inline std::optional<int> branch_vehicle(const SearchTree& t, int id) {
  std::optional<int> out;
  int cur = id;
  while (t.node(cur).parent) {
    const int p = *t.node(cur).parent;
    if (p == t.root) {
      const Action& a = t.node(cur).action;
      if (a.kind == ActionKind::assign) out = a.vehicle;
      break;
    }
    cur = p;
  }
  return out;
}

inline std::set<std::string> node_labels(const SearchTree& t, const TreeNode& n) {
  std::set<std::string> out;
  const WorldState& s = n.state;
  if (any_overcap(s)) out.insert("overcap");
  if (const TripRequest* r = find_request(s, t.request_id)) {
    if (r->status == RequestStatus::rejected) out.insert("rejected");
    if (is_fulfilled(r->status)) out.insert("fulfilled");
    if (r->status == RequestStatus::dropped_off) out.insert("dropped_off");
    if (r->vehicle && r->status != RequestStatus::rejected && r->status != RequestStatus::pending) {
      out.insert("assigned");
      out.insert("assigned(" + std::to_string(*r->vehicle) + ")");
    }
    const RequestTimes times = request_times(s, t.request_id);
    if (times.pickup && *times.pickup > r->t_p) out.insert("delayed_pickup");
    if (times.pickup && *times.pickup < r->t_p) out.insert("early_pickup");
    if (times.dropoff && *times.dropoff > r->t_d) out.insert("delayed_dropoff");
    if (times.dropoff && *times.dropoff < r->t_d) out.insert("early_dropoff");
  }
  if (auto v = branch_vehicle(t, n.id)) out.insert("on_branch(" + std::to_string(*v) + ")");
  return out;
}

inline KripkeView build_kripke(const SearchTree& t) {
  KripkeView k;
  const std::size_t n = t.nodes.size();
  k.root = t.root;
  k.successors.resize(n);
  k.node_ids.resize(n);
  k.vocabulary = plain_propositions();
  k.parameterized = parameterized_propositions();
  for (const auto& atom : k.vocabulary) k.labels[atom] = StateSet(n, 0);
  for (const auto& v : t.root_node().state.vehicles) {
    k.labels["assigned(" + std::to_string(v.id) + ")"] = StateSet(n, 0);
    k.labels["on_branch(" + std::to_string(v.id) + ")"] = StateSet(n, 0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const TreeNode& node = t.nodes[i];
    k.node_ids[i] = node.id;
    k.successors[i] = node.children.empty() ? std::vector<int>{static_cast<int>(i)} : node.children;
    for (const auto& atom : node_labels(t, node)) {
      auto& set = k.labels[atom];
      if (set.empty()) set.assign(n, 0);
      set[i] = 1;
    }
  }
  return k;
}

namespace detail {

inline void check_atom(const KripkeView& k, const std::string& atom) {
  if (k.vocabulary.count(atom)) return;
  const auto open = atom.find('(');
  if (open != std::string::npos && k.parameterized.count(atom.substr(0, open))) return;
  throw domain_error("unknown proposition '" + atom + "'");
}

// States are visited from the highest index down; tree children carry larger
// ids than their parents, so one sweep usually settles each fixpoint.
template <typename Step>
StateSet fixpoint(StateSet z, Step step) {
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = z.size(); i-- > 0;) {
      const char next = step(i, z);
      if (next != z[i]) {
        z[i] = next;
        changed = true;
      }
    }
  }
  return z;
}

inline StateSet eval(const KripkeView& k, const CtlFormula& f) {
  const std::size_t n = k.size();
  auto some_succ = [&](std::size_t i, const StateSet& z) {
    for (int s : k.successors[i])
      if (z[static_cast<std::size_t>(s)]) return true;
    return false;
  };
  auto all_succ = [&](std::size_t i, const StateSet& z) {
    for (int s : k.successors[i])
      if (!z[static_cast<std::size_t>(s)]) return false;
    return true;
  };
  switch (f.op) {
  case CtlOp::tt: return StateSet(n, 1);
  case CtlOp::ff: return StateSet(n, 0);
  case CtlOp::atom: {
    check_atom(k, f.atom);
    auto it = k.labels.find(f.atom);
    return it == k.labels.end() || it->second.empty() ? StateSet(n, 0) : it->second;
  }
  case CtlOp::negation: {
    StateSet a = eval(k, f.args[0]);
    for (auto& x : a) x = !x;
    return a;
  }
  case CtlOp::conj:
  case CtlOp::disj:
  case CtlOp::implies: {
    StateSet a = eval(k, f.args[0]);
    const StateSet b = eval(k, f.args[1]);
    for (std::size_t i = 0; i < n; ++i) {
      if (f.op == CtlOp::conj) a[i] = a[i] && b[i];
      else if (f.op == CtlOp::disj) a[i] = a[i] || b[i];
      else a[i] = !a[i] || b[i];
    }
    return a;
  }
  case CtlOp::ex:
  case CtlOp::ax: {
    const StateSet a = eval(k, f.args[0]);
    StateSet out(n, 0);
    for (std::size_t i = 0; i < n; ++i) out[i] = f.op == CtlOp::ex ? some_succ(i, a) : all_succ(i, a);
    return out;
  }
  case CtlOp::ef:
  case CtlOp::af:
  case CtlOp::eu:
  case CtlOp::au: {
    const bool until = f.op == CtlOp::eu || f.op == CtlOp::au;
    const StateSet hold = until ? eval(k, f.args[0]) : StateSet(n, 1);
    const StateSet goal = eval(k, f.args[until ? 1 : 0]);
    const bool exists = f.op == CtlOp::ef || f.op == CtlOp::eu;
    return fixpoint(goal, [&](std::size_t i, const StateSet& z) -> char {
      if (z[i]) return 1;
      return hold[i] && (exists ? some_succ(i, z) : all_succ(i, z));
    });
  }
  case CtlOp::eg:
  case CtlOp::ag: {
    const StateSet a = eval(k, f.args[0]);
    const bool exists = f.op == CtlOp::eg;
    return fixpoint(a, [&](std::size_t i, const StateSet& z) -> char {
      if (!z[i]) return 0;
      return exists ? some_succ(i, z) : all_succ(i, z);
    });
  }
  }
  return StateSet(n, 0);
}

} // namespace detail

/// Satisfying tree node ids, ascending.
inline std::vector<int> check(const KripkeView& k, const CtlFormula& f) {
  const StateSet s = detail::eval(k, f);
  std::vector<int> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i]) out.push_back(k.node_ids.empty() ? static_cast<int>(i) : k.node_ids[i]);
  return out;
}

inline StateSet check_set(const KripkeView& k, const CtlFormula& f) { return detail::eval(k, f); }

inline bool holds_at_root(const KripkeView& k, const CtlFormula& f) {
  return detail::eval(k, f).at(static_cast<std::size_t>(k.root)) != 0;
}

/// Kripke view restricted to the subtree under `node`, with `node` as root.
inline KripkeView subtree_view(const SearchTree& t, int node) {
  KripkeView full = build_kripke(t);
  full.root = node;
  return full;
}

} // namespace xplan
