#pragma once

// The 31 query types: 26 post-hoc types answered from the search tree and 5
// what-if types answered by re-planning. Canonical texts and gold formulas are
// kept exactly as published, including item 10 whose formula duplicates item 7.
//
// Templates use $1/$2 for vehicle ids in order of mention and $n for a
// passenger count.

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "xplan/logic.hpp"

namespace xplan {

enum class QueryCategory { post_hoc, background };

inline std::string_view to_string(QueryCategory c) { return c == QueryCategory::post_hoc ? "post_hoc" : "background"; }

inline QueryCategory parse_category(std::string_view s) {
  if (s == "post_hoc") return QueryCategory::post_hoc;
  if (s == "background") return QueryCategory::background;
  throw domain_error("unknown query category '" + std::string(s) + "'");
}

struct SignatureTerm {
  std::string pattern; // ECMAScript regex over the lowercased query
  double weight = 1.0;
};

struct CatalogEntry {
  int id = 0;
  QueryCategory category = QueryCategory::post_hoc;
  int item = 0; // position within its appendix list
  std::string text;
  std::string gold;
  std::string formula_template;
  int vehicle_slots = 0;
  std::vector<int> default_vehicles;
  bool passenger_slot = false;
  int default_passengers = 2;
  std::optional<std::string> flag;
  std::vector<SignatureTerm> signature;
};

namespace detail {

inline const std::string kPick = R"((pick(ing|ed|s)?[- ]?(up|the \w+ up)|pickup|collect))";
inline const std::string kDrop = R"((drop(ping|ped|s)?[- ]?(off|the \w+ off)|dropoff|destination|deliver))";
inline const std::string kDelay = R"((delay|late\b|run late|slow))";
inline const std::string kEarly = R"((early|earlier|ahead|advance|before the requested|before schedul))";
inline const std::string kRate = R"((rate\b|probab|percent|fraction|how often|(how|is it) likely|likelihood|chance))";
inline const std::string kHowMuch = R"((how long|how much|how many minutes|duration|by how|how far|expected|by much))";
inline const std::string kBreak = R"((break\w*.?down|broke|out of service|fail|unavailable))";

inline std::vector<CatalogEntry> build_catalog() {
  using S = std::vector<SignatureTerm>;
  std::vector<CatalogEntry> c;
  auto post = [&](int item, std::string text, std::string gold, std::string tmpl, std::vector<int> defaults, S sig) {
    CatalogEntry e;
    e.id = item;
    e.item = item;
    e.text = std::move(text);
    e.gold = std::move(gold);
    e.formula_template = std::move(tmpl);
    e.vehicle_slots = static_cast<int>(defaults.size());
    e.default_vehicles = std::move(defaults);
    e.signature = std::move(sig);
    c.push_back(std::move(e));
  };
  post(1, "Can you tell me the scheduled pick-up time for the passenger?", "tp(0)", "tp(0)", {},
       {{kPick, 1.5}, {R"((time|when))", 1.0}, {R"((schedul|planned|requested|supposed|due))", 0.5}});
  post(2, "Could you tell me when the passenger is scheduled to be dropped off?", "td(0)", "td(0)", {},
       {{kDrop, 1.5}, {R"((time|when))", 1.0}, {R"((schedul|planned|requested|supposed|due))", 0.5}});
  post(3, "Can you provide the current passenger count for vehicle 1?", "O(0,1)", "O(0,$1)", {1},
       {{R"((passenger count|occupancy|how many (passengers|riders|people)|onboard|on board|currently riding))", 2.5}});
  post(4, "What is the remaining passenger capacity of vehicle 2?", "vcvq(C(2), O(1,2))", "vcvq(C($1), O(1,$1))",
       {2}, {{R"((remain|\bleft\b|free|spare|room|more passengers|capacity))", 2.5}});
  post(5, "What is the number of stops a passenger will face when traveling in vehicle 1?", "sp(0,1); sd(0,1)",
       "sp(0,$1); sd(0,$1)", {1}, {{R"(\bstops\b)", 2.0}, {R"((how many|number of|count))", 1.0}});
  post(6, "Could you indicate the expected arrival time for the passenger if they're assigned to vehicle 1?",
       "eta(1)", "eta($1)", {1},
       {{R"((arriv|\beta\b|get the passenger there))", 2.0}, {R"((expected|estimated|when|what time))", 0.5}});
  post(7, "Could you let me know the likely delay duration in the pick-up time for a passenger assigned to vehicle 3?",
       "viod(tp(3), eta(3))", "viod(tp($1), eta($1))", {3}, {{kDelay, 1.5}, {kPick, 1.0}, {kHowMuch, 1.0}});
  post(8, "Could you let me know the likely delay duration in the drop-off time for a passenger assigned to vehicle 3?",
       "viod(td(3), eta(3))", "viod(td($1), eta($1))", {3}, {{kDelay, 1.5}, {kDrop, 1.0}, {kHowMuch, 1.0}});
  post(9,
       "Could you clarify the expected time of advancement in the pick-up time for a passenger when they are assigned "
       "to vehicle 3?",
       "vioa(tp(3), eta(3))", "vioa(tp($1), eta($1))", {3}, {{kEarly, 1.5}, {kPick, 1.0}, {kHowMuch, 1.0}});
  post(10,
       "Could you clarify the expected time of advancement in the drop-off time for a passenger when they are "
       "assigned to vehicle 3?",
       "viod(tp(3), eta(3))", "viod(tp($1), eta($1))", {3}, {{kEarly, 1.5}, {kDrop, 1.0}, {kHowMuch, 1.0}});
  c.back().flag = "suspected typo: the formula repeats item 7; vioa(td(3), eta(3)) matches the query";
  post(11, "What is the expected rate of delay for picking up the passenger when traveling in vehicle 1?",
       "pctd(tp(1), eta(1))", "pctd(tp($1), eta($1))", {1}, {{kRate, 1.5}, {kDelay, 1.5}, {kPick, 1.0}});
  post(12, "What is the expected rate of delay for dropping off the passenger when traveling in vehicle 1?",
       "pctd(td(1), eta(1))", "pctd(td($1), eta($1))", {1}, {{kRate, 1.5}, {kDelay, 1.5}, {kDrop, 1.0}});
  post(13, "How likely is it that the passenger will be picked up ahead of schedule in vehicle 1?",
       "pcta(tp(1), eta(1))", "pcta(tp($1), eta($1))", {1}, {{kRate, 1.5}, {kEarly, 1.5}, {kPick, 1.0}});
  post(14, "How likely is it that the passenger will reach their destination ahead of schedule in vehicle 1?",
       "pcta(td(1), eta(1))", "pcta(td($1), eta($1))", {1},
       {{kRate, 1.5}, {kEarly, 1.5}, {R"((drop|destination|deliver|arriv))", 1.0}});
  post(15, "What factors lead to delays when a passenger is assigned to vehicle 1?", "sp(0,1); sd(0,1)",
       "sp(0,$1); sd(0,$1)", {1},
       {{R"((factor|cause|reason|why|contribut|lead to|explain|make))", 1.5}, {R"((delay|slow))", 1.5}});
  post(16, "What were the reasons for choosing vehicle 2 over vehicle 3 for this assignment?",
       "vcv(C(3), O(1,3)); Φ3(r(2), r(3)); Φ3(rd1(2), rd1(3)); Φ3(rd2(2), rd2(3))",
       "vcv(C($2), O(1,$2)); phi3(r($1), r($2)); phi3(rd1($1), rd1($2)); phi3(rd2($1), rd2($2))", {2, 3},
       {{R"((chos|choos|pick|prefer|select|choice))", 1.5}, {R"((\bover\b|instead of|rather than|and not))", 1.5}});
  post(17, "What led to the algorithm's decision to overlook vehicle 1?", "vcv(C(1), O(1,1))", "vcv(C($1), O(1,$1))",
       {1},
       {{R"((overlook|ignore|pass over|rule out|not considered|skip|wasn.t|not (picked|chosen|selected)|neglect))",
         3.0}});
  post(18, "How does vehicle 1 outperform vehicle 2 when capacity constraints are not a factor?",
       "Φ1(vioa(tp(1), eta(1)), vioa(tp(2), eta(2))); Φ1(vioa(td(1), eta(1)), vioa(td(2), eta(2))); "
       "Φ1(viod(tp(1), eta(1)), viod(tp(2), eta(2))); Φ1(viod(td(1), eta(1)), viod(td(2), eta(2))); "
       "Φ4(sp(0,1), sp(0,2)); Φ4(sd(0,1), sd(0,2))",
       "phi1(vioa(tp($1), eta($1)), vioa(tp($2), eta($2))); phi1(vioa(td($1), eta($1)), vioa(td($2), eta($2))); "
       "phi1(viod(tp($1), eta($1)), viod(tp($2), eta($2))); phi1(viod(td($1), eta($1)), viod(td($2), eta($2))); "
       "phi4(sp(0,$1), sp(0,$2)); phi4(sd(0,$1), sd(0,$2))",
       {1, 2}, {{R"((outperform|better|beat|superior|advantage))", 1.5}, {R"(capacity)", 2.0}});
  post(19, "Is vehicle 1 more successful at minimizing time violations compared to vehicle 2?",
       "Φ1(vioa(tp(1), eta(1)), vioa(tp(2), eta(2))); Φ1(vioa(td(1), eta(1)), vioa(td(2), eta(2))); "
       "Φ1(viod(tp(1), eta(1)), viod(tp(2), eta(2))); Φ1(viod(td(1), eta(1)), viod(td(2), eta(2)))",
       "phi1(vioa(tp($1), eta($1)), vioa(tp($2), eta($2))); phi1(vioa(td($1), eta($1)), vioa(td($2), eta($2))); "
       "phi1(viod(tp($1), eta($1)), viod(tp($2), eta($2))); phi1(viod(td($1), eta($1)), viod(td($2), eta($2)))",
       {1, 2},
       {{R"((violation|punctual|on time|schedule|timing))", 2.0}, {R"((more|better|fewer|lower|compared|than))", 0.5}});
  post(20, "Does vehicle 1 offer a route with fewer stops than vehicle 2?",
       "Φ4(sp(0,1), sp(0,2)); Φ4(sd(0,1), sd(0,2))", "phi4(sp(0,$1), sp(0,$2)); phi4(sd(0,$1), sd(0,$2))", {1, 2},
       {{R"(\bstops?\b)", 2.0}, {R"((fewer|less|shorter|than|compared))", 1.0}});
  post(21, "Is there a possibility of a delay for the passenger if they are assigned to vehicle 3?",
       "viod(tp(3), eta(3)); viod(td(3), eta(3))", "viod(tp($1), eta($1)); viod(td($1), eta($1))", {3},
       {{R"((possib|could|might|risk|would|any))", 1.0}, {kDelay, 1.5}});
  post(22, "Is it possible that the passenger will arrive earlier than expected if assigned to vehicle 3?",
       "vioa(tp(3), eta(3)); vioa(td(3), eta(3))", "vioa(tp($1), eta($1)); vioa(td($1), eta($1))", {3},
       {{R"((possib|could|might|chance|would))", 1.0},
        {R"((early|earlier|ahead of time))", 1.5},
        {R"((arriv|get there|get the passenger in|runs))", 0.5}});
  post(23, "What is the difference in reward when the passenger is assigned to vehicle 1 versus vehicle 2?",
       "Φ3(r(1), r(2)); Φ3(rd1(1), rd1(2)); Φ3(rd2(1), rd2(2))",
       "phi3(r($1), r($2)); phi3(rd1($1), rd1($2)); phi3(rd2($1), rd2($2))", {1, 2}, {{R"(reward)", 3.0}});
  post(24, "Why was vehicle 1 chosen for the passenger's assignment?", "vcv(C(1), O(1,1)); r(1); rd1(1); rd2(1)",
       "vcv(C($1), O(1,$1)); r($1); rd1($1); rd2($1)", {1},
       {{R"((why|justif|reason|explain|what made))", 1.0},
        {R"((chos|choos|select|assign|got the trip|\bpick))", 1.5}});
  post(25, "Which vehicle is scheduled to pick up the passenger?", "car(1)", "car(1)", {},
       {{R"(((which|what) (vehicle|van|car|bus)|who is))", 2.5},
        {R"((pick|assign|collect|got|scheduled))", 1.0}});
  post(26, "How many vehicles are available right now to pick up the passenger?", "availablecar(1)",
       "availablecar(1)", {},
       {{R"(((how many|number of|count)( the)? (vehicles|vans|cars)|available|free to|able to))", 2.5}});

  auto whatif = [&](int item, std::string text, std::string gold, std::string tmpl, std::vector<int> defaults,
                    bool passengers, S sig) {
    CatalogEntry e;
    e.id = 26 + item;
    e.category = QueryCategory::background;
    e.item = item;
    e.text = std::move(text);
    e.gold = std::move(gold);
    e.formula_template = std::move(tmpl);
    e.vehicle_slots = static_cast<int>(defaults.size());
    e.default_vehicles = std::move(defaults);
    e.passenger_slot = passengers;
    e.signature = std::move(sig);
    c.push_back(std::move(e));
  };
  whatif(1, "What are the potential consequences of placing the passenger in alternative vehicle 1?", "search(1)",
         "search($1)", {1}, false,
         {{R"((consequen|what if|what would happen|suppose|instead|alternative|switch|outcome|what follows))", 1.5},
          {R"((\bput|assign|plac|given|switch|move))", 1.0}});
  whatif(2, "What does occur when traffic becomes congested?", "cong(0)", "cong(0)", {}, false,
         {{R"((traffic|congest|jam|slowdown|roads))", 3.0}});
  whatif(3, "What happens if vehicle 1 breaks down?", "exclude(1)", "exclude($1)", {1}, false, {{kBreak, 2.5}});
  whatif(4, "What should we do if this trip includes 2 passengers?", "multi(2)", "multi($n)", {}, true,
         {{R"(((\d+|two|three|four|five|six|seven|eight|nine) (passengers|riders|people|persons)|group of))", 3.0}});
  whatif(5, "What is the reassignment plan for passengers currently on vehicle 2 if it breaks down?", "reassign(2)",
         "reassign($1)", {2}, false,
         {{R"((reassign|realloc|riders go|its riders|take over|passengers (on|of)|currently|riders on))", 2.0},
          {kBreak, 1.5}});
  return c;
}

} // namespace detail

inline const std::vector<CatalogEntry>& query_catalog() {
  static const std::vector<CatalogEntry> c = detail::build_catalog();
  return c;
}

inline const CatalogEntry& catalog_entry(int type_id) {
  const auto& c = query_catalog();
  if (type_id < 1 || type_id > static_cast<int>(c.size()))
    throw domain_error("unknown query type " + std::to_string(type_id));
  return c[static_cast<std::size_t>(type_id - 1)];
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

/// Vehicle ids in order of first mention: "vehicle 3", "van 2", "vehicles 1
/// and 2", "car #0".
inline std::vector<int> extract_vehicles(std::string_view query) {
  static const std::regex mention(R"(\b(vehicle|van|car|bus|shuttle)s?\s*(number\s*|no\.?\s*|#\s*)?(\d+)((\s*(,|and|or|vs\.?|versus)\s*(\d+))*))",
                                  std::regex::icase);
  static const std::regex more(R"(\d+)");
  std::vector<int> out;
  auto add = [&](int v) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  const std::string q(query);
  for (auto it = std::sregex_iterator(q.begin(), q.end(), mention); it != std::sregex_iterator(); ++it) {
    add(std::stoi((*it)[3].str()));
    const std::string tail = (*it)[4].str();
    for (auto m = std::sregex_iterator(tail.begin(), tail.end(), more); m != std::sregex_iterator(); ++m)
      add(std::stoi(m->str()));
  }
  return out;
}

/// Passenger count from "3 passengers", "two riders", "a group of 4".
inline std::optional<int> extract_passengers(std::string_view query) {
  static const std::regex count(
      R"(\b(\d+|one|two|three|four|five|six|seven|eight|nine)\s+(passengers|riders|people|persons|travelers|travellers)\b)",
      std::regex::icase);
  static const std::regex group(R"(group of\s+(\d+|two|three|four|five|six|seven|eight|nine)\b)", std::regex::icase);
  static const std::vector<std::string> words{"zero", "one", "two",   "three", "four",
                                              "five", "six", "seven", "eight", "nine"};
  const std::string q = lowercase(query);
  std::smatch m;
  if (std::regex_search(q, m, count) || std::regex_search(q, m, group)) {
    const std::string w = m[1].str();
    if (std::isdigit(static_cast<unsigned char>(w[0]))) return std::stoi(w);
    return static_cast<int>(std::find(words.begin(), words.end(), w) - words.begin());
  }
  return std::nullopt;
}

/// Fills a catalog template. Missing vehicle slots take `fallback_vehicle`
/// when given, otherwise the entry's published defaults.
inline std::string instantiate(const CatalogEntry& e, const std::vector<int>& vehicles,
                               std::optional<int> passengers = std::nullopt,
                               std::optional<int> fallback_vehicle = std::nullopt) {
  std::vector<int> slots;
  for (int k = 0; k < e.vehicle_slots; ++k) {
    if (k < static_cast<int>(vehicles.size())) slots.push_back(vehicles[static_cast<std::size_t>(k)]);
    else if (fallback_vehicle && std::find(slots.begin(), slots.end(), *fallback_vehicle) == slots.end())
      slots.push_back(*fallback_vehicle);
    else slots.push_back(e.default_vehicles[static_cast<std::size_t>(k)]);
  }
  std::string out;
  const std::string& t = e.formula_template;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '$' && i + 1 < t.size()) {
      const char k = t[i + 1];
      if (k == 'n') {
        out += std::to_string(passengers.value_or(e.default_passengers));
        ++i;
        continue;
      }
      if (k >= '1' && k <= '9') {
        out += std::to_string(slots.at(static_cast<std::size_t>(k - '1')));
        ++i;
        continue;
      }
    }
    out.push_back(t[i]);
  }
  return out;
}

struct Classification {
  QueryCategory category = QueryCategory::background;
  std::optional<int> type_id; // set for every post-hoc query and for what-if queries
  double confidence = 0.0;
  friend bool operator==(const Classification&, const Classification&) = default;
};

struct KeywordScore {
  int type_id = 0;
  double keyword = 0.0; // signature matches only
  double total = 0.0;   // with the vehicle-count agreement term
};

namespace detail {

struct CompiledSignature {
  int type_id;
  int vehicle_slots;
  std::vector<std::pair<std::regex, double>> terms;
};

inline const std::vector<CompiledSignature>& compiled_signatures() {
  static const std::vector<CompiledSignature> sigs = [] {
    std::vector<CompiledSignature> out;
    for (const auto& e : query_catalog()) {
      CompiledSignature s{e.id, e.vehicle_slots, {}};
      for (const auto& t : e.signature) s.terms.emplace_back(std::regex(t.pattern, std::regex::icase), t.weight);
      out.push_back(std::move(s));
    }
    return out;
  }();
  return sigs;
}

// General-knowledge phrasing that points away from the current plan.
inline const std::regex& background_cue() {
  static const std::regex r(
      R"((bad thing|good thing|in general|generally|what is (paratransit|mcts|the mcts)|how does (the )?(mcts|algorithm|system) work|who (decides|makes|oversees)|dispatcher|fare|eligib|service area|service hours|why is (getting|being)|what are the (rules|constraints)|\bada\b|human))",
      std::regex::icase);
  return r;
}

} // namespace detail

inline constexpr double kKeywordThreshold = 2.0;

/// Signature scores for every catalog entry, in type-id order.
inline std::vector<KeywordScore> keyword_scores(std::string_view query) {
  const std::string q = lowercase(query);
  const int mentioned = std::min(2, static_cast<int>(extract_vehicles(q).size()));
  std::vector<KeywordScore> out;
  for (const auto& s : detail::compiled_signatures()) {
    KeywordScore k{s.type_id, 0.0, 0.0};
    for (const auto& [re, w] : s.terms)
      if (std::regex_search(q, re)) k.keyword += w;
    const int gap = std::abs(s.vehicle_slots - mentioned);
    k.total = k.keyword + (gap == 0 ? 1.0 : -0.75 * gap);
    out.push_back(k);
  }
  return out;
}

/// Rule-based classifier: best signature match, lowest type id on ties.
/// Queries with weak matches or general-knowledge cues go to retrieval.
inline Classification classify_keywords(std::string_view query) {
  if (query.find_first_not_of(" \t\r\n") == std::string_view::npos) throw domain_error("empty query");
  const auto scores = keyword_scores(query);
  const KeywordScore* best = nullptr;
  double second = 0.0;
  for (const auto& s : scores) {
    if (!best || s.total > best->total) {
      if (best) second = std::max(second, best->total);
      best = &s;
    } else {
      second = std::max(second, s.total);
    }
  }
  Classification out;
  const bool cue = std::regex_search(lowercase(query), detail::background_cue());
  if (!best || best->keyword < kKeywordThreshold || (cue && best->keyword < 3.0)) {
    out.category = QueryCategory::background;
    out.confidence = best ? std::clamp(1.0 - best->keyword / 4.0, 0.0, 1.0) : 1.0;
    return out;
  }
  out.type_id = best->type_id;
  out.category = catalog_entry(best->type_id).category;
  const double margin = best->total - std::max(0.0, second);
  out.confidence = std::clamp(0.5 + margin / 4.0, 0.0, 1.0);
  return out;
}

} // namespace xplan
