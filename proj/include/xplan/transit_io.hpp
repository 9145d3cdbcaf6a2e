#pragma once

// Scenario documents. Field names follow the domain types; times are integer
// minutes and coordinates are [x, y] pairs.

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "xplan/transit.hpp"

namespace xplan {

using json = nlohmann::json;

inline constexpr int kScenarioVersion = 1;

/// Rejects keys outside `allowed`; configuration and scenario documents are
/// strict so that typos surface instead of silently falling back to defaults.
inline void require_known_keys(const json& j, std::initializer_list<std::string_view> allowed,
                               std::string_view where) {
  if (!j.is_object()) throw domain_error(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw domain_error(std::string(where) + ": unknown key '" + key + "'");
  }
}

inline void to_json(json& j, const Coord& c) { j = json::array({c.x, c.y}); }
inline void from_json(const json& j, Coord& c) {
  if (!j.is_array() || j.size() != 2) throw domain_error("coordinate must be [x, y]");
  c.x = j.at(0).get<int>();
  c.y = j.at(1).get<int>();
}

inline void to_json(json& j, const TripRequest& r) {
  j = json{{"id", r.id},
           {"origin", r.origin},
           {"destination", r.destination},
           {"t_req", r.t_req},
           {"t_p", r.t_p},
           {"t_d", r.t_d},
           {"passengers", r.passengers},
           {"status", std::string(to_string(r.status))}};
  if (r.t_ap) j["t_ap"] = *r.t_ap;
  if (r.t_ad) j["t_ad"] = *r.t_ad;
  if (r.vehicle) j["vehicle"] = *r.vehicle;
}

inline void from_json(const json& j, TripRequest& r) {
  require_known_keys(j, {"id", "origin", "destination", "t_req", "t_p", "t_d", "passengers", "status",
                         "t_ap", "t_ad", "vehicle"},
                     "request");
  r = TripRequest{};
  r.id = j.at("id").get<int>();
  r.origin = j.at("origin").get<Coord>();
  r.destination = j.at("destination").get<Coord>();
  r.t_req = j.value("t_req", 0);
  r.t_p = j.at("t_p").get<int>();
  r.t_d = j.at("t_d").get<int>();
  r.passengers = j.value("passengers", 1);
  r.status = parse_status(j.value("status", std::string("pending")));
  if (j.contains("t_ap")) r.t_ap = j.at("t_ap").get<int>();
  if (j.contains("t_ad")) r.t_ad = j.at("t_ad").get<int>();
  if (j.contains("vehicle")) r.vehicle = j.at("vehicle").get<int>();
}

inline void to_json(json& j, const Stop& s) {
  j = json{{"kind", s.kind == StopKind::pickup ? "pickup" : "dropoff"},
           {"request_id", s.request_id},
           {"location", s.location},
           {"eta", s.eta},
           {"passengers", s.passengers}};
}

inline void from_json(const json& j, Stop& s) {
  require_known_keys(j, {"kind", "request_id", "location", "eta", "passengers"}, "stop");
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "pickup" && kind != "dropoff") throw domain_error("stop kind must be pickup or dropoff");
  s.kind = kind == "pickup" ? StopKind::pickup : StopKind::dropoff;
  s.request_id = j.at("request_id").get<int>();
  s.location = j.at("location").get<Coord>();
  s.eta = j.at("eta").get<int>();
  s.passengers = j.value("passengers", 1);
}

inline void to_json(json& j, const VehicleState& v) {
  j = json{{"id", v.id},         {"capacity", v.capacity},           {"occupancy", v.occupancy},
           {"location", v.location}, {"location_time", v.location_time}, {"route", v.route},
           {"operable", v.operable}};
}

inline void from_json(const json& j, VehicleState& v) {
  require_known_keys(j, {"id", "capacity", "occupancy", "location", "location_time", "route", "operable"},
                     "vehicle");
  v = VehicleState{};
  v.id = j.at("id").get<int>();
  v.capacity = j.at("capacity").get<int>();
  v.occupancy = j.value("occupancy", 0);
  v.location = j.at("location").get<Coord>();
  v.location_time = j.value("location_time", 0);
  if (j.contains("route")) v.route = j.at("route").get<std::vector<Stop>>();
  v.operable = j.value("operable", true);
}

inline void to_json(json& j, const WorldState& s) {
  j = json{{"version", kScenarioVersion},
           {"time", s.time},
           {"grid", {{"width", s.width}, {"height", s.height}}},
           {"speed", s.speed},
           {"congestion_factor", s.congestion_factor},
           {"vehicles", s.vehicles},
           {"requests", s.requests}};
}

inline void from_json(const json& j, WorldState& s) {
  require_known_keys(j, {"version", "time", "grid", "speed", "congestion_factor", "vehicles", "requests"},
                     "scenario");
  if (j.value("version", kScenarioVersion) != kScenarioVersion)
    throw domain_error("unsupported scenario version");
  s = WorldState{};
  s.time = j.value("time", 0);
  if (j.contains("grid")) {
    require_known_keys(j.at("grid"), {"width", "height"}, "grid");
    s.width = j.at("grid").at("width").get<int>();
    s.height = j.at("grid").at("height").get<int>();
  }
  s.speed = j.value("speed", 1.0);
  s.congestion_factor = j.value("congestion_factor", 1.0);
  s.vehicles = j.value("vehicles", std::vector<VehicleState>{});
  s.requests = j.value("requests", std::vector<TripRequest>{});
}

inline WorldState parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw domain_error(std::string("scenario: ") + e.what());
  }
  WorldState s;
  try {
    s = j.get<WorldState>();
  } catch (const json::exception& e) {
    throw domain_error(std::string("scenario: ") + e.what());
  }
  validate(s);
  return s;
}

inline WorldState load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw domain_error("cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

inline std::string dump_scenario(const WorldState& s) { return json(s).dump(2) + "\n"; }

inline void to_json(json& j, const RewardWeights& w) { j = json{{"a", w.a}, {"b", w.b}}; }
inline void from_json(const json& j, RewardWeights& w) {
  require_known_keys(j, {"a", "b"}, "weights");
  w.a = j.value("a", 1.0);
  w.b = j.value("b", -0.01);
}

inline void to_json(json& j, const DemandModel& d) {
  j = json{{"rate", d.rate},         {"lead_min", d.lead_min},   {"lead_max", d.lead_max},
           {"slack_min", d.slack_min}, {"slack_max", d.slack_max}, {"passengers", d.passengers}};
}
inline void from_json(const json& j, DemandModel& d) {
  require_known_keys(j, {"rate", "lead_min", "lead_max", "slack_min", "slack_max", "passengers"}, "demand");
  DemandModel def;
  d.rate = j.value("rate", def.rate);
  d.lead_min = j.value("lead_min", def.lead_min);
  d.lead_max = j.value("lead_max", def.lead_max);
  d.slack_min = j.value("slack_min", def.slack_min);
  d.slack_max = j.value("slack_max", def.slack_max);
  d.passengers = j.value("passengers", def.passengers);
}

} // namespace xplan
