#pragma once

// Paratransit world model: requests, vehicles, the grid travel model, state
// transitions and the two-part reward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xplan/common.hpp"

namespace xplan {

struct Coord {
  int x = 0;
  int y = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

enum class RequestStatus { pending, assigned, in_transit, dropped_off, rejected };

inline std::string_view to_string(RequestStatus s) {
  switch (s) {
  case RequestStatus::pending: return "pending";
  case RequestStatus::assigned: return "assigned";
  case RequestStatus::in_transit: return "in-transit";
  case RequestStatus::dropped_off: return "dropped-off";
  case RequestStatus::rejected: return "rejected";
  }
  return "pending";
}

inline RequestStatus parse_status(std::string_view s) {
  if (s == "pending") return RequestStatus::pending;
  if (s == "assigned") return RequestStatus::assigned;
  if (s == "in-transit") return RequestStatus::in_transit;
  if (s == "dropped-off") return RequestStatus::dropped_off;
  if (s == "rejected") return RequestStatus::rejected;
  throw domain_error("unknown request status '" + std::string(s) + "'");
}

struct TripRequest {
  int id = 0;
  Coord origin;
  Coord destination;
  int t_req = 0; // minute the request was made (its decision epoch)
  int t_p = 0;
  int t_d = 0;
  int passengers = 1;
  RequestStatus status = RequestStatus::pending;
  std::optional<int> t_ap;
  std::optional<int> t_ad;
  std::optional<int> vehicle; // serving vehicle once assigned
  friend bool operator==(const TripRequest&, const TripRequest&) = default;
};

enum class StopKind { pickup, dropoff };

struct Stop {
  StopKind kind = StopKind::pickup;
  int request_id = 0;
  Coord location;
  int eta = 0;
  int passengers = 1;
  friend bool operator==(const Stop&, const Stop&) = default;
};

struct VehicleState {
  int id = 0;
  int capacity = 1;
  int occupancy = 0;
  Coord location;
  // Minute at which the vehicle was at (or departed from) `location`.
  int location_time = 0;
  std::vector<Stop> route;
  bool operable = true;
  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct TravelModel {
  int width = 20;
  int height = 20;
  double speed = 1.0; // cells per minute
  double congestion_factor = 1.0;
  friend bool operator==(const TravelModel&, const TravelModel&) = default;
};

struct WorldState {
  int time = 0;
  int width = 20;
  int height = 20;
  double speed = 1.0;
  double congestion_factor = 1.0;
  std::vector<VehicleState> vehicles;
  std::vector<TripRequest> requests;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct RewardWeights {
  double a = 1.0;   // fulfillment
  double b = -0.01; // timing
  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

/// Weighted parts of the reward; `fulfillment` is a*w_f and `timing` is b*w_t.
struct RewardBreakdown {
  double fulfillment = 0.0;
  double timing = 0.0;
  double total() const { return fulfillment + timing; }
};

inline TravelModel travel_model(const WorldState& s) {
  return {s.width, s.height, s.speed, s.congestion_factor};
}

// ---------------------------------------------------------------------------
// Reward

inline bool is_fulfilled(RequestStatus s) {
  return s == RequestStatus::in_transit || s == RequestStatus::dropped_off;
}

inline double fulfillment_ratio(std::span<const TripRequest> requests) {
  if (requests.empty()) throw domain_error("fulfillment_ratio: empty request list");
  std::size_t served = 0;
  for (const auto& r : requests)
    if (is_fulfilled(r.status)) ++served;
  return static_cast<double>(served) / static_cast<double>(requests.size());
}

/// Timing term of one request, signs as in the reward definition: actual
/// minus requested pickup, plus requested minus actual drop-off.
inline double request_timing(const TripRequest& r) {
  switch (r.status) {
  case RequestStatus::in_transit:
    if (!r.t_ap) throw domain_error("request " + std::to_string(r.id) + " in-transit without t_ap");
    return static_cast<double>(*r.t_ap - r.t_p);
  case RequestStatus::dropped_off:
    if (!r.t_ap || !r.t_ad)
      throw domain_error("request " + std::to_string(r.id) + " dropped-off without actual times");
    return static_cast<double>(r.t_d - *r.t_ad) + static_cast<double>(*r.t_ap - r.t_p);
  default:
    return 0.0;
  }
}

inline double timing_component(std::span<const TripRequest> requests) {
  double total = 0.0;
  for (const auto& r : requests) total += request_timing(r);
  return total;
}

inline RewardBreakdown reward(std::span<const TripRequest> requests, const RewardWeights& w) {
  return {w.a * fulfillment_ratio(requests), w.b * timing_component(requests)};
}

// ---------------------------------------------------------------------------
// Travel

inline bool in_grid(Coord c, const TravelModel& m) {
  return c.x >= 0 && c.y >= 0 && c.x < m.width && c.y < m.height;
}

inline int manhattan(Coord a, Coord b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

inline int travel_time(Coord from, Coord to, const TravelModel& m) {
  if (!in_grid(from, m) || !in_grid(to, m))
    throw domain_error("travel_time: coordinate outside the grid");
  const int d = manhattan(from, to);
  if (d == 0) return 0;
  // The epsilon keeps exact products such as 10 * 1.5 from rounding up.
  const double minutes = static_cast<double>(d) / m.speed * m.congestion_factor;
  return static_cast<int>(std::ceil(minutes - 1e-9));
}

// ---------------------------------------------------------------------------
// Lookup

inline const TripRequest* find_request(const WorldState& s, int id) {
  for (const auto& r : s.requests)
    if (r.id == id) return &r;
  return nullptr;
}

inline TripRequest* find_request(WorldState& s, int id) {
  for (auto& r : s.requests)
    if (r.id == id) return &r;
  return nullptr;
}

inline const VehicleState* find_vehicle(const WorldState& s, int id) {
  for (const auto& v : s.vehicles)
    if (v.id == id) return &v;
  return nullptr;
}

inline VehicleState* find_vehicle(WorldState& s, int id) {
  for (auto& v : s.vehicles)
    if (v.id == id) return &v;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Routes

/// Highest onboard count reached while walking the route, starting from the
/// current occupancy.
inline int peak_onboard(int occupancy, std::span<const Stop> route) {
  int onboard = occupancy;
  int peak = onboard;
  for (const auto& s : route) {
    onboard += s.kind == StopKind::pickup ? s.passengers : -s.passengers;
    peak = std::max(peak, onboard);
  }
  return peak;
}

inline bool within_capacity(const VehicleState& v) {
  return peak_onboard(v.occupancy, v.route) <= v.capacity;
}

/// Every pickup precedes its drop-off and no request appears twice per kind.
inline bool route_ordered(std::span<const Stop> route) {
  for (std::size_t i = 0; i < route.size(); ++i) {
    if (route[i].kind != StopKind::dropoff) continue;
    for (std::size_t j = i + 1; j < route.size(); ++j)
      if (route[j].request_id == route[i].request_id) return false;
  }
  for (std::size_t i = 0; i < route.size(); ++i)
    for (std::size_t j = i + 1; j < route.size(); ++j)
      if (route[i].request_id == route[j].request_id && route[i].kind == route[j].kind) return false;
  return true;
}

/// Index of the first stop that may still be changed. A vehicle that already
/// departed toward its first stop keeps that leg.
inline std::size_t first_free_position(const VehicleState& v, int now) {
  return (!v.route.empty() && v.location_time < now) ? 1 : 0;
}

inline void recompute_etas(VehicleState& v, const TravelModel& m) {
  int t = v.location_time;
  Coord at = v.location;
  for (auto& s : v.route) {
    t += travel_time(at, s.location, m);
    s.eta = t;
    at = s.location;
  }
}

struct Insertion {
  int pickup = 0;  // index of the pickup stop in the new route
  int dropoff = 1; // index of the drop-off stop in the new route
  friend bool operator==(const Insertion&, const Insertion&) = default;
};

struct InsertionOption {
  Insertion insertion;
  double cost = 0.0;
  VehicleState vehicle; // vehicle with the stops inserted and etas recomputed
};

/// Builds the vehicle that results from inserting `req` at `ins`; does not
/// check capacity.
inline VehicleState with_insertion(const VehicleState& v, const TripRequest& req, Insertion ins,
                                   const TravelModel& m, int now) {
  VehicleState out = v;
  if (out.route.empty()) out.location_time = std::max(out.location_time, now);
  Stop pick{StopKind::pickup, req.id, req.origin, 0, req.passengers};
  Stop drop{StopKind::dropoff, req.id, req.destination, 0, req.passengers};
  out.route.insert(out.route.begin() + ins.pickup, pick);
  out.route.insert(out.route.begin() + ins.dropoff, drop);
  recompute_etas(out, m);
  return out;
}

inline int route_end(const VehicleState& v, int now) {
  return v.route.empty() ? std::max(v.location_time, now) : v.route.back().eta;
}

/// All capacity-feasible insertions of `req` into `v`, cheapest first. Cost is
/// the added route duration plus the request's own lateness at both stops.
inline std::vector<InsertionOption> feasible_insertions(const WorldState& s, const TripRequest& req,
                                                        const VehicleState& v) {
  std::vector<InsertionOption> out;
  if (!v.operable || req.passengers > v.capacity) return out;
  const auto m = travel_model(s);
  const int n = static_cast<int>(v.route.size());
  const int lo = static_cast<int>(first_free_position(v, s.time));
  const int old_end = route_end(v, s.time);
  for (int p = lo; p <= n; ++p) {
    for (int d = p + 1; d <= n + 1; ++d) {
      VehicleState cand = with_insertion(v, req, {p, d}, m, s.time);
      if (!within_capacity(cand)) continue;
      const int eta_p = cand.route[static_cast<std::size_t>(p)].eta;
      const int eta_d = cand.route[static_cast<std::size_t>(d)].eta;
      double cost = static_cast<double>(route_end(cand, s.time) - old_end) +
                    std::max(0, eta_p - req.t_p) + std::max(0, eta_d - req.t_d);
      out.push_back({{p, d}, cost, std::move(cand)});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.cost < b.cost; });
  return out;
}

// ---------------------------------------------------------------------------
// Transitions

inline WorldState apply_assignment(const WorldState& state, int request_id, int vehicle_id,
                                   Insertion ins) {
  WorldState out = state;
  TripRequest* req = find_request(out, request_id);
  if (!req) throw domain_error("apply_assignment: no request " + std::to_string(request_id));
  VehicleState* veh = find_vehicle(out, vehicle_id);
  if (!veh) throw domain_error("apply_assignment: no vehicle " + std::to_string(vehicle_id));
  if (!veh->operable)
    throw domain_error("apply_assignment: vehicle " + std::to_string(vehicle_id) + " is inoperable");
  if (req->status != RequestStatus::pending)
    throw domain_error("apply_assignment: request " + std::to_string(request_id) + " is not pending");
  const int n = static_cast<int>(veh->route.size());
  const int lo = static_cast<int>(first_free_position(*veh, out.time));
  if (ins.pickup < lo || ins.pickup > n || ins.dropoff <= ins.pickup || ins.dropoff > n + 1)
    throw domain_error("apply_assignment: insertion violates pickup-before-dropoff ordering");
  VehicleState next = with_insertion(*veh, *req, ins, travel_model(out), out.time);
  if (!within_capacity(next))
    throw domain_error("apply_assignment: insertion exceeds capacity of vehicle " +
                       std::to_string(vehicle_id));
  *veh = std::move(next);
  req->status = RequestStatus::assigned;
  req->vehicle = vehicle_id;
  return out;
}

inline WorldState apply_rejection(const WorldState& state, int request_id) {
  WorldState out = state;
  TripRequest* req = find_request(out, request_id);
  if (!req) throw domain_error("apply_rejection: no request " + std::to_string(request_id));
  req->status = RequestStatus::rejected;
  return out;
}

/// Executes every stop whose eta is at or before `until` and moves the clock.
inline void advance_in_place(WorldState& s, int until) {
  for (auto& v : s.vehicles) {
    std::size_t done = 0;
    for (; done < v.route.size() && v.route[done].eta <= until; ++done) {
      const Stop& st = v.route[done];
      TripRequest* r = find_request(s, st.request_id);
      if (st.kind == StopKind::pickup) {
        v.occupancy += st.passengers;
        if (r) {
          r->status = RequestStatus::in_transit;
          r->t_ap = st.eta;
        }
      } else {
        v.occupancy -= st.passengers;
        if (r) {
          r->status = RequestStatus::dropped_off;
          r->t_ad = st.eta;
        }
      }
      v.location = st.location;
      v.location_time = st.eta;
    }
    v.route.erase(v.route.begin(), v.route.begin() + static_cast<std::ptrdiff_t>(done));
  }
  s.time = std::max(s.time, until);
}

inline WorldState advance(const WorldState& state, int until) {
  WorldState out = state;
  advance_in_place(out, until);
  return out;
}

/// Re-times every committed route under the state's current travel model.
inline void retime_routes(WorldState& s) {
  const auto m = travel_model(s);
  for (auto& v : s.vehicles) recompute_etas(v, m);
}

// ---------------------------------------------------------------------------
// Demand

struct DemandModel {
  double rate = 0.05; // arrivals per minute
  int lead_min = 10;  // minutes between request and requested pickup
  int lead_max = 30;
  int slack_min = 10; // extra minutes on top of direct ride for t_d
  int slack_max = 20;
  int passengers = 1;
  friend bool operator==(const DemandModel&, const DemandModel&) = default;
};

inline TripRequest sample_request(Rng& rng, int id, int t_req, const DemandModel& dm,
                                  const TravelModel& m) {
  TripRequest r;
  r.id = id;
  r.t_req = t_req;
  r.origin = {rng.uniform_int(0, m.width - 1), rng.uniform_int(0, m.height - 1)};
  do {
    r.destination = {rng.uniform_int(0, m.width - 1), rng.uniform_int(0, m.height - 1)};
  } while (r.destination == r.origin && m.width * m.height > 1);
  TravelModel free_flow = m;
  free_flow.congestion_factor = 1.0;
  r.t_p = t_req + rng.uniform_int(dm.lead_min, dm.lead_max);
  r.t_d = r.t_p + std::max(1, travel_time(r.origin, r.destination, free_flow)) +
          rng.uniform_int(dm.slack_min, dm.slack_max);
  r.passengers = std::max(1, dm.passengers);
  return r;
}

/// Next arrival strictly after `after`, in whole minutes.
inline int next_arrival(Rng& rng, int after, double rate) {
  const double gap = rng.exponential(rate);
  return after + std::max(1, static_cast<int>(std::ceil(gap)));
}

/// Poisson arrivals over [start, start + horizon) with one request per minute
/// at most. Deterministic in `seed`.
inline std::vector<TripRequest> generate_demand(std::uint64_t seed, int horizon,
                                                const DemandModel& dm, const TravelModel& m,
                                                int start = 0, int first_id = 0) {
  if (!(dm.rate > 0.0)) throw domain_error("generate_demand: rate must be positive");
  Rng rng(seed);
  std::vector<TripRequest> out;
  double t = static_cast<double>(start);
  int last = start - 1;
  const int end = start + horizon;
  for (;;) {
    t += rng.exponential(dm.rate);
    int minute = static_cast<int>(std::floor(t));
    if (minute <= last) minute = last + 1;
    if (minute >= end || t >= static_cast<double>(end)) break;
    last = minute;
    out.push_back(sample_request(rng, first_id + static_cast<int>(out.size()), minute, dm, m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

inline void validate(const WorldState& s) {
  const auto m = travel_model(s);
  if (!(s.congestion_factor > 0.0)) throw domain_error("congestion_factor must be positive");
  if (!(s.speed > 0.0)) throw domain_error("speed must be positive");
  for (std::size_t i = 0; i < s.requests.size(); ++i) {
    const auto& r = s.requests[i];
    for (std::size_t j = i + 1; j < s.requests.size(); ++j)
      if (s.requests[j].id == r.id) throw domain_error("duplicate request id " + std::to_string(r.id));
    if (r.t_p >= r.t_d) throw domain_error("request " + std::to_string(r.id) + ": t_p must precede t_d");
    if (r.passengers < 1) throw domain_error("request " + std::to_string(r.id) + ": passengers < 1");
    if (r.t_ap && !is_fulfilled(r.status))
      throw domain_error("request " + std::to_string(r.id) + ": t_ap without pickup");
    if (r.t_ad && (r.status != RequestStatus::dropped_off || !r.t_ap || *r.t_ap > *r.t_ad))
      throw domain_error("request " + std::to_string(r.id) + ": inconsistent t_ad");
    if (!in_grid(r.origin, m) || !in_grid(r.destination, m))
      throw domain_error("request " + std::to_string(r.id) + ": outside grid");
  }
  for (std::size_t i = 0; i < s.vehicles.size(); ++i) {
    const auto& v = s.vehicles[i];
    for (std::size_t j = i + 1; j < s.vehicles.size(); ++j)
      if (s.vehicles[j].id == v.id) throw domain_error("duplicate vehicle id " + std::to_string(v.id));
    if (v.capacity < 1) throw domain_error("vehicle " + std::to_string(v.id) + ": capacity < 1");
    if (v.occupancy < 0) throw domain_error("vehicle " + std::to_string(v.id) + ": negative occupancy");
    if (!within_capacity(v)) throw domain_error("vehicle " + std::to_string(v.id) + ": over capacity");
    if (!route_ordered(v.route))
      throw domain_error("vehicle " + std::to_string(v.id) + ": route out of order");
    if (!in_grid(v.location, m)) throw domain_error("vehicle " + std::to_string(v.id) + ": outside grid");
    for (std::size_t k = 1; k < v.route.size(); ++k)
      if (v.route[k].eta < v.route[k - 1].eta)
        throw domain_error("vehicle " + std::to_string(v.id) + ": decreasing stop times");
  }
}

} // namespace xplan
