#pragma once

// The golden scenario, its seed-7 tree and the 31-query transcript used for
// regression fixtures.

#include <memory>
#include <string>

#include "xplan/config.hpp"
#include "xplan/pipeline.hpp"
#include "xplan/transit_io.hpp"

namespace xplan {

inline constexpr std::uint64_t kGoldenSeed = 7;
inline constexpr int kGoldenRequest = 10;

inline WorldState golden_scenario() { return load_scenario(default_data_path("scenarios/golden.json")); }

inline PlanResult golden_plan(const WorldState& s, std::uint64_t seed = kGoldenSeed) {
  MctsConfig cfg;
  cfg.seed = seed;
  const TripRequest* r = find_request(s, kGoldenRequest);
  if (!r) throw domain_error("golden scenario lacks its pending request");
  return plan(s, *r, cfg, RewardWeights{});
}

inline SearchTree golden_tree() { return golden_plan(golden_scenario()).tree; }

/// All catalog queries in type order against the golden tree; returns the
/// transcript document.
inline std::string golden_transcript(Pipeline& p, const SearchTree& tree) {
  Session s;
  s.id = "golden";
  s.tree = std::make_shared<const SearchTree>(tree);
  for (const auto& e : query_catalog()) p.answer(e.text, s);
  return session_json(s).dump(2) + "\n";
}

inline std::string golden_fixture_path(const char* name) { return default_data_path((std::string("fixtures/") + name).c_str()); }

} // namespace xplan
