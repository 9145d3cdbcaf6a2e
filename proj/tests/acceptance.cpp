// Acceptance suite: one PASS/FAIL line per primary criterion, with timings.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "oracle.hpp"
#include "xplan/golden.hpp"

using namespace xplan;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  const char* name;
  double budget_s; // 0 = no runtime bound
  std::function<Outcome()> run;
};

#define REQUIRE(cond, msg)                                                                                                   \
  do {                                                                                                                       \
    if (!(cond)) return Outcome{false, msg};                                                                                 \
  } while (0)

const std::string kData = XPLAN_DATA_DIR;

const SearchTree& golden() {
  static const SearchTree t = golden_tree();
  return t;
}

Outcome reward_oracle() {
  Rng rng(2024);
  for (int k = 0; k < 1000; ++k) {
    auto rs = oracle::random_requests(rng, rng.uniform_int(1, 8));
    const RewardWeights w{rng.uniform() * 10 - 5, rng.uniform() * 2 - 1};
    const auto b = oracle::brute_reward(rs);
    REQUIRE(std::abs(reward(rs, w).total() - (w.a * b.wf + w.b * b.wt)) <= 1e-9, "reward mismatch at state " + std::to_string(k));
    REQUIRE(std::abs(fulfillment_ratio(rs) - b.wf) <= 1e-9, "fulfillment mismatch at state " + std::to_string(k));
    REQUIRE(std::abs(timing_component(rs) - b.wt) <= 1e-9, "timing mismatch at state " + std::to_string(k));
  }
  return {true, "1000 states"};
}

Outcome catalog() {
  int lists = 0, formulas = 0, flagged = 0;
  for (const auto& e : query_catalog()) {
    const std::string once = canonicalize(e.gold);
    REQUIRE(canonicalize(once) == once, "type " + std::to_string(e.id) + " is not a fixpoint");
    REQUIRE(parse_formula(once) == parse_formula(e.gold), "type " + std::to_string(e.id) + " changes meaning when printed");
    const FormulaList f = parse_formula(e.gold);
    for (const auto& r : score_all(f, EvidenceQueryContext{&golden(), -1, RewardWeights{}})) {
      REQUIRE(!r.is_error(), "type " + std::to_string(e.id) + ": " + r.formula + " -> " + std::get<EvidenceError>(r.value).code);
      ++formulas;
    }
    ++lists;
    if (e.flag) {
      ++flagged;
      REQUIRE(e.id == 10, "unexpected flag on type " + std::to_string(e.id));
      REQUIRE(e.gold == catalog_entry(7).gold, "flagged entry was altered");
    }
  }
  REQUIRE(flagged == 1, "expected exactly one flagged entry");
  return {true, std::to_string(lists) + " formula lists, " + std::to_string(formulas) + " formulas, item 10 flagged"};
}

Outcome scorer_oracle() {
  Rng rng(31337);
  int compared = 0, max_nodes = 0;
  for (int trial = 0; trial < 500; ++trial) {
    WorldState s = oracle::random_state(rng);
    DemandModel dm;
    dm.passengers = rng.uniform_int(1, 3);
    const TripRequest req = sample_request(rng, 100, 0, dm, travel_model(s));
    MctsConfig cfg;
    cfg.iterations = rng.uniform_int(10, 80);
    cfg.horizon = 30;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const PlanResult p = plan(s, req, cfg, RewardWeights{});
    max_nodes = std::max(max_nodes, static_cast<int>(p.tree.nodes.size()));
    REQUIRE(p.tree.nodes.size() <= 200, "tree exceeds 200 nodes");

    oracle::FormulaGen gen{Rng(mix_seed(static_cast<std::uint64_t>(trial), 2)), static_cast<int>(s.vehicles.size())};
    FormulaList list;
    for (int i = 0; i < 12; ++i) list.push_back(gen.any());
    const int nv = static_cast<int>(s.vehicles.size());
    for (int v = 0; v < nv; ++v)
      for (const char* text : {"viod(tp(0), eta(V))", "vioa(tp(0), eta(V))", "viod(td(0), eta(V))", "vioa(td(0), eta(V))",
                               "pctd(tp(0), eta(V))", "pcta(td(0), eta(V))", "r(V)", "rd1(V)", "rd2(V)"}) {
        std::string t = text;
        t.replace(t.find('V'), 1, std::to_string(v));
        list.push_back(parse_formula(t).at(0));
      }
    const auto rs = score_all(list, EvidenceQueryContext{&p.tree, -1, RewardWeights{}});
    std::map<std::string, double> value;
    for (std::size_t i = 0; i < list.size(); ++i) {
      REQUIRE(oracle::same_result(rs[i], oracle::naive_score(p.tree, list[i])),
              "trial " + std::to_string(trial) + ": " + print_term(list[i]));
      ++compared;
      if (const auto x = scalar_of(rs[i].value)) value[rs[i].formula] = *x;
    }
    for (int v = 0; v < nv; ++v) {
      const std::string V = std::to_string(v);
      for (const char* w : {"tp", "td"}) {
        const std::string d = "viod(" + std::string(w) + "(0), eta(" + V + "))", a = "vioa(" + std::string(w) + "(0), eta(" + V + "))";
        if (value.count(d) && value.count(a)) REQUIRE(value[d] * value[a] == 0.0, "viod*vioa != 0 for " + d);
      }
      for (const char* pn : {"pctd(tp(0), eta(", "pcta(td(0), eta("}) {
        const std::string k = pn + V + "))";
        if (value.count(k)) REQUIRE(value[k] >= 0.0 && value[k] <= 1.0, k + " outside [0,1]");
      }
      if (value.count("r(" + V + ")"))
        REQUIRE(std::abs(value["rd1(" + V + ")"] + value["rd2(" + V + ")"] - value["r(" + V + ")"]) <= 1e-9, "rd1+rd2 != r");
    }
  }
  return {true, std::to_string(compared) + " formula evaluations, trees up to " + std::to_string(max_nodes) + " nodes"};
}

Outcome ctl_oracle() {
  Rng rng(4242);
  auto neg = [](CtlFormula x) { return CtlFormula::unary(CtlOp::negation, std::move(x)); };
  for (int i = 0; i < 10000; ++i) {
    const KripkeView k = oracle::random_kripke(rng, 9);
    const CtlFormula phi = oracle::random_ctl(rng, 3);
    REQUIRE(check(k, phi) == oracle::PathOracle{k}.check(phi), "disagreement on " + print_ctl(phi));
    const CtlFormula a = oracle::random_ctl(rng, 2);
    REQUIRE(check_set(k, CtlFormula::unary(CtlOp::ag, a)) == check_set(k, neg(CtlFormula::unary(CtlOp::ef, neg(a)))),
            "AG/EF duality fails for " + print_ctl(a));
    REQUIRE(check_set(k, CtlFormula::unary(CtlOp::af, a)) == check_set(k, neg(CtlFormula::unary(CtlOp::eg, neg(a)))),
            "AF/EG duality fails for " + print_ctl(a));
  }
  return {true, "10000 cases, dualities hold"};
}

Outcome planner_safety() {
  Rng rng(97);
  const CtlFormula safe = parse_ctl("AG !overcap");
  int assigned = 0;
  for (int k = 0; k < 100; ++k) {
    WorldState s = oracle::random_fleet(rng, rng.uniform_int(2, 5));
    const TripRequest r = sample_request(rng, 10, 0, DemandModel{}, travel_model(s));
    MctsConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(k);
    cfg.iterations = 300;
    const PlanResult p = plan(s, r, cfg, RewardWeights{});
    if (p.decision.kind == ActionKind::reject) continue;
    ++assigned;
    const int branch = oracle::committed_branch(p.tree);
    REQUIRE(branch >= 0, "decision has no branch");
    REQUIRE(holds_at_root(subtree_view(p.tree, branch), safe), "AG !overcap fails on plan " + std::to_string(k));
  }
  int full = 0;
  for (int k = 0; k < 50; ++k) {
    WorldState s;
    const int nv = rng.uniform_int(1, 4);
    for (int v = 0; v < nv; ++v) {
      const int cap = rng.uniform_int(1, 4);
      s.vehicles.push_back(oracle::make_vehicle(v, {rng.uniform_int(0, 19), rng.uniform_int(0, 19)}, cap, cap));
    }
    const TripRequest r = sample_request(rng, 0, 0, DemandModel{}, travel_model(s));
    MctsConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(k);
    cfg.iterations = 100;
    REQUIRE(plan(s, r, cfg, RewardWeights{}).decision.kind == ActionKind::reject, "full fleet did not reject");
    ++full;
  }
  return {true, std::to_string(assigned) + " of 100 plans assigned, all safe; " + std::to_string(full) + " full fleets rejected"};
}

Outcome planner_quality() {
  WorldState fleet;
  for (int v = 0; v < 4; ++v) fleet.vehicles.push_back(oracle::make_vehicle(v, {5 * v, 19 - 5 * v}, 2));
  double mcts = 0, random = 0;
  const int episodes = 30;
  for (int e = 0; e < episodes; ++e) {
    DemandModel dm;
    dm.rate = 0.1;
    auto demand = generate_demand(static_cast<std::uint64_t>(1000 + e), 400, dm, travel_model(fleet));
    REQUIRE(demand.size() >= 20, "demand generator produced too few requests");
    demand.resize(20);
    const MctsConfig c;
    mcts += run_episode(fleet, demand, Policy::mcts, c, {}, static_cast<std::uint64_t>(e)).reward.total();
    random += run_episode(fleet, demand, Policy::random_feasible, c, {}, static_cast<std::uint64_t>(e)).reward.total();
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "mean reward mcts %.3f vs random %.3f", mcts / episodes, random / episodes);
  REQUIRE(mcts >= random, buf);
  return {true, buf};
}

Outcome pipeline_accuracy() {
  const PromptSet prompts = load_prompts(kData + "/prompts");
  HashEmbedder e;
  const ChunkStore store = index_corpus(load_corpus(kData + "/corpus"), e);
  const LabeledCorpus para = load_labeled_corpus(kData + "/eval/paraphrases.tsv");
  REQUIRE(para.items.size() == 155 && para.malformed.empty(), "paraphrase corpus is not 155 clean rows");
  Pipeline fb(prompts, nullptr, &store, &e);
  const AccuracyReport rf = evaluate_corpus(para, fb, 1);
  const double acc = Tally::rate(rf.overall.class_at1, rf.overall.items);

  auto llm = load_scripted(golden_fixture_path("llm_golden.json"));
  Pipeline mock(prompts, llm.get(), &store, &e);
  const AccuracyReport rm = evaluate_corpus(canonical_corpus(), mock, 3);
  char buf[160];
  std::snprintf(buf, sizeof buf, "fallback Acc@1 %d/%d = %.4f; mock classification %d/31, logic %d/31", rf.overall.class_at1,
                rf.overall.items, acc, rm.overall.class_at1, rm.overall.logic_at1);
  REQUIRE(acc >= 0.90, buf);
  REQUIRE(rm.overall.items == 31 && rm.overall.class_at1 == 31 && rm.overall.logic_at1 == 31, buf);
  return {true, buf};
}

Outcome rag() {
  HashEmbedder e;
  const ChunkStore store = index_corpus(load_corpus(kData + "/corpus"), e);
  for (const auto& c : store.chunks()) {
    const auto hits = store.retrieve(e, c.text, 3, 0.0);
    REQUIRE(!hits.empty() && hits[0].chunk_id == c.id && hits[0].relatedness == 1.0, "chunk " + std::to_string(c.id) + " not rank 1 at 1.0");
  }
  std::vector<std::string> words;
  for (const auto& c : store.chunks())
    for (auto& w : detail::words_of(c.text)) words.push_back(w);
  Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    std::string q;
    for (int w = rng.uniform_int(1, 10); w > 0; --w) q += words[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(words.size()) - 1))] + " ";
    const int k = rng.uniform_int(1, 5);
    const double th = rng.uniform() * 0.5;
    const auto hits = store.retrieve(e, q, k, th);
    REQUIRE(hits.size() <= static_cast<std::size_t>(k), "more than k hits");
    // Everything left out must score below the threshold or below the last hit.
    int above = 0;
    for (const auto& c : store.chunks()) above += cosine(e.embed(q), c.embedding) >= th;
    REQUIRE(static_cast<int>(hits.size()) == std::min(k, above), "hit count differs from min(k, candidates)");
    for (std::size_t h = 0; h < hits.size(); ++h) {
      REQUIRE(hits[h].relatedness >= th, "hit below threshold");
      if (h) REQUIRE(hits[h - 1].relatedness >= hits[h].relatedness, "hits out of order");
    }
  }
  return {true, std::to_string(store.size()) + " chunks self-retrieve; 1000 random queries ordered"};
}

Outcome golden_transcript_check() {
  std::ifstream in(golden_fixture_path("transcript_golden.json"), std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string want = ss.str();
  REQUIRE(!want.empty(), "missing transcript fixture");
  const PromptSet prompts = load_prompts(kData + "/prompts");
  HashEmbedder e;
  const ChunkStore store = index_corpus(load_corpus(kData + "/corpus"), e);
  for (int run = 1; run <= 2; ++run) {
    auto llm = load_scripted(golden_fixture_path("llm_golden.json"));
    Pipeline p(prompts, llm.get(), &store, &e);
    REQUIRE(golden_transcript(p, golden_tree()) == want, "run " + std::to_string(run) + " differs from the fixture");
  }
  return {true, "31 turns, " + std::to_string(want.size()) + " bytes, identical on two runs"};
}

} // namespace

int main(int argc, char** argv) {
  // Optional argument: run only the criterion with this name (spaces as '_').
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<Criterion> criteria = {
      {"reward oracle", 5, reward_oracle},
      {"formula catalog", 0, catalog},
      {"scorer oracle", 30, scorer_oracle},
      {"ctl oracle", 60, ctl_oracle},
      {"planner safety", 0, planner_safety},
      {"planner quality", 120, planner_quality},
      {"pipeline accuracy", 0, pipeline_accuracy},
      {"rag determinism", 0, rag},
      {"golden transcript", 0, golden_transcript_check},
  };
  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    std::string key = c.name;
    std::replace(key.begin(), key.end(), ' ', '_');
    if (!only.empty() && key != only) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += " (over the " + std::to_string(static_cast<int>(c.budget_s)) + " s budget)";
    }
    failed += !o.pass;
    std::printf("%s  %-18s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 2;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed ? 1 : 0;
}
