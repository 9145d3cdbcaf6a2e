// xplan: command-line front end for planning, evidence scoring, CTL checks,
// the query pipeline and the HTTP service.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "xplan/golden.hpp"
#include "xplan/service.hpp"

using namespace xplan;

namespace {

constexpr int kValidationExit = 2;

WorldState scenario_arg(const std::string& s) { return s == "golden" ? golden_scenario() : load_scenario(s); }

SearchTree tree_arg(const std::string& t) { return t == "golden" ? golden_tree() : load_tree(t); }

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw domain_error("cannot write " + path);
  out << text;
}

Policy policy_arg(const std::string& p) {
  if (p == "mcts") return Policy::mcts;
  if (p == "random") return Policy::random_feasible;
  if (p == "greedy") return Policy::greedy;
  throw domain_error("unknown policy '" + p + "' (expected mcts, random or greedy)");
}

struct PipelineOptions {
  std::string config;
  std::string backend;
  std::string fixtures;
};

struct PipelineBundle {
  ServiceConfig cfg;
  std::unique_ptr<LlmClient> llm;
  std::unique_ptr<Embedder> embedder;
  ChunkStore store;
  std::unique_ptr<Pipeline> pipeline;
};

std::unique_ptr<PipelineBundle> make_pipeline(const PipelineOptions& o) {
  auto b = std::make_unique<PipelineBundle>();
  if (!o.config.empty()) b->cfg = load_config(o.config);
  if (!o.backend.empty()) b->cfg.backend = parse_backend(o.backend);
  if (!o.fixtures.empty()) b->cfg.fixtures = o.fixtures;
  b->llm = make_llm(b->cfg);
  b->embedder = make_embedder(b->cfg);
  b->store = index_corpus(load_corpus(b->cfg.corpus), *b->embedder);
  PipelineConfig pc;
  pc.top_k = b->cfg.top_k;
  pc.threshold = b->cfg.threshold;
  pc.temperature = b->cfg.temperature;
  pc.weights = b->cfg.weights;
  b->pipeline = std::make_unique<Pipeline>(load_prompts(b->cfg.prompts), b->llm.get(), &b->store, b->embedder.get(), pc);
  return b;
}

void add_pipeline_options(CLI::App* cmd, PipelineOptions& o) {
  cmd->add_option("--config", o.config, "Service config file supplying backend, corpus and prompt settings");
  cmd->add_option("--backend", o.backend, "Language backend: fallback, mock or remote (default: fallback, or the config's)");
  cmd->add_option("--fixtures", o.fixtures, "Recorded completions for the mock backend");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable vehicle-assignment planning workbench"};
  app.require_subcommand(1);

  // simulate
  std::string sim_scenario = "golden", sim_policy = "mcts";
  int sim_requests = 20, sim_episodes = 1, sim_iterations = 1000, sim_horizon = 60;
  double sim_rate = 0.05;
  std::uint64_t sim_seed = 0;
  auto* sim = app.add_subcommand("simulate", "Run demand episodes against a fleet and report rewards");
  sim->add_option("--scenario", sim_scenario, "Scenario file, or 'golden'")->capture_default_str();
  sim->add_option("--policy", sim_policy, "mcts, random or greedy")->capture_default_str();
  sim->add_option("--requests", sim_requests, "Requests per episode")->capture_default_str();
  sim->add_option("--episodes", sim_episodes, "Number of episodes")->capture_default_str();
  sim->add_option("--iterations", sim_iterations, "MCTS iterations per decision")->capture_default_str();
  sim->add_option("--horizon", sim_horizon, "Rollout horizon in minutes")->capture_default_str();
  sim->add_option("--rate", sim_rate, "Request arrivals per minute")->capture_default_str();
  sim->add_option("--seed", sim_seed, "Base seed")->capture_default_str();

  // plan
  std::string plan_scenario = "golden", plan_out;
  std::uint64_t plan_seed = kGoldenSeed;
  int plan_iterations = 1000, plan_request = -1;
  auto* pl = app.add_subcommand("plan", "Plan one decision epoch and write the search tree");
  pl->add_option("--scenario", plan_scenario, "Scenario file, or 'golden'")->capture_default_str();
  pl->add_option("--seed", plan_seed, "Search seed")->capture_default_str();
  pl->add_option("--iterations", plan_iterations, "MCTS iterations")->capture_default_str();
  pl->add_option("--request-id", plan_request, "Pending request to decide (default: first pending)");
  pl->add_option("--out", plan_out, "Output file (default: stdout)");

  // eval-logic
  std::string ev_formula, ev_tree = "golden";
  auto* ev = app.add_subcommand("eval-logic", "Score evidence formulas against a tree");
  ev->add_option("formula", ev_formula, "Formula list, e.g. \"tp(0); eta(2)\"")->required();
  ev->add_option("--tree", ev_tree, "Tree file, or 'golden'")->capture_default_str();

  // check-ctl
  std::string ctl_formula, ctl_tree = "golden";
  int ctl_node = -1;
  auto* ctl = app.add_subcommand("check-ctl", "Check a CTL formula over a tree");
  ctl->add_option("formula", ctl_formula, "CTL formula, e.g. \"AG !overcap\"")->required();
  ctl->add_option("--tree", ctl_tree, "Tree file, or 'golden'")->capture_default_str();
  ctl->add_option("--node", ctl_node, "Check the subtree rooted at this node");

  // ask
  std::string ask_query, ask_tree = "golden";
  bool ask_text = false;
  PipelineOptions ask_opts;
  auto* ask = app.add_subcommand("ask", "Answer one free-form query about a tree");
  ask->add_option("query", ask_query, "The question")->required();
  ask->add_option("--tree", ask_tree, "Tree file, or 'golden'")->capture_default_str();
  ask->add_flag("--text", ask_text, "Print only the explanation text");
  add_pipeline_options(ask, ask_opts);

  // bench-corpus
  std::string bench_corpus = default_data_path("eval/paraphrases.tsv");
  int bench_k = 3;
  bool bench_items = false;
  PipelineOptions bench_opts;
  auto* bench = app.add_subcommand("bench-corpus", "Classification and logic accuracy over a labeled corpus");
  bench->add_option("--corpus", bench_corpus, "Labeled TSV corpus, or 'canonical' for the 31 catalog queries")->capture_default_str();
  bench->add_option("--k", bench_k, "Attempts per item for Acc@k")->capture_default_str();
  bench->add_flag("--items", bench_items, "Include per-item outcomes");
  add_pipeline_options(bench, bench_opts);

  // serve
  std::string serve_config, serve_host;
  int serve_port = -1;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", serve_config, "Service config file (default: built-in defaults)");
  serve->add_option("--host", serve_host, "Override listen host");
  serve->add_option("--port", serve_port, "Override listen port");

  // record-fixtures
  std::string rec_dir = default_data_path("fixtures");
  auto* rec = app.add_subcommand("record-fixtures", "Re-record the replay completions and the golden transcript");
  rec->add_option("--out-dir", rec_dir, "Fixture directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationExit;
  }

  try {
    if (*sim) {
      const WorldState fleet = scenario_arg(sim_scenario);
      const Policy policy = policy_arg(sim_policy);
      if (sim_requests < 1 || sim_episodes < 1) throw domain_error("--requests and --episodes must be positive");
      MctsConfig cfg;
      cfg.iterations = sim_iterations;
      cfg.horizon = sim_horizon;
      json episodes = json::array();
      double total = 0.0;
      for (int e = 0; e < sim_episodes; ++e) {
        DemandModel dm;
        dm.rate = sim_rate;
        const std::uint64_t seed = mix_seed(sim_seed, static_cast<std::uint64_t>(e));
        auto demand = generate_demand(seed, 24 * 60, dm, travel_model(fleet), fleet.time, next_request_id(fleet));
        if (static_cast<int>(demand.size()) > sim_requests) demand.resize(static_cast<std::size_t>(sim_requests));
        const EpisodeResult r = run_episode(fleet, demand, policy, cfg, RewardWeights{}, seed);
        total += r.reward.total();
        episodes.push_back({{"episode", e}, {"requests", demand.size()}, {"served", r.served}, {"rejected", r.rejected},
                            {"fulfillment", r.reward.fulfillment}, {"timing", r.reward.timing}, {"reward", r.reward.total()}});
      }
      std::cout << json{{"version", 1}, {"policy", sim_policy}, {"episodes", episodes}, {"mean_reward", total / sim_episodes}}.dump(2)
                << "\n";
    } else if (*pl) {
      const WorldState s = scenario_arg(plan_scenario);
      const TripRequest* req = nullptr;
      for (const auto& r : s.requests)
        if (r.status == RequestStatus::pending && (plan_request < 0 || r.id == plan_request)) {
          req = &r;
          break;
        }
      if (!req) throw domain_error(plan_request < 0 ? "scenario has no pending request" : "request is not pending");
      MctsConfig cfg;
      cfg.seed = plan_seed;
      cfg.iterations = plan_iterations;
      write_out(plan_out, dump_tree(plan(s, *req, cfg, RewardWeights{}).tree));
    } else if (*ev) {
      const FormulaList f = parse_formula(ev_formula);
      const SearchTree t = tree_arg(ev_tree);
      std::cout << evidence_list_json(score_all(f, EvidenceQueryContext{&t, -1, RewardWeights{}})).dump(2) << "\n";
    } else if (*ctl) {
      const CtlFormula f = parse_ctl(ctl_formula);
      const SearchTree t = tree_arg(ctl_tree);
      if (ctl_node >= static_cast<int>(t.nodes.size())) throw domain_error("no node " + std::to_string(ctl_node));
      const KripkeView k = ctl_node >= 0 ? subtree_view(t, ctl_node) : build_kripke(t);
      const auto states = check(k, f);
      std::cout << json{{"formula", print_ctl(f)}, {"holds_at_root", holds_at_root(k, f)}, {"states", states}}.dump(2) << "\n";
    } else if (*ask) {
      auto b = make_pipeline(ask_opts);
      Session s;
      s.id = "cli";
      s.tree = std::make_shared<const SearchTree>(tree_arg(ask_tree));
      const Turn t = b->pipeline->answer(ask_query, s);
      if (ask_text) std::cout << t.explanation << "\n";
      else std::cout << turn_json(t).dump(2) << "\n";
      if (t.error && t.error->code == "backend_error") return 1;
    } else if (*bench) {
      auto b = make_pipeline(bench_opts);
      const LabeledCorpus c = bench_corpus == "canonical" ? canonical_corpus() : load_labeled_corpus(bench_corpus);
      for (const auto& m : c.malformed) std::cerr << "skipping line " << m.line << ": " << m.reason << "\n";
      std::cout << report_json(evaluate_corpus(c, *b->pipeline, bench_k), bench_items).dump(2) << "\n";
    } else if (*serve) {
      ServiceConfig cfg = serve_config.empty() ? ServiceConfig{} : load_config(serve_config);
      if (!serve_host.empty()) cfg.host = serve_host;
      if (serve_port >= 0) cfg.port = serve_port;
      Service svc(cfg);
      httplib::Server server;
      svc.bind(server);
      std::cerr << "listening on " << cfg.host << ":" << cfg.port << " (backend " << to_string(cfg.backend) << ")\n";
      if (!server.listen(cfg.host, cfg.port)) throw std::runtime_error("cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
    } else if (*rec) {
      HashEmbedder embed;
      const ChunkStore store = index_corpus(load_corpus(default_data_path("corpus")), embed);
      const PromptSet prompts = load_prompts(default_data_path("prompts"));
      RuleLlm rules;
      RecordingLlm recorder(rules);
      Pipeline p(prompts, &recorder, &store, &embed);
      const std::string transcript = golden_transcript(p, golden_tree());
      evaluate_corpus(canonical_corpus(), p, 3);
      std::filesystem::create_directories(rec_dir);
      write_out(rec_dir + "/llm_golden.json", script_to_json(recorder.recorded()).dump(2) + "\n");
      write_out(rec_dir + "/transcript_golden.json", transcript);
      std::cerr << "recorded " << recorder.recorded().size() << " prompts into " << rec_dir << "\n";
    }
  } catch (const parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationExit;
  } catch (const domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationExit;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
