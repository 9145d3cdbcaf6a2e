#pragma once

// HTTP API over one scenario. handle() is transport-free so it can be tested
// directly; bind() mounts it on an httplib server.

#include <atomic>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <httplib.h>

#include "xplan/config.hpp"
#include "xplan/ctl.hpp"
#include "xplan/pipeline.hpp"
#include "xplan/transit_io.hpp"

namespace xplan {

inline constexpr int kApiVersion = 1;

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Bounded least-recently-used tree cache keeping the planner's own
/// serialization so GET /tree returns it byte for byte.
class TreeStore {
public:
  struct Entry {
    std::shared_ptr<const SearchTree> tree;
    std::string text;
  };

  TreeStore(std::size_t capacity, std::optional<std::string> dir) : capacity_(capacity), dir_(std::move(dir)) {
    if (dir_) std::filesystem::create_directories(*dir_);
  }

  void put(const std::string& id, SearchTree tree) {
    Entry e{std::make_shared<const SearchTree>(std::move(tree)), {}};
    e.text = dump_tree(*e.tree);
    if (dir_) std::ofstream(std::filesystem::path(*dir_) / (id + ".json"), std::ios::binary) << e.text;
    std::lock_guard lock(mu_);
    insert(id, std::move(e));
  }

  std::optional<Entry> get(const std::string& id) {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(id); it != index_.end()) {
      order_.splice(order_.begin(), order_, it->second);
      return it->second->second;
    }
    if (!dir_ || id.find_first_of("/\\.") != std::string::npos) return std::nullopt;
    const auto path = std::filesystem::path(*dir_) / (id + ".json");
    if (!std::filesystem::exists(path)) return std::nullopt;
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    Entry e{std::make_shared<const SearchTree>(parse_tree(ss.str())), ss.str()};
    insert(id, e);
    return e;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return order_.size();
  }

private:
  void insert(const std::string& id, Entry e) {
    if (auto it = index_.find(id); it != index_.end()) order_.erase(it->second);
    order_.emplace_front(id, std::move(e));
    index_[id] = order_.begin();
    while (order_.size() > capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
  }

  std::size_t capacity_;
  std::optional<std::string> dir_;
  std::list<std::pair<std::string, Entry>> order_;
  std::map<std::string, std::list<std::pair<std::string, Entry>>::iterator> index_;
  mutable std::mutex mu_;
};

inline std::unique_ptr<LlmClient> make_llm(const ServiceConfig& c) {
  switch (c.backend) {
  case LlmBackend::fallback: return nullptr;
  case LlmBackend::mock: return load_scripted(c.fixtures);
  case LlmBackend::remote: return std::make_unique<RemoteLlm>(c.llm_remote);
  }
  return nullptr;
}

inline std::unique_ptr<Embedder> make_embedder(const ServiceConfig& c) {
  if (c.embedder == "remote") return std::make_unique<RemoteEmbedder>(c.embed_remote);
  return std::make_unique<HashEmbedder>();
}

class Service {
public:
  explicit Service(ServiceConfig cfg) : Service(cfg, make_llm(cfg)) {}

  Service(ServiceConfig cfg, std::unique_ptr<LlmClient> llm)
      : cfg_(std::move(cfg)), llm_(std::move(llm)), embedder_(make_embedder(cfg_)),
        store_(index_corpus(load_corpus(cfg_.corpus), *embedder_)), scenario_(load_scenario(cfg_.scenario)),
        trees_(static_cast<std::size_t>(cfg_.tree_cache), cfg_.tree_dir),
        pipeline_(load_prompts(cfg_.prompts), llm_.get(), &store_, embedder_.get(), pipeline_config(cfg_)) {
    // Continue numbering after trees persisted by an earlier run.
    if (cfg_.tree_dir)
      for (const auto& f : std::filesystem::directory_iterator(*cfg_.tree_dir)) {
        const std::string stem = f.path().stem().string();
        if (stem.rfind("tree-", 0) == 0 && stem.size() > 5 && stem.find_first_not_of("0123456789", 5) == std::string::npos)
          tree_counter_ = std::max(tree_counter_, std::stoi(stem.substr(5)));
      }
  }

  const ServiceConfig& config() const { return cfg_; }
  const WorldState& scenario() const { return scenario_; }

  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body) {
    try {
      return route(method, split(path), body);
    } catch (const http_error& e) {
      return e.response;
    } catch (const backend_error& e) {
      return error(502, "backend_error", e.what());
    } catch (const json::exception& e) {
      return error(400, "invalid_request", e.what());
    } catch (const domain_error& e) {
      return error(400, "invalid_request", e.what());
    } catch (const std::exception& e) {
      return error(500, "internal_error", e.what());
    }
  }

  void bind(httplib::Server& server) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
      const HttpResponse r = handle(req.method, req.path, req.body);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server.Get(".*", forward);
    server.Post(".*", forward);
  }

private:
  struct http_error : std::exception {
    HttpResponse response;
    explicit http_error(HttpResponse r) : response(std::move(r)) {}
  };

  static PipelineConfig pipeline_config(const ServiceConfig& c) {
    PipelineConfig p;
    p.top_k = c.top_k;
    p.threshold = c.threshold;
    p.temperature = c.temperature;
    p.weights = c.weights;
    return p;
  }

  static std::vector<std::string> split(const std::string& path) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : path) {
      if (ch == '/') {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
  }

  static HttpResponse ok(json j, int status = 200) {
    j["version"] = kApiVersion;
    return {status, j.dump(), "application/json"};
  }

  static HttpResponse error(int status, const std::string& code, const std::string& message, json extra = json::object()) {
    extra["code"] = code;
    extra["message"] = message;
    return {status, json{{"version", kApiVersion}, {"error", extra}}.dump(), "application/json"};
  }

  [[noreturn]] static void fail(int status, const std::string& code, const std::string& message, json extra = json::object()) {
    throw http_error(error(status, code, message, std::move(extra)));
  }

  static json parse_body(const std::string& body) {
    if (body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
    try {
      json j = json::parse(body);
      if (!j.is_object()) fail(400, "invalid_request", "request body must be a JSON object");
      if (j.contains("version") && j["version"] != kApiVersion) fail(400, "unsupported_version", "unsupported payload version");
      return j;
    } catch (const json::parse_error& e) {
      fail(400, "invalid_json", e.what());
    }
  }

  static void require_method(const std::string& got, const char* want) {
    if (got != want) fail(405, "method_not_allowed", std::string("use ") + want);
  }

  TreeStore::Entry tree_or_404(const json& body) {
    if (!body.contains("tree_id")) fail(400, "invalid_request", "missing tree_id");
    return tree_or_404(body["tree_id"].get<std::string>());
  }

  TreeStore::Entry tree_or_404(const std::string& id) {
    auto e = trees_.get(id);
    if (!e) fail(404, "unknown_tree", "no tree '" + id + "'");
    return *e;
  }

  std::shared_ptr<Session> session_or_404(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(404, "unknown_session", "no session '" + id + "'");
    return it->second;
  }

  HttpResponse route(const std::string& method, const std::vector<std::string>& p, const std::string& raw) {
    const std::size_t n = p.size();
    if (n == 1 && p[0] == "health") return ok({{"status", "ok"}});
    if (n == 1 && p[0] == "scenario") {
      require_method(method, "GET");
      return ok({{"scenario", json(scenario_)}});
    }
    if (n == 1 && p[0] == "suggestions") {
      require_method(method, "GET");
      json s = json::array();
      for (const auto& e : query_catalog())
        s.push_back({{"type", e.id}, {"category", std::string(to_string(e.category))}, {"text", e.text}});
      return ok({{"suggestions", s}});
    }
    if (n == 1 && p[0] == "plan") {
      require_method(method, "POST");
      return post_plan(parse_body(raw));
    }
    if (n == 2 && p[0] == "tree") {
      require_method(method, "GET");
      return {200, tree_or_404(p[1]).text, "application/json"};
    }
    if (n == 1 && p[0] == "evidence") {
      require_method(method, "POST");
      return post_evidence(parse_body(raw));
    }
    if (n == 1 && p[0] == "ctl") {
      require_method(method, "POST");
      return post_ctl(parse_body(raw));
    }
    if (n >= 1 && p[0] == "session") {
      if (n == 1) {
        require_method(method, "POST");
        return post_session(parse_body(raw));
      }
      auto s = session_or_404(p[1]);
      if (n == 2) {
        require_method(method, "GET");
        std::lock_guard lock(s->mu);
        return ok(session_json(*s));
      }
      if (n == 3 && p[2] == "query") {
        require_method(method, "POST");
        return post_query(*s, parse_body(raw));
      }
      if (n == 5 && p[2] == "turns" && p[4] == "rating") {
        require_method(method, "POST");
        return post_rating(*s, p[3], parse_body(raw));
      }
    }
    fail(404, "not_found", "no route " + method + " /" + [&] {
      std::string out;
      for (const auto& x : p) out += (out.empty() ? "" : "/") + x;
      return out;
    }());
  }

  std::optional<TripRequest> pending_request(std::optional<int> id) const {
    for (const auto& r : scenario_.requests)
      if (r.status == RequestStatus::pending && (!id || r.id == *id)) return r;
    return std::nullopt;
  }

  std::string plan_tree(const json& body) {
    const std::optional<int> rid = body.contains("request_id") ? std::optional<int>(body["request_id"].get<int>()) : std::nullopt;
    auto req = pending_request(rid);
    if (!req) fail(400, "no_pending_request", rid ? "request " + std::to_string(*rid) + " is not pending" : "the scenario has no pending request");
    MctsConfig cfg = cfg_.mcts;
    if (body.contains("seed")) cfg.seed = body["seed"].get<std::uint64_t>();
    if (body.contains("iterations")) cfg.iterations = body["iterations"].get<int>();
    if (cfg.iterations < 1) fail(400, "invalid_request", "iterations must be >= 1");
    std::lock_guard lock(plan_mu_);
    PlanResult r = plan(scenario_, *req, cfg, cfg_.weights);
    const std::string id = "tree-" + std::to_string(++tree_counter_);
    trees_.put(id, std::move(r.tree));
    std::lock_guard last(mu_);
    last_tree_ = id;
    return id;
  }

  HttpResponse post_plan(const json& body) {
    for (const auto& [k, _] : body.items())
      if (k != "version" && k != "seed" && k != "iterations" && k != "request_id") fail(400, "invalid_request", "unknown key '" + k + "'");
    const std::string id = plan_tree(body);
    const auto e = tree_or_404(id);
    json decision = e.tree->decision;
    return ok({{"tree_id", id}, {"request_id", e.tree->request_id}, {"decision", decision}, {"tree_digest", tree_digest(*e.tree)},
               {"nodes", e.tree->nodes.size()}});
  }

  HttpResponse post_evidence(const json& body) {
    const auto e = tree_or_404(body);
    if (!body.contains("formula")) fail(400, "invalid_request", "missing formula");
    FormulaList f;
    try {
      f = parse_formula(body["formula"].get<std::string>());
    } catch (const parse_error& pe) {
      fail(400, "malformed_formula", pe.what(), {{"position", pe.position()}, {"column", pe.column()}});
    }
    const auto rs = score_all(f, EvidenceQueryContext{e.tree.get(), -1, cfg_.weights});
    return ok({{"tree_id", body["tree_id"]}, {"results", evidence_list_json(rs)}});
  }

  HttpResponse post_ctl(const json& body) {
    const auto e = tree_or_404(body);
    if (!body.contains("formula")) fail(400, "invalid_request", "missing formula");
    CtlFormula f;
    try {
      f = parse_ctl(body["formula"].get<std::string>());
    } catch (const parse_error& pe) {
      fail(400, "malformed_formula", pe.what(), {{"position", pe.position()}, {"column", pe.column()}});
    }
    KripkeView k = build_kripke(*e.tree);
    if (body.contains("node")) {
      const int node = body["node"].get<int>();
      if (node < 0 || node >= static_cast<int>(e.tree->nodes.size())) fail(404, "unknown_node", "no node " + std::to_string(node));
      k = subtree_view(*e.tree, node);
    }
    std::vector<int> states;
    try {
      states = check(k, f);
    } catch (const domain_error& de) {
      fail(400, "unknown_proposition", de.what());
    }
    const bool at_root = std::binary_search(states.begin(), states.end(), k.root);
    return ok({{"tree_id", body["tree_id"]}, {"formula", print_ctl(f)}, {"states", states}, {"holds_at_root", at_root}});
  }

  HttpResponse post_session(const json& body) {
    std::shared_ptr<const SearchTree> tree;
    if (body.contains("tree_id")) {
      tree = tree_or_404(body).tree;
    } else {
      std::string id;
      {
        std::lock_guard lock(mu_);
        id = last_tree_;
      }
      if (id.empty() || !trees_.get(id)) id = plan_tree(json::object());
      tree = tree_or_404(id).tree;
    }
    auto s = std::make_shared<Session>();
    s->tree = tree;
    {
      std::lock_guard lock(mu_);
      s->id = "session-" + std::to_string(++session_counter_);
      sessions_[s->id] = s;
    }
    return ok({{"session_id", s->id}, {"tree_digest", tree_digest(*tree)}}, 201);
  }

  HttpResponse post_query(Session& s, const json& body) {
    if (!body.contains("text") || !body["text"].is_string()) fail(400, "invalid_request", "missing text");
    const Turn t = pipeline_.answer(body["text"].get<std::string>(), s);
    json j = turn_json(t);
    if (t.error && t.error->code == "backend_error")
      return error(502, "backend_error", t.error->message, {{"turn", j}});
    return ok({{"session_id", s.id}, {"turn", j}});
  }

  HttpResponse post_rating(Session& s, const std::string& turn, const json& body) {
    if (!body.contains("stars") || !body["stars"].is_number_integer()) fail(400, "invalid_request", "missing integer stars");
    const int stars = body["stars"].get<int>();
    if (stars < 1 || stars > 5) fail(400, "invalid_request", "stars must be 1 to 5");
    std::lock_guard lock(s.mu);
    std::size_t idx = 0;
    try {
      idx = std::stoul(turn);
    } catch (const std::exception&) {
      fail(404, "unknown_turn", "no turn '" + turn + "'");
    }
    if (idx >= s.turns.size()) fail(404, "unknown_turn", "no turn " + turn);
    s.turns[idx].rating = stars;
    return ok({{"session_id", s.id}, {"turn", idx}, {"rating", stars}});
  }

  ServiceConfig cfg_;
  std::unique_ptr<LlmClient> llm_;
  std::unique_ptr<Embedder> embedder_;
  ChunkStore store_;
  WorldState scenario_;
  TreeStore trees_;
  Pipeline pipeline_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::string last_tree_;
  int tree_counter_ = 0;
  int session_counter_ = 0;
  std::mutex mu_;
  std::mutex plan_mu_;
};

} // namespace xplan
