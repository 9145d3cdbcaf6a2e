#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "xplan/golden.hpp"
#include "xplan/service.hpp"

using namespace xplan;

namespace {

json body_of(const HttpResponse& r) { return json::parse(r.body); }

std::string error_code(const HttpResponse& r) { return body_of(r)["error"]["code"].get<std::string>(); }

class ServiceTest : public ::testing::Test {
protected:
  static Service& svc() {
    static Service s{ServiceConfig{}};
    return s;
  }

  static std::string plan_tree(int iterations = 300) {
    const auto r = svc().handle("POST", "/plan", json{{"seed", 7}, {"iterations", iterations}}.dump());
    EXPECT_EQ(r.status, 200) << r.body;
    return body_of(r)["tree_id"];
  }
};

} // namespace

TEST_F(ServiceTest, HealthScenarioSuggestions) {
  auto r = svc().handle("GET", "/health", "");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(body_of(r)["status"], "ok");

  r = svc().handle("GET", "/scenario", "");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(body_of(r)["scenario"], json(golden_scenario()));

  r = svc().handle("GET", "/suggestions", "");
  const auto s = body_of(r)["suggestions"];
  ASSERT_EQ(s.size(), 31u);
  EXPECT_EQ(s[0]["type"], 1);
  EXPECT_EQ(s[0]["text"], catalog_entry(1).text);
  EXPECT_EQ(body_of(r)["version"], 1);
}

TEST_F(ServiceTest, PlanMatchesPlannerAndTreeIsVerbatim) {
  const auto r = svc().handle("POST", "/plan", R"({"seed": 7})");
  ASSERT_EQ(r.status, 200) << r.body;
  const auto j = body_of(r);
  const SearchTree direct = golden_tree();
  EXPECT_EQ(j["request_id"], kGoldenRequest);
  EXPECT_EQ(j["tree_digest"], tree_digest(direct));
  EXPECT_EQ(j["decision"], json(direct.decision));
  EXPECT_EQ(j["nodes"], direct.nodes.size());

  const auto t = svc().handle("GET", "/tree/" + j["tree_id"].get<std::string>(), "");
  EXPECT_EQ(t.status, 200);
  EXPECT_EQ(t.body, dump_tree(direct));
}

TEST_F(ServiceTest, PlanValidation) {
  EXPECT_EQ(error_code(svc().handle("POST", "/plan", "{bad")), "invalid_json");
  EXPECT_EQ(error_code(svc().handle("POST", "/plan", "[1]")), "invalid_request");
  EXPECT_EQ(error_code(svc().handle("POST", "/plan", R"({"iterations": 0})")), "invalid_request");
  EXPECT_EQ(error_code(svc().handle("POST", "/plan", R"({"colour": 1})")), "invalid_request");
  EXPECT_EQ(error_code(svc().handle("POST", "/plan", R"({"request_id": 999})")), "no_pending_request");
  EXPECT_EQ(error_code(svc().handle("POST", "/plan", R"({"seed": "x"})")), "invalid_request");
  EXPECT_EQ(error_code(svc().handle("POST", "/plan", R"({"version": 2})")), "unsupported_version");
  const auto r = svc().handle("GET", "/plan", "");
  EXPECT_EQ(r.status, 405);
  EXPECT_EQ(error_code(r), "method_not_allowed");
  EXPECT_EQ(svc().handle("GET", "/tree/tree-999", "").status, 404);
  EXPECT_EQ(svc().handle("GET", "/nowhere", "").status, 404);
  EXPECT_EQ(error_code(svc().handle("GET", "/nowhere", "")), "not_found");
}

TEST_F(ServiceTest, EvidenceRoute) {
  const std::string id = plan_tree();
  auto r = svc().handle("POST", "/evidence", json{{"tree_id", id}, {"formula", "tp(0); td(0); car(1)"}}.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  const auto res = body_of(r)["results"];
  ASSERT_EQ(res.size(), 3u);
  EXPECT_EQ(res[0]["value"], 255.0);

  r = svc().handle("POST", "/evidence", json{{"tree_id", id}, {"formula", "tp(0"}}.dump());
  EXPECT_EQ(r.status, 400);
  const auto err = body_of(r)["error"];
  EXPECT_EQ(err["code"], "malformed_formula");
  EXPECT_TRUE(err.contains("position"));
  EXPECT_TRUE(err.contains("column"));

  EXPECT_EQ(svc().handle("POST", "/evidence", json{{"tree_id", "tree-999"}, {"formula", "tp(0)"}}.dump()).status, 404);
  EXPECT_EQ(error_code(svc().handle("POST", "/evidence", json{{"tree_id", id}}.dump())), "invalid_request");
}

TEST_F(ServiceTest, CtlRoute) {
  const std::string id = plan_tree();
  auto r = svc().handle("POST", "/ctl", json{{"tree_id", id}, {"formula", "AG !overcap"}}.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_TRUE(body_of(r)["holds_at_root"].get<bool>());

  r = svc().handle("POST", "/ctl", json{{"tree_id", id}, {"formula", "EF flying"}}.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(error_code(r), "unknown_proposition");

  r = svc().handle("POST", "/ctl", json{{"tree_id", id}, {"formula", "AG ("}}.dump());
  EXPECT_EQ(error_code(r), "malformed_formula");

  r = svc().handle("POST", "/ctl", json{{"tree_id", id}, {"formula", "true"}, {"node", 1}}.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_TRUE(body_of(r)["holds_at_root"].get<bool>());
  EXPECT_EQ(svc().handle("POST", "/ctl", json{{"tree_id", id}, {"formula", "true"}, {"node", 1 << 30}}.dump()).status, 404);
}

TEST_F(ServiceTest, SessionLifecycle) {
  auto r = svc().handle("POST", "/session", "");
  ASSERT_EQ(r.status, 201) << r.body;
  const std::string sid = body_of(r)["session_id"];

  r = svc().handle("POST", "/session/" + sid + "/query", json{{"text", catalog_entry(1).text}}.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  const auto turn = body_of(r)["turn"];
  EXPECT_EQ(turn["index"], 0);
  EXPECT_EQ(turn["formulas"], json::array({"tp(0)"}));

  r = svc().handle("POST", "/session/" + sid + "/query", json{{"text", "Why is getting dropped off early a bad thing?"}}.dump());
  ASSERT_EQ(r.status, 200);
  EXPECT_FALSE(body_of(r)["turn"]["knowledge"].empty());

  r = svc().handle("POST", "/session/" + sid + "/turns/1/rating", R"({"stars": 4})");
  EXPECT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(svc().handle("POST", "/session/" + sid + "/turns/1/rating", R"({"stars": 6})").status, 400);
  EXPECT_EQ(svc().handle("POST", "/session/" + sid + "/turns/1/rating", R"({"stars": "4"})").status, 400);
  EXPECT_EQ(error_code(svc().handle("POST", "/session/" + sid + "/turns/9/rating", R"({"stars": 4})")), "unknown_turn");

  r = svc().handle("GET", "/session/" + sid, "");
  ASSERT_EQ(r.status, 200);
  const auto t = body_of(r);
  EXPECT_EQ(t["turns"].size(), 2u);
  EXPECT_EQ(t["turns"][1]["rating"], 4);
  EXPECT_TRUE(t["turns"][0]["rating"].is_null());

  EXPECT_EQ(error_code(svc().handle("GET", "/session/session-999", "")), "unknown_session");
  EXPECT_EQ(error_code(svc().handle("POST", "/session/" + sid + "/query", "{}")), "invalid_request");
  EXPECT_EQ(error_code(svc().handle("POST", "/session", R"({"tree_id": "tree-999"})")), "unknown_tree");
}

TEST_F(ServiceTest, SessionOnExplicitTree) {
  const std::string id = plan_tree(200);
  const auto r = svc().handle("POST", "/session", json{{"tree_id", id}}.dump());
  ASSERT_EQ(r.status, 201);
  const auto tree = json::parse(svc().handle("GET", "/tree/" + id, "").body);
  EXPECT_EQ(body_of(r)["tree_digest"], tree_digest(parse_tree(tree.dump())));
}

TEST(Service, BackendFailureIs502) {
  class Down : public LlmClient {
  public:
    std::string complete(const ChatRequest&) override { throw backend_error("connection refused"); }
    std::string name() const override { return "down"; }
  };
  Service svc(ServiceConfig{}, std::make_unique<Down>());
  const std::string sid = json::parse(svc.handle("POST", "/session", "").body)["session_id"];
  const auto r = svc.handle("POST", "/session/" + sid + "/query", R"({"text": "When is pick-up?"})");
  EXPECT_EQ(r.status, 502);
  const auto e = json::parse(r.body)["error"];
  EXPECT_EQ(e["code"], "backend_error");
  EXPECT_EQ(e["turn"]["error"]["code"], "backend_error");
}

TEST(Service, MockBackendServesGoldenAnswers) {
  ServiceConfig cfg;
  cfg.backend = LlmBackend::mock;
  Service svc(cfg);
  const std::string sid = json::parse(svc.handle("POST", "/session", R"({})").body)["session_id"];
  const auto r = svc.handle("POST", "/session/" + sid + "/query", json{{"text", catalog_entry(1).text}}.dump());
  ASSERT_EQ(r.status, 200) << r.body;
  EXPECT_NE(json::parse(r.body)["turn"]["explanation"].get<std::string>().find("255"), std::string::npos);
}

TEST(Service, TreeStoreEvictsAndPersists) {
  const auto dir = std::filesystem::temp_directory_path() / ("xplan_trees_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  const SearchTree t = golden_tree();
  {
    TreeStore s(2, dir.string());
    s.put("a", t);
    s.put("b", t);
    s.put("c", t);
    EXPECT_EQ(s.size(), 2u);
    // Evicted from memory but still on disk.
    auto a = s.get("a");
    ASSERT_TRUE(a);
    EXPECT_EQ(a->text, dump_tree(t));
    EXPECT_FALSE(s.get("../a"));
  }
  TreeStore fresh(2, dir.string());
  ASSERT_TRUE(fresh.get("b"));
  EXPECT_EQ(tree_digest(*fresh.get("b")->tree), tree_digest(t));
  TreeStore memory(1, std::nullopt);
  memory.put("x", t);
  memory.put("y", t);
  EXPECT_FALSE(memory.get("x"));
  std::filesystem::remove_all(dir);
}

TEST(Config, StrictKeysAndPaths) {
  const auto c = parse_config(json::parse(R"({"listen": {"port": 9000}, "rag": {"k": 5, "corpus": "kb"},
                                             "llm": {"backend": "mock", "fixtures": "f.json"}})"),
                              "/etc/xplan");
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.top_k, 5);
  EXPECT_EQ(c.corpus, "/etc/xplan/kb");
  EXPECT_EQ(c.fixtures, "/etc/xplan/f.json");
  EXPECT_EQ(c.backend, LlmBackend::mock);
  EXPECT_THROW(parse_config(json::parse(R"({"lsten": {}})")), domain_error);
  EXPECT_THROW(parse_config(json::parse(R"({"rag": {"topk": 3}})")), domain_error);
  EXPECT_THROW(parse_config(json::parse(R"({"rag": {"k": 0}})")), domain_error);
  EXPECT_THROW(parse_config(json::parse(R"({"llm": {"backend": "gpt"}})")), domain_error);
  EXPECT_THROW(parse_config(json::parse(R"({"listen": {"port": 70000}})")), domain_error);
  EXPECT_THROW(parse_config(json::parse(R"({"version": 3})")), domain_error);
  EXPECT_THROW(parse_config(json::parse(R"({"llm": {"remote": {"timeout_ms": 0}}})")), domain_error);
  EXPECT_THROW(load_config("/nonexistent/xplan.json"), domain_error);
}

TEST(Config, RemoteKeyComesFromEnvironment) {
  RemoteConfig r{"http://127.0.0.1:9", "m"};
  r.api_key_env = "XPLAN_TEST_UNSET_KEY";
  r.timeout_ms = 200;
  RemoteLlm llm(r);
  ChatRequest req;
  req.messages.push_back({"user", "hi"});
  EXPECT_THROW(llm.complete(req), backend_error);
}

TEST(Service, LiveHttpServer) {
  Service svc{ServiceConfig{}};
  httplib::Server server;
  svc.bind(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto h = cli.Get("/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);

  auto p = cli.Post("/plan", R"({"seed": 7, "iterations": 200})", "application/json");
  ASSERT_TRUE(p);
  ASSERT_EQ(p->status, 200);
  const std::string id = json::parse(p->body)["tree_id"];
  auto t = cli.Get(("/tree/" + id).c_str());
  ASSERT_TRUE(t);
  EXPECT_EQ(t->status, 200);
  EXPECT_EQ(t->get_header_value("Content-Type"), "application/json");

  auto s = cli.Post("/session", json{{"tree_id", id}}.dump(), "application/json");
  ASSERT_TRUE(s);
  EXPECT_EQ(s->status, 201);
  const std::string sid = json::parse(s->body)["session_id"];
  auto q = cli.Post(("/session/" + sid + "/query").c_str(), json{{"text", catalog_entry(2).text}}.dump(), "application/json");
  ASSERT_TRUE(q);
  EXPECT_EQ(q->status, 200);
  EXPECT_EQ(json::parse(q->body)["turn"]["formulas"], json::array({"td(0)"}));

  auto bad = cli.Post("/evidence", "{", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);

  server.stop();
  th.join();
}

TEST(Config, BundledExampleLoads) {
  const ServiceConfig c = load_config(std::string(XPLAN_DATA_DIR) + "/service.example.json");
  EXPECT_EQ(c.backend, LlmBackend::mock);
  EXPECT_TRUE(std::filesystem::exists(c.fixtures));
  EXPECT_TRUE(std::filesystem::is_directory(c.corpus));
  EXPECT_TRUE(std::filesystem::exists(c.scenario));
  EXPECT_EQ(c.llm_remote.api_key_env, "XPLAN_API_KEY");
}

TEST(Remote, OpenAiCompatibleStub) {
  httplib::Server stub;
  std::string seen_auth;
  json seen_body;
  stub.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = json::parse(req.body);
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "category=post_hoc type=1"}}}}}}}.dump(),
                    "application/json");
  });
  stub.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"data", {{{"embedding", {0.6, 0.8}}}}}}.dump(), "application/json");
  });
  stub.Post("/broken/chat", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = stub.bind_to_any_port("127.0.0.1");
  std::thread th([&] { stub.listen_after_bind(); });
  stub.wait_until_ready();

  ::setenv("XPLAN_TEST_KEY", "sk-test", 1);
  RemoteConfig cfg{"http://127.0.0.1:" + std::to_string(port), "test-model"};
  cfg.api_key_env = "XPLAN_TEST_KEY";
  RemoteLlm llm(cfg);
  ChatRequest req;
  req.system = "sys";
  req.messages.push_back({"user", "hello"});
  EXPECT_EQ(llm.complete(req), "category=post_hoc type=1");
  EXPECT_EQ(seen_auth, "Bearer sk-test");
  EXPECT_EQ(seen_body["model"], "test-model");
  EXPECT_EQ(seen_body["messages"].size(), 2u);
  EXPECT_EQ(seen_body["messages"][0]["role"], "system");

  RemoteEmbedder emb(cfg);
  EXPECT_EQ(emb.embed("x"), (Vector{0.6, 0.8}));

  cfg.chat_path = "/broken/chat";
  RemoteLlm broken(cfg);
  EXPECT_THROW(broken.complete(req), backend_error);
  ::unsetenv("XPLAN_TEST_KEY");
  stub.stop();
  th.join();
}

TEST(Service, PersistedTreesSurviveRestart) {
  const auto dir = std::filesystem::temp_directory_path() / ("xplan_restart_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  ServiceConfig cfg;
  cfg.tree_dir = dir.string();
  std::string first, body;
  {
    Service a(cfg);
    first = json::parse(a.handle("POST", "/plan", R"({"iterations": 50})").body)["tree_id"];
    body = a.handle("GET", "/tree/" + first, "").body;
  }
  Service b(cfg);
  const auto again = b.handle("GET", "/tree/" + first, "");
  EXPECT_EQ(again.status, 200);
  EXPECT_EQ(again.body, body);
  const std::string second = json::parse(b.handle("POST", "/plan", R"({"iterations": 60})").body)["tree_id"];
  EXPECT_NE(second, first);
  EXPECT_EQ(b.handle("GET", "/tree/" + first, "").body, body);
  std::filesystem::remove_all(dir);
}
