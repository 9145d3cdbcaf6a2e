#pragma once

// Service configuration. Every section is optional; unknown keys anywhere
// are rejected. Relative paths resolve against the config file's directory.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "xplan/remote.hpp"
#include "xplan/tree_io.hpp"

namespace xplan {

enum class LlmBackend { fallback, mock, remote };

inline std::string_view to_string(LlmBackend b) {
  switch (b) {
  case LlmBackend::fallback: return "fallback";
  case LlmBackend::mock: return "mock";
  case LlmBackend::remote: return "remote";
  }
  return "fallback";
}

inline LlmBackend parse_backend(std::string_view s) {
  if (s == "fallback") return LlmBackend::fallback;
  if (s == "mock") return LlmBackend::mock;
  if (s == "remote") return LlmBackend::remote;
  throw domain_error("unknown llm backend '" + std::string(s) + "' (expected fallback, mock or remote)");
}

inline std::string default_data_path(const char* rel) {
#ifdef XPLAN_DATA_DIR
  return std::string(XPLAN_DATA_DIR) + "/" + rel;
#else
  return std::string("data/") + rel;
#endif
}

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  RewardWeights weights;
  MctsConfig mcts;
  // knowledge retrieval
  int top_k = kDefaultTopK;
  double threshold = kDefaultThreshold;
  std::string corpus = default_data_path("corpus");
  std::string embedder = "hash"; // hash or remote
  RemoteConfig embed_remote{"", "text-embedding-3-small"};
  // language model
  LlmBackend backend = LlmBackend::fallback;
  std::string fixtures = default_data_path("fixtures/llm_golden.json");
  RemoteConfig llm_remote{"", "gpt-4o"};
  double temperature = 0.0;
  std::string prompts = default_data_path("prompts");
  // state
  std::string scenario = default_data_path("scenarios/golden.json");
  int tree_cache = 64;
  std::optional<std::string> tree_dir;
};

namespace detail {

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? p : (base / path).lexically_normal().string();
}

inline void read_remote(const json& j, RemoteConfig& r, std::string_view where) {
  require_known_keys(j, {"endpoint", "model", "api_key_env", "timeout_ms"}, where);
  r.endpoint = j.value("endpoint", r.endpoint);
  r.model = j.value("model", r.model);
  r.api_key_env = j.value("api_key_env", r.api_key_env);
  r.timeout_ms = j.value("timeout_ms", r.timeout_ms);
  if (r.timeout_ms < 1) throw domain_error(std::string(where) + ".timeout_ms must be positive");
}

} // namespace detail

inline ServiceConfig parse_config(const json& j, const std::filesystem::path& base = {}) {
  require_known_keys(j, {"version", "listen", "reward", "mcts", "rag", "llm", "scenario", "tree_cache", "tree_dir"},
                     "config");
  if (j.value("version", 1) != 1) throw domain_error("config: unsupported version");
  ServiceConfig c;
  if (j.contains("listen")) {
    const json& l = j["listen"];
    require_known_keys(l, {"host", "port"}, "listen");
    c.host = l.value("host", c.host);
    c.port = l.value("port", c.port);
    if (c.port < 0 || c.port > 65535) throw domain_error("listen.port out of range");
  }
  if (j.contains("reward")) c.weights = j["reward"].get<RewardWeights>();
  if (j.contains("mcts")) c.mcts = j["mcts"].get<MctsConfig>();
  if (j.contains("rag")) {
    const json& r = j["rag"];
    require_known_keys(r, {"k", "threshold", "corpus", "embedder", "remote"}, "rag");
    c.top_k = r.value("k", c.top_k);
    c.threshold = r.value("threshold", c.threshold);
    if (r.contains("corpus")) c.corpus = detail::resolve(base, r["corpus"].get<std::string>());
    c.embedder = r.value("embedder", c.embedder);
    if (c.embedder != "hash" && c.embedder != "remote") throw domain_error("rag.embedder must be hash or remote");
    if (r.contains("remote")) detail::read_remote(r["remote"], c.embed_remote, "rag.remote");
    if (c.top_k < 1) throw domain_error("rag.k must be >= 1");
    if (c.threshold < -1.0 || c.threshold > 1.0) throw domain_error("rag.threshold must lie in [-1, 1]");
  }
  if (j.contains("llm")) {
    const json& l = j["llm"];
    require_known_keys(l, {"backend", "fixtures", "remote", "temperature", "prompts"}, "llm");
    if (l.contains("backend")) c.backend = parse_backend(l["backend"].get<std::string>());
    if (l.contains("fixtures")) c.fixtures = detail::resolve(base, l["fixtures"].get<std::string>());
    if (l.contains("prompts")) c.prompts = detail::resolve(base, l["prompts"].get<std::string>());
    if (l.contains("remote")) detail::read_remote(l["remote"], c.llm_remote, "llm.remote");
    c.temperature = l.value("temperature", c.temperature);
  }
  if (j.contains("scenario")) c.scenario = detail::resolve(base, j["scenario"].get<std::string>());
  c.tree_cache = j.value("tree_cache", c.tree_cache);
  if (c.tree_cache < 1) throw domain_error("tree_cache must be >= 1");
  if (j.contains("tree_dir")) c.tree_dir = detail::resolve(base, j["tree_dir"].get<std::string>());
  return c;
}

inline ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw domain_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw domain_error("config " + path.string() + ": " + e.what());
  }
  try {
    return parse_config(j, path.parent_path());
  } catch (const json::exception& e) {
    throw domain_error("config " + path.string() + ": " + e.what());
  }
}

} // namespace xplan
