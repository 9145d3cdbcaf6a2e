#pragma once

// OpenAI-compatible HTTP backends for chat completion and embeddings.
// Credentials are read from an environment variable named in configuration.

#include <chrono>
#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "xplan/llm.hpp"
#include "xplan/rag.hpp"

namespace xplan {

struct RemoteConfig {
  std::string endpoint;                  // scheme://host[:port]
  std::string model;
  std::string api_key_env = "XPLAN_API_KEY";
  std::string chat_path = "/v1/chat/completions";
  std::string embed_path = "/v1/embeddings";
  int timeout_ms = 30000;
};

namespace detail {

inline nlohmann::json post_json(const RemoteConfig& cfg, const std::string& path, const nlohmann::json& body) {
  if (cfg.endpoint.empty()) throw backend_error("remote backend: no endpoint configured");
  httplib::Client cli(cfg.endpoint);
  const auto t = std::chrono::milliseconds(cfg.timeout_ms);
  cli.set_connection_timeout(t);
  cli.set_read_timeout(t);
  cli.set_write_timeout(t);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) throw backend_error("remote backend: " + httplib::to_string(res.error()) + " (" + cfg.endpoint + path + ")");
  if (res->status != 200)
    throw backend_error("remote backend: HTTP " + std::to_string(res->status) + " from " + cfg.endpoint + path);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw backend_error(std::string("remote backend: unreadable response: ") + e.what());
  }
}

} // namespace detail

class RemoteLlm : public LlmClient {
public:
  explicit RemoteLlm(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

  std::string complete(const ChatRequest& request) override {
    nlohmann::json msgs = nlohmann::json::array();
    msgs.push_back({{"role", "system"}, {"content", request.system}});
    for (const auto& m : request.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    const auto j = detail::post_json(cfg_, cfg_.chat_path,
                                     {{"model", cfg_.model}, {"messages", msgs}, {"temperature", request.temperature}});
    try {
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw backend_error("remote backend: completion without choices[0].message.content");
    }
  }

  std::string name() const override { return "remote:" + cfg_.model; }

private:
  RemoteConfig cfg_;
};

class RemoteEmbedder : public Embedder {
public:
  explicit RemoteEmbedder(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

  Vector embed(std::string_view text) const override {
    const auto j = detail::post_json(cfg_, cfg_.embed_path, {{"model", cfg_.model}, {"input", std::string(text)}});
    try {
      return j.at("data").at(0).at("embedding").get<Vector>();
    } catch (const nlohmann::json::exception&) {
      throw backend_error("remote backend: embedding response without data[0].embedding");
    }
  }

  std::string name() const override { return "remote:" + cfg_.model; }

private:
  RemoteConfig cfg_;
};

} // namespace xplan
