#pragma once

// Chat-completion clients. The pipeline only sees LlmClient; replay and
// recording clients make runs reproducible without a network.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xplan/catalog.hpp"
#include "xplan/common.hpp"

namespace xplan {

/// Failure of a completion or embedding backend (unreachable, timeout,
/// unexpected payload, or a replay miss).
class backend_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ChatMessage {
  std::string role; // user or assistant
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string system;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

inline nlohmann::json chat_request_json(const ChatRequest& r) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : r.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"system", r.system}, {"messages", msgs}, {"temperature", r.temperature}};
}

inline std::string prompt_digest(const ChatRequest& r) { return hex64(fnv1a(chat_request_json(r).dump())); }

class LlmClient {
public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

/// Replays recorded completions keyed by prompt digest. A digest may hold a
/// sequence; successive calls walk it and then repeat the last entry.
class ScriptedLlm : public LlmClient {
public:
  ScriptedLlm() = default;
  explicit ScriptedLlm(std::map<std::string, std::vector<std::string>> script) : script_(std::move(script)) {}

  void add(const std::string& digest, std::string completion) { script_[digest].push_back(std::move(completion)); }
  void add(const ChatRequest& r, std::string completion) { add(prompt_digest(r), std::move(completion)); }

  std::string complete(const ChatRequest& request) override {
    const std::string d = prompt_digest(request);
    std::lock_guard lock(mu_);
    auto it = script_.find(d);
    if (it == script_.end() || it->second.empty()) throw backend_error("no recorded completion for prompt " + d);
    std::size_t& k = calls_[d];
    const std::string& out = it->second[std::min(k, it->second.size() - 1)];
    ++k;
    return out;
  }

  std::string name() const override { return "mock"; }
  const std::map<std::string, std::vector<std::string>>& script() const { return script_; }

private:
  std::map<std::string, std::vector<std::string>> script_;
  std::map<std::string, std::size_t> calls_;
  std::mutex mu_;
};

inline constexpr int kFixtureVersion = 1;

inline nlohmann::json script_to_json(const std::map<std::string, std::vector<std::string>>& s) {
  return {{"version", kFixtureVersion}, {"completions", s}};
}

inline std::unique_ptr<ScriptedLlm> load_scripted(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw domain_error("cannot open fixture " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("version", 0) != kFixtureVersion) throw domain_error("fixture " + path.string() + ": unsupported version");
  return std::make_unique<ScriptedLlm>(j.at("completions").get<std::map<std::string, std::vector<std::string>>>());
}

/// Forwards to another client and keeps every completion by digest.
class RecordingLlm : public LlmClient {
public:
  explicit RecordingLlm(LlmClient& inner) : inner_(inner) {}

  std::string complete(const ChatRequest& request) override {
    std::string out = inner_.complete(request);
    std::lock_guard lock(mu_);
    auto& seq = recorded_[prompt_digest(request)];
    if (seq.empty() || seq.back() != out) seq.push_back(out);
    return out;
  }

  std::string name() const override { return inner_.name(); }
  const std::map<std::string, std::vector<std::string>>& recorded() const { return recorded_; }

private:
  LlmClient& inner_;
  std::map<std::string, std::vector<std::string>> recorded_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Prompt templates

struct PromptTemplate {
  int version = 0;
  std::string system;
  std::string user;
};

/// Template text: a "version: N" line, the system part, a "---" line, then
/// the user part. Placeholders are {{name}}.
inline PromptTemplate parse_prompt_template(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  PromptTemplate t;
  if (!std::getline(in, line) || line.rfind("version:", 0) != 0) throw domain_error("prompt template lacks a version line");
  t.version = std::stoi(line.substr(8));
  bool user = false;
  std::string* cur = &t.system;
  while (std::getline(in, line)) {
    if (!user && line == "---") {
      user = true;
      cur = &t.user;
      continue;
    }
    if (!cur->empty()) *cur += '\n';
    *cur += line;
  }
  if (!user) throw domain_error("prompt template lacks the --- separator");
  return t;
}

inline std::string fill_template(std::string text, const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) {
    const std::string key = "{{" + k + "}}";
    for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + v.size()))
      text.replace(pos, key.size(), v);
  }
  return text;
}

struct PromptSet {
  PromptTemplate classify, logic, explain, explain_background;
};

inline PromptSet load_prompts(const std::filesystem::path& dir) {
  auto read = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw domain_error("missing prompt template " + (dir / name).string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_prompt_template(ss.str());
  };
  return {read("classify.txt"), read("logic.txt"), read("explain.txt"), read("explain_background.txt")};
}

// ---------------------------------------------------------------------------
// Rule responder: answers the three prompt tasks from their structured
// lines. Used to record fixtures and as an offline stand-in for a model.

class RuleLlm : public LlmClient {
public:
  std::string complete(const ChatRequest& request) override {
    if (request.messages.empty()) throw backend_error("empty conversation");
    const std::string& p = request.messages.back().content;
    const std::string task = field(p, "Task");
    if (task == "classify") {
      const Classification c = classify_keywords(field(p, "Query"));
      return "category=" + std::string(to_string(c.category)) + " type=" + (c.type_id ? std::to_string(*c.type_id) : "none");
    }
    if (task == "logic") {
      const CatalogEntry& e = catalog_entry(std::stoi(field(p, "Type")));
      const std::string q = field(p, "Query");
      const std::string dv = field(p, "Decision vehicle");
      std::optional<int> fallback;
      if (!dv.empty() && dv != "none") fallback = std::stoi(dv);
      return instantiate(e, extract_vehicles(q), extract_passengers(q), fallback);
    }
    if (task == "explain") {
      const auto at = p.find("\nDraft:\n");
      if (at == std::string::npos) throw backend_error("explain prompt without a draft");
      return p.substr(at + 8);
    }
    throw backend_error("unrecognized prompt task '" + task + "'");
  }

  std::string name() const override { return "rules"; }

private:
  static std::string field(const std::string& prompt, const std::string& key) {
    const std::string tag = key + ": ";
    std::size_t pos = 0;
    while ((pos = prompt.find(tag, pos)) != std::string::npos) {
      if (pos == 0 || prompt[pos - 1] == '\n') {
        const auto end = prompt.find('\n', pos);
        return prompt.substr(pos + tag.size(), end == std::string::npos ? std::string::npos : end - pos - tag.size());
      }
      ++pos;
    }
    return {};
  }
};

} // namespace xplan
