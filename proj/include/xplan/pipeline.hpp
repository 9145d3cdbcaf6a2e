#pragma once

// Query handling: classify, compile to formulas, score or retrieve, explain.
// Without an LLM client every step uses the rule-based path, which is also
// what the replay fixtures were recorded from.

#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "xplan/catalog.hpp"
#include "xplan/evidence.hpp"
#include "xplan/llm.hpp"
#include "xplan/rag.hpp"

namespace xplan {

/// Pipeline failure with a machine-readable code; `raw` keeps whatever the
/// backend returned before giving up.
class pipeline_error : public domain_error {
public:
  pipeline_error(std::string code, const std::string& what, std::vector<std::string> raw = {})
      : domain_error(what), code_(std::move(code)), raw_(std::move(raw)) {}
  const std::string& code() const { return code_; }
  const std::vector<std::string>& raw() const { return raw_; }

private:
  std::string code_;
  std::vector<std::string> raw_;
};

struct PipelineConfig {
  int attempts = 3;
  int history_turns = 8;
  int top_k = kDefaultTopK;
  double threshold = kDefaultThreshold;
  double temperature = 0.0;
  RewardWeights weights;
};

struct KnowledgeHit {
  int chunk_id = 0;
  std::string section;
  double relatedness = 0.0;
  std::string text;
};

struct TurnError {
  std::string code;
  std::string message;
};

struct Turn {
  int index = 0;
  std::string query;
  std::optional<Classification> classification;
  std::vector<std::string> formulas;
  std::vector<EvidenceResult> evidence;
  std::vector<KnowledgeHit> knowledge;
  std::string explanation;
  std::optional<TurnError> error;
  std::optional<int> rating;
};

struct Session {
  std::string id;
  std::shared_ptr<const SearchTree> tree;
  std::vector<Turn> turns;
  std::mutex mu; // serializes turns of one session
};

// ---------------------------------------------------------------------------
// Draft explanations

inline std::string format_number(double x) {
  if (x == static_cast<double>(static_cast<long long>(x))) return std::to_string(static_cast<long long>(x));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s == "-0" ? "0" : s;
}

namespace detail {

inline std::string stop_word(const Term& t) { return t.name == "tp" ? "pick-up" : "drop-off"; }

inline std::string percent(double r) { return format_number(100.0 * r) + "%"; }

inline std::string vehicle_text(std::optional<int> v) { return v ? "vehicle " + std::to_string(*v) : "rejecting the request"; }

inline std::string describe_whatif(const Term& t, const WhatIfOutcome& w) {
  const std::string arg = std::to_string(w.argument);
  std::string choice = w.vehicle ? "vehicle " + std::to_string(*w.vehicle) : "no vehicle (the request is rejected)";
  std::string value = w.value ? " with an average reward of " + format_number(*w.value) : "";
  if (t.name == "search") {
    if (w.violation) return "Vehicle " + arg + " cannot take the request: " + *w.violation + ".";
    return "When the search is restricted to vehicle " + arg + ", the plan uses " + choice + value + ".";
  }
  if (t.name == "cong") {
    const std::string f = w.argument == 0 ? format_number(EvidenceScorer::kDefaultCongestion) : arg;
    return "With travel times scaled by " + f + ", the planner picks " + choice + value + ".";
  }
  if (t.name == "exclude") return "If vehicle " + arg + " is out of service, the planner picks " + choice + value + ".";
  if (t.name == "multi") return "For a group of " + arg + " passengers, the planner picks " + choice + value + ".";
  std::string out = "If vehicle " + arg + " breaks down";
  if (w.reassignments.empty()) return out + ", it has no passengers to move.";
  out += ":";
  for (const auto& [rid, veh] : w.reassignments)
    out += " request " + std::to_string(rid) + " goes to " + (veh ? "vehicle " + std::to_string(*veh) : "no vehicle") + ";";
  out.back() = '.';
  return out;
}

inline std::string describe(const Term& t, const EvidenceResult& r) {
  if (const auto* e = std::get_if<EvidenceError>(&r.value))
    return "I could not compute " + r.formula + " (" + e->code + "): " + e->message + ".";
  const std::string& n = t.name;
  auto vid = [&](std::size_t i) { return std::to_string(t.args.at(i).value); };
  auto num = [&] { return format_number(*scalar_of(r.value)); };
  if (n == "tp") return "The requested pick-up time is minute " + num() + ".";
  if (n == "td") return "The requested drop-off time is minute " + num() + ".";
  if (n == "c") return "Vehicle " + vid(0) + " has " + num() + " seats.";
  if (n == "o") return "Vehicle " + vid(1) + " currently carries " + num() + " passengers.";
  if (n == "car") return "The planner's choice is " + vehicle_text(std::get<VehicleRef>(r.value).vehicle) + ".";
  if (n == "availablecar") return num() + " vehicles can take the request.";
  if (n == "eta") {
    const auto& e = std::get<EtaPair>(r.value);
    return "With vehicle " + vid(0) + ", the pick-up is scheduled at minute " + std::to_string(e.pickup) +
           " and the drop-off at minute " + std::to_string(e.dropoff) + ".";
  }
  if (n == "sp") return "Vehicle " + vid(1) + " makes " + num() + " stops before the pick-up.";
  if (n == "sd") return "Vehicle " + vid(1) + " makes " + num() + " stops between pick-up and drop-off.";
  if (n == "viod" || n == "vioa") {
    const std::string v = std::to_string(t.args[1].args[0].value);
    const double m = *scalar_of(r.value);
    return "With vehicle " + v + ", the expected " + stop_word(t.args[0]) + (n == "viod" ? " delay" : " lead") + " is " +
           num() + (m == 1.0 ? " minute." : " minutes.");
  }
  if (n == "pctd" || n == "pcta") {
    const std::string v = std::to_string(t.args[1].args[0].value);
    return "With vehicle " + v + ", " + percent(*scalar_of(r.value)) + " of simulated outcomes have " +
           (n == "pctd" ? "a late " : "an early ") + stop_word(t.args[0]) + ".";
  }
  if (n == "vcv") {
    const bool violated = std::get<Boolean>(r.value).value;
    return "Assigning vehicle " + std::to_string(t.args[0].args[0].value) + (violated ? " would" : " would not") +
           " exceed its seating capacity.";
  }
  if (n == "vcvq") return "Vehicle " + std::to_string(t.args[0].args[0].value) + " has " + num() + " free seats.";
  if (n == "r") return "Assigning vehicle " + vid(0) + " has an average reward of " + num() + ".";
  if (n == "rd1") return "The fulfillment part of that reward for vehicle " + vid(0) + " is " + num() + ".";
  if (n == "rd2") return "The timing part of that reward for vehicle " + vid(0) + " is " + num() + ".";
  if (const auto* w = std::get_if<WhatIfOutcome>(&r.value)) return describe_whatif(t, *w);
  // comparison templates
  std::string out = r.formula + " is ";
  if (const auto* b = std::get_if<Boolean>(&r.value)) out += b->value ? "true" : "false";
  else out += num();
  std::size_t held = 0;
  for (const auto& i : r.implications) held += i.holds();
  if (!r.implications.empty())
    out += "; the comparison holds in " + std::to_string(held) + " of " + std::to_string(r.implications.size()) +
           " branch states";
  if (!r.notes.empty()) out += " (" + r.notes.front() + ")";
  return out + ".";
}

} // namespace detail

inline std::string render_evidence_draft(const FormulaList& formulas, const std::vector<EvidenceResult>& results) {
  std::string out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (i) out += '\n';
    out += detail::describe(formulas[i], results[i]);
  }
  return out;
}

inline std::string render_knowledge_draft(const std::vector<KnowledgeHit>& hits) {
  if (hits.empty()) return "I found nothing in the knowledge base that answers this question.";
  std::string out = "From the knowledge base:";
  for (const auto& h : hits) out += "\n[" + h.section + "] " + h.text;
  return out;
}

// ---------------------------------------------------------------------------

class Pipeline {
public:
  /// `llm` may be null: the rule-based classifier, template instantiation
  /// and draft explanations are used instead.
  Pipeline(PromptSet prompts, LlmClient* llm, const ChunkStore* store, const Embedder* embedder, PipelineConfig cfg = {})
      : prompts_(std::move(prompts)), llm_(llm), store_(store), embedder_(embedder), cfg_(cfg) {}

  const PipelineConfig& config() const { return cfg_; }
  std::string backend_name() const { return llm_ ? llm_->name() : "fallback"; }

  ChatRequest classify_prompt(std::string_view query) const {
    std::string types;
    for (const auto& e : query_catalog())
      types += (types.empty() ? "" : "\n") + std::to_string(e.id) + " (" + std::string(to_string(e.category)) + "): " + e.text;
    return request(prompts_.classify, {{"types", types}, {"query", one_line(query)}});
  }

  ChatRequest logic_prompt(std::string_view query, int type_id, std::optional<int> decision) const {
    std::string examples;
    for (int id : few_shot_ids(type_id)) {
      const CatalogEntry& e = catalog_entry(id);
      examples += (examples.empty() ? "" : "\n") + std::string("Q: ") + e.text + " => " + canonicalize(e.gold);
    }
    return request(prompts_.logic, {{"type", std::to_string(type_id)},
                                    {"decision", decision ? std::to_string(*decision) : "none"},
                                    {"examples", examples},
                                    {"query", one_line(query)}});
  }

  static std::optional<Classification> parse_classification(const std::string& text) {
    static const std::regex re(R"(category\s*=\s*(post_hoc|background)\s+type\s*=\s*(\d+|none))", std::regex::icase);
    std::smatch m;
    if (!std::regex_search(text, m, re)) return std::nullopt;
    Classification c;
    c.category = parse_category(lowercase(m[1].str()));
    c.confidence = 1.0;
    if (lowercase(m[2].str()) != "none") {
      const int id = std::stoi(m[2].str());
      if (id < 1 || id > static_cast<int>(query_catalog().size())) return std::nullopt;
      c.type_id = id;
      c.category = catalog_entry(id).category;
    } else if (c.category == QueryCategory::post_hoc) {
      return std::nullopt;
    }
    return c;
  }

  /// One sampled classification; nullopt when the completion is unreadable.
  std::optional<Classification> classify_once(std::string_view query) {
    if (!llm_) return classify_keywords(query);
    if (query.find_first_not_of(" \t\r\n") == std::string_view::npos) throw domain_error("empty query");
    return parse_classification(llm_->complete(classify_prompt(query)));
  }

  Classification classify(std::string_view query) {
    if (!llm_) return classify_keywords(query);
    std::vector<std::string> raw;
    const ChatRequest req = classify_prompt(query);
    if (query.find_first_not_of(" \t\r\n") == std::string_view::npos) throw domain_error("empty query");
    for (int a = 0; a < cfg_.attempts; ++a) {
      raw.push_back(llm_->complete(req));
      if (auto c = parse_classification(raw.back())) return *c;
    }
    throw pipeline_error("classification_unreadable", "the classifier gave no usable answer", raw);
  }

  /// One sampled formula list; nullopt when it does not parse.
  std::optional<FormulaList> logic_once(std::string_view query, int type_id, std::optional<int> decision) {
    const std::string text = llm_ ? llm_->complete(logic_prompt(query, type_id, decision)) : fallback_logic(query, type_id, decision);
    try {
      return parse_formula(text);
    } catch (const parse_error&) {
      return std::nullopt;
    }
  }

  FormulaList generate_logic(std::string_view query, const Classification& c, std::optional<int> decision = std::nullopt) {
    if (!c.type_id) throw pipeline_error("not_typed", "only typed queries compile to formulas");
    if (!llm_) return parse_formula(fallback_logic(query, *c.type_id, decision));
    std::vector<std::string> raw;
    const ChatRequest req = logic_prompt(query, *c.type_id, decision);
    for (int a = 0; a < cfg_.attempts; ++a) {
      raw.push_back(llm_->complete(req));
      try {
        return parse_formula(raw.back());
      } catch (const parse_error&) {
      }
    }
    throw pipeline_error("logic_unparseable",
                         "no parseable formula after " + std::to_string(cfg_.attempts) + " attempts", raw);
  }

  /// Answers one query and appends the turn. Failures become apologetic
  /// turns carrying the error.
  Turn answer(std::string_view query, Session& s) {
    std::lock_guard lock(s.mu);
    Turn t;
    t.index = static_cast<int>(s.turns.size());
    t.query = std::string(query);
    try {
      const Classification c = classify(query);
      t.classification = c;
      if (c.type_id) answer_from_tree(t, c, s);
      else answer_from_knowledge(t, s);
    } catch (const backend_error& e) {
      t.error = TurnError{"backend_error", e.what()};
    } catch (const pipeline_error& e) {
      t.error = TurnError{e.code(), e.what()};
    } catch (const parse_error& e) {
      t.error = TurnError{"logic_unparseable", e.what()};
    } catch (const std::exception& e) {
      t.error = TurnError{"invalid_query", e.what()};
    }
    if (t.error) t.explanation = "Sorry, I could not answer that question. " + t.error->message;
    s.turns.push_back(std::move(t));
    return s.turns.back();
  }

private:
  static std::string one_line(std::string_view q) {
    std::string out(q);
    for (char& c : out)
      if (c == '\n' || c == '\r') c = ' ';
    return out;
  }

  static std::vector<int> few_shot_ids(int type_id) {
    // The type itself plus two neighbours of a different shape.
    const int n = static_cast<int>(query_catalog().size());
    return {type_id, type_id % n + 1, (type_id + 10) % n + 1};
  }

  ChatRequest request(const PromptTemplate& t, const std::map<std::string, std::string>& values) const {
    ChatRequest r;
    r.system = t.system;
    r.messages.push_back({"user", fill_template(t.user, values)});
    r.temperature = cfg_.temperature;
    return r;
  }

  static std::string fallback_logic(std::string_view query, int type_id, std::optional<int> decision) {
    return instantiate(catalog_entry(type_id), extract_vehicles(query), extract_passengers(query), decision);
  }

  std::string history(const Session& s) const {
    std::string out;
    const int from = std::max(0, static_cast<int>(s.turns.size()) - cfg_.history_turns);
    for (int i = from; i < static_cast<int>(s.turns.size()); ++i) {
      const Turn& t = s.turns[static_cast<std::size_t>(i)];
      if (!out.empty()) out += '\n';
      out += "Q: " + one_line(t.query) + "\nA: " + one_line(t.explanation);
    }
    return out.empty() ? "(none)" : out;
  }

  void answer_from_tree(Turn& t, const Classification& c, Session& s) {
    if (!s.tree) throw pipeline_error("no_tree", "the session has no search tree to explain");
    const SearchTree& tree = *s.tree;
    std::optional<int> decision;
    if (tree.decision.kind == ActionKind::assign) decision = tree.decision.vehicle;
    const FormulaList f = generate_logic(t.query, c, decision);
    for (const auto& x : f) t.formulas.push_back(print_term(x));
    t.evidence = score_all(f, EvidenceQueryContext{&tree, -1, cfg_.weights});
    const std::string draft = render_evidence_draft(f, t.evidence);
    if (!llm_) {
      t.explanation = draft;
      return;
    }
    std::string evidence;
    for (const auto& r : t.evidence) evidence += (evidence.empty() ? "" : "\n") + to_json_value(r).dump();
    t.explanation = llm_->complete(request(prompts_.explain, {{"history", history(s)},
                                                               {"query", one_line(t.query)},
                                                               {"formulas", print_formula(f)},
                                                               {"evidence", evidence},
                                                               {"draft", draft}}));
  }

  void answer_from_knowledge(Turn& t, Session& s) {
    if (!store_ || !embedder_) throw pipeline_error("no_corpus", "no knowledge base is loaded");
    for (const auto& h : store_->retrieve(*embedder_, t.query, cfg_.top_k, cfg_.threshold)) {
      const Chunk& c = store_->chunk(h.chunk_id);
      t.knowledge.push_back(KnowledgeHit{c.id, c.section, h.relatedness, c.text});
    }
    const std::string draft = render_knowledge_draft(t.knowledge);
    if (!llm_) {
      t.explanation = draft;
      return;
    }
    std::string passages;
    for (const auto& h : t.knowledge) passages += (passages.empty() ? "" : "\n") + ("[" + std::to_string(h.chunk_id) + "] " + h.text);
    t.explanation = llm_->complete(request(prompts_.explain_background, {{"history", history(s)},
                                                                          {"query", one_line(t.query)},
                                                                          {"passages", passages.empty() ? "(none)" : passages},
                                                                          {"draft", draft}}));
  }

  PromptSet prompts_;
  LlmClient* llm_;
  const ChunkStore* store_;
  const Embedder* embedder_;
  PipelineConfig cfg_;
};

// ---------------------------------------------------------------------------
// Transcripts

inline constexpr int kTranscriptVersion = 1;

inline nlohmann::json classification_json(const std::optional<Classification>& c) {
  if (!c) return nullptr;
  return {{"category", std::string(to_string(c->category))},
          {"type", c->type_id ? nlohmann::json(*c->type_id) : nlohmann::json(nullptr)},
          {"confidence", c->confidence}};
}

inline nlohmann::json turn_json(const Turn& t) {
  nlohmann::json k = nlohmann::json::array();
  for (const auto& h : t.knowledge)
    k.push_back({{"chunk_id", h.chunk_id}, {"section", h.section}, {"relatedness", h.relatedness}, {"text", h.text}});
  nlohmann::json j{{"index", t.index},
                   {"query", t.query},
                   {"classification", classification_json(t.classification)},
                   {"formulas", t.formulas},
                   {"evidence", evidence_list_json(t.evidence)},
                   {"knowledge", k},
                   {"explanation", t.explanation},
                   {"rating", t.rating ? nlohmann::json(*t.rating) : nlohmann::json(nullptr)}};
  if (t.error) j["error"] = {{"code", t.error->code}, {"message", t.error->message}};
  return j;
}

inline nlohmann::json session_json(const Session& s) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : s.turns) turns.push_back(turn_json(t));
  return {{"version", kTranscriptVersion},
          {"session", s.id},
          {"tree_digest", s.tree ? nlohmann::json(tree_digest(*s.tree)) : nlohmann::json(nullptr)},
          {"turns", turns}};
}

// ---------------------------------------------------------------------------
// Accuracy harness

struct LabeledItem {
  int line = 0;
  int type_id = 0;
  std::string query;
  std::string gold;
};

struct MalformedRow {
  int line = 0;
  std::string reason;
};

struct LabeledCorpus {
  std::vector<LabeledItem> items;
  std::vector<MalformedRow> malformed;
};

/// Tab-separated rows of type id, query and gold formulas; blank lines and
/// lines starting with '#' are skipped.
inline LabeledCorpus parse_labeled_corpus(const std::string& text) {
  LabeledCorpus out;
  std::istringstream in(text);
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      cols.push_back(line.substr(start, tab - start));
    cols.push_back(line.substr(start));
    if (cols.size() != 3) {
      out.malformed.push_back({no, "expected 3 tab-separated fields, found " + std::to_string(cols.size())});
      continue;
    }
    LabeledItem item{no, 0, cols[1], cols[2]};
    try {
      std::size_t used = 0;
      item.type_id = std::stoi(cols[0], &used);
      if (used != cols[0].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      out.malformed.push_back({no, "type id '" + cols[0] + "' is not a number"});
      continue;
    }
    if (item.type_id < 1 || item.type_id > static_cast<int>(query_catalog().size())) {
      out.malformed.push_back({no, "unknown type id " + cols[0]});
      continue;
    }
    if (item.query.find_first_not_of(' ') == std::string::npos) {
      out.malformed.push_back({no, "empty query"});
      continue;
    }
    try {
      item.gold = canonicalize(item.gold);
    } catch (const parse_error& e) {
      out.malformed.push_back({no, std::string("gold formulas do not parse: ") + e.what()});
      continue;
    }
    out.items.push_back(std::move(item));
  }
  return out;
}

inline LabeledCorpus load_labeled_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw domain_error("cannot open corpus " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_labeled_corpus(ss.str());
}

/// The 31 catalog queries with their published formulas.
inline LabeledCorpus canonical_corpus() {
  LabeledCorpus out;
  for (const auto& e : query_catalog()) out.items.push_back({e.id, e.id, e.text, canonicalize(e.gold)});
  return out;
}

struct ItemOutcome {
  int line = 0;
  int gold_type = 0;
  EvidenceLevel level = EvidenceLevel::base;
  std::vector<std::optional<int>> predicted; // type per attempt; nullopt = background or unreadable
  std::vector<bool> logic;                   // formula matched gold, per attempt
};

struct Tally {
  int items = 0;
  int class_at1 = 0, class_atk = 0, logic_at1 = 0, logic_atk = 0;

  void add(const ItemOutcome& o, int gold) {
    ++items;
    auto hit = [&](const std::optional<int>& p) { return p && *p == gold; };
    class_at1 += hit(o.predicted.front());
    class_atk += std::any_of(o.predicted.begin(), o.predicted.end(), hit);
    logic_at1 += o.logic.front();
    logic_atk += std::any_of(o.logic.begin(), o.logic.end(), [](bool b) { return b; });
  }
  static double rate(int k, int n) { return n ? static_cast<double>(k) / n : 0.0; }
};

struct AccuracyReport {
  std::string backend;
  int k = 3;
  std::map<EvidenceLevel, Tally> levels;
  Tally overall;
  std::vector<ItemOutcome> outcomes;
  std::vector<MalformedRow> malformed;
};

/// Classification is sampled k times per item. Formulas are sampled k times
/// given the gold type, so logic accuracy does not inherit classifier
/// mistakes. Correct logic means the same syntax tree as the gold list.
inline AccuracyReport evaluate_corpus(const LabeledCorpus& corpus, Pipeline& p, int k = 3) {
  if (k < 1) throw domain_error("evaluate_corpus: k must be at least 1");
  AccuracyReport rep;
  rep.backend = p.backend_name();
  rep.k = k;
  rep.malformed = corpus.malformed;
  const bool sampled = p.backend_name() != "fallback";
  for (const auto& item : corpus.items) {
    ItemOutcome o;
    o.line = item.line;
    o.gold_type = item.type_id;
    const FormulaList gold = parse_formula(item.gold);
    o.level = evidence_level(gold);
    for (int a = 0; a < k; ++a) {
      if (a > 0 && !sampled) {
        o.predicted.push_back(o.predicted.front());
        o.logic.push_back(o.logic.front());
        continue;
      }
      std::optional<int> type;
      try {
        if (auto c = p.classify_once(item.query)) type = c->type_id;
      } catch (const std::exception&) {
      }
      o.predicted.push_back(type);
      bool ok = false;
      try {
        auto f = p.logic_once(item.query, item.type_id, std::nullopt);
        ok = f && *f == gold;
      } catch (const std::exception&) {
      }
      o.logic.push_back(ok);
    }
    rep.levels[o.level].add(o, item.type_id);
    rep.overall.add(o, item.type_id);
    rep.outcomes.push_back(std::move(o));
  }
  return rep;
}

inline nlohmann::json tally_json(const Tally& t, int k) {
  const std::string at = "@" + std::to_string(k);
  return {{"items", t.items},
          {"classification_acc@1", Tally::rate(t.class_at1, t.items)},
          {"classification_acc" + at, Tally::rate(t.class_atk, t.items)},
          {"logic_acc@1", Tally::rate(t.logic_at1, t.items)},
          {"logic_acc" + at, Tally::rate(t.logic_atk, t.items)},
          {"counts", {{"classification@1", t.class_at1}, {"classification" + at, t.class_atk},
                      {"logic@1", t.logic_at1}, {"logic" + at, t.logic_atk}}}};
}

inline nlohmann::json report_json(const AccuracyReport& r, bool with_items = false) {
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [l, t] : r.levels) levels[std::string(to_string(l))] = tally_json(t, r.k);
  nlohmann::json bad = nlohmann::json::array();
  for (const auto& m : r.malformed) bad.push_back({{"line", m.line}, {"reason", m.reason}});
  nlohmann::json j{{"version", 1}, {"backend", r.backend}, {"k", r.k}, {"levels", levels},
                   {"overall", tally_json(r.overall, r.k)}, {"malformed", bad}};
  if (with_items) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& o : r.outcomes) {
      nlohmann::json pred = nlohmann::json::array();
      for (const auto& p : o.predicted) pred.push_back(p ? nlohmann::json(*p) : nlohmann::json(nullptr));
      items.push_back({{"line", o.line}, {"gold_type", o.gold_type}, {"level", std::string(to_string(o.level))},
                       {"predicted", pred}, {"logic", o.logic}});
    }
    j["items"] = items;
  }
  return j;
}

} // namespace xplan
