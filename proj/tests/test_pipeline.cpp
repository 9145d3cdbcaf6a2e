#include <gtest/gtest.h>

#include <deque>
#include <fstream>
#include <sstream>

#include "xplan/golden.hpp"
#include "xplan/tree_io.hpp"

using namespace xplan;

namespace {

const std::string kData = XPLAN_DATA_DIR;

const PromptSet& prompts() {
  static const PromptSet p = load_prompts(kData + "/prompts");
  return p;
}

const HashEmbedder& embedder() {
  static const HashEmbedder e;
  return e;
}

const ChunkStore& store() {
  static const ChunkStore s = index_corpus(load_corpus(kData + "/corpus"), embedder());
  return s;
}

const SearchTree& tree() {
  static const SearchTree t = golden_tree();
  return t;
}

std::shared_ptr<const SearchTree> tree_ptr() {
  static const auto p = std::make_shared<const SearchTree>(tree());
  return p;
}

Pipeline fallback() { return Pipeline(prompts(), nullptr, &store(), &embedder()); }

// Replays canned completions in order and keeps every request it saw.
class QueueLlm : public LlmClient {
public:
  std::deque<std::string> replies;
  std::vector<ChatRequest> seen;
  bool fail = false;

  std::string complete(const ChatRequest& r) override {
    seen.push_back(r);
    if (fail) throw backend_error("upstream timed out");
    if (replies.empty()) throw backend_error("queue exhausted");
    std::string s = replies.front();
    if (replies.size() > 1) replies.pop_front();
    return s;
  }
  std::string name() const override { return "queue"; }
};

// Forwards to the rule responder and keeps the requests.
class SpyLlm : public LlmClient {
public:
  RuleLlm inner;
  std::vector<ChatRequest> seen;
  std::string complete(const ChatRequest& r) override {
    seen.push_back(r);
    return inner.complete(r);
  }
  std::string name() const override { return "spy"; }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) n += line.rfind(prefix, 0) == 0;
  return n;
}

std::string section(const std::string& text, const std::string& from, const std::string& to) {
  const auto a = text.find(from);
  const auto b = text.find(to, a);
  return text.substr(a + from.size(), b - a - from.size());
}

} // namespace

TEST(Classify, FallbackKnowsEveryCatalogQuery) {
  Pipeline p = fallback();
  for (const auto& e : query_catalog()) {
    const Classification c = p.classify(e.text);
    ASSERT_TRUE(c.type_id) << e.text;
    EXPECT_EQ(*c.type_id, e.id) << e.text;
    EXPECT_EQ(c.category, e.category);
  }
  const Classification bg = p.classify("Why is getting dropped off early a bad thing?");
  EXPECT_EQ(bg.category, QueryCategory::background);
  EXPECT_FALSE(bg.type_id);
  EXPECT_THROW(p.classify("  "), domain_error);
}

TEST(Classify, ParsesCompletionFormats) {
  auto c = Pipeline::parse_classification("category=post_hoc type=7");
  ASSERT_TRUE(c);
  EXPECT_EQ(*c->type_id, 7);
  c = Pipeline::parse_classification("Sure! CATEGORY = background  type = none.");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->category, QueryCategory::background);
  EXPECT_FALSE(c->type_id);
  // The catalog decides the category of a typed answer.
  c = Pipeline::parse_classification("category=background type=27");
  ASSERT_TRUE(c);
  EXPECT_EQ(c->category, catalog_entry(27).category);
  EXPECT_FALSE(Pipeline::parse_classification("category=post_hoc type=none"));
  EXPECT_FALSE(Pipeline::parse_classification("category=post_hoc type=32"));
  EXPECT_FALSE(Pipeline::parse_classification("type 4 probably"));
}

TEST(Classify, RetriesUnreadableCompletions) {
  QueueLlm llm;
  llm.replies = {"I think it is about pick-ups", "category=post_hoc type=4"};
  Pipeline p(prompts(), &llm, &store(), &embedder());
  const Classification c = p.classify("When will vehicle 2 arrive?");
  EXPECT_EQ(*c.type_id, 4);
  EXPECT_EQ(llm.seen.size(), 2u);
  EXPECT_EQ(prompt_digest(llm.seen[0]), prompt_digest(llm.seen[1]));

  QueueLlm junk;
  junk.replies = {"no idea"};
  Pipeline q(prompts(), &junk, &store(), &embedder());
  try {
    q.classify("When will vehicle 2 arrive?");
    FAIL() << "expected pipeline_error";
  } catch (const pipeline_error& e) {
    EXPECT_EQ(e.code(), "classification_unreadable");
    EXPECT_EQ(e.raw().size(), 3u);
  }
}

TEST(Logic, FallbackInstantiatesVehicles) {
  Pipeline p = fallback();
  auto logic = [&](const char* q, std::optional<int> decision = std::nullopt) {
    return print_formula(p.generate_logic(q, p.classify(q), decision));
  };
  EXPECT_EQ(logic(catalog_entry(7).text.c_str()), "viod(tp(3), eta(3))");
  EXPECT_EQ(logic("How long might the pick-up be delayed if vehicle 2 takes the passenger?"), "viod(tp(2), eta(2))");
  EXPECT_EQ(print_formula(p.generate_logic(catalog_entry(23).text, p.classify(catalog_entry(23).text))),
            canonicalize(catalog_entry(23).gold));
  EXPECT_EQ(parse_formula(logic(catalog_entry(23).text.c_str())).size(), 3u);

  Classification bg;
  try {
    p.generate_logic("anything", bg);
    FAIL();
  } catch (const pipeline_error& e) {
    EXPECT_EQ(e.code(), "not_typed");
  }
}

TEST(Logic, LlmRetriesUntilParseable) {
  QueueLlm llm;
  llm.replies = {"viod(tp(3), eta(3)", "viod(tp(3), eta(3))"};
  Pipeline p(prompts(), &llm, &store(), &embedder());
  Classification c;
  c.category = QueryCategory::post_hoc;
  c.type_id = 7;
  EXPECT_EQ(print_formula(p.generate_logic("delay with vehicle 3?", c, 2)), "viod(tp(3), eta(3))");
  EXPECT_EQ(llm.seen.size(), 2u);
  const std::string user = llm.seen[0].messages.at(0).content;
  EXPECT_NE(user.find("Type: 7"), std::string::npos);
  EXPECT_NE(user.find("Decision vehicle: 2"), std::string::npos);
  EXPECT_EQ(count_lines_starting(user, "Q: "), 3);

  QueueLlm bad;
  bad.replies = {"no formula here ("};
  Pipeline q(prompts(), &bad, &store(), &embedder());
  try {
    q.generate_logic("x", c);
    FAIL();
  } catch (const pipeline_error& e) {
    EXPECT_EQ(e.code(), "logic_unparseable");
    EXPECT_EQ(e.raw().size(), 3u);
  }
}

TEST(Answer, FallbackTurns) {
  Pipeline p = fallback();
  Session s;
  s.tree = tree_ptr();
  const std::string before = dump_tree(tree());

  Turn t = p.answer(catalog_entry(1).text, s);
  EXPECT_EQ(t.index, 0);
  EXPECT_FALSE(t.error);
  EXPECT_EQ(t.formulas, std::vector<std::string>{"tp(0)"});
  EXPECT_NE(t.explanation.find("255"), std::string::npos);

  t = p.answer("Why is getting dropped off early a bad thing?", s);
  EXPECT_EQ(t.index, 1);
  ASSERT_FALSE(t.knowledge.empty());
  EXPECT_NE(t.knowledge[0].text.find("Safety Concerns"), std::string::npos);
  EXPECT_TRUE(t.formulas.empty());
  for (std::size_t i = 1; i < t.knowledge.size(); ++i) EXPECT_GE(t.knowledge[i - 1].relatedness, t.knowledge[i].relatedness);

  t = p.answer("   ", s);
  ASSERT_TRUE(t.error);
  EXPECT_EQ(t.error->code, "invalid_query");
  EXPECT_EQ(t.explanation.rfind("Sorry, I could not answer that question.", 0), 0u);

  EXPECT_EQ(s.turns.size(), 3u);
  EXPECT_EQ(dump_tree(tree()), before);
  EXPECT_EQ(dump_tree(*s.tree), before);
}

TEST(Answer, BackendFailureBecomesApology) {
  QueueLlm llm;
  llm.fail = true;
  Pipeline p(prompts(), &llm, &store(), &embedder());
  Session s;
  s.tree = tree_ptr();
  const Turn t = p.answer(catalog_entry(1).text, s);
  ASSERT_TRUE(t.error);
  EXPECT_EQ(t.error->code, "backend_error");
  EXPECT_NE(t.explanation.find("upstream timed out"), std::string::npos);
  EXPECT_EQ(s.turns.size(), 1u);
}

TEST(Answer, TreeQueryWithoutTree) {
  Pipeline p = fallback();
  Session s;
  const Turn t = p.answer(catalog_entry(1).text, s);
  ASSERT_TRUE(t.error);
  EXPECT_EQ(t.error->code, "no_tree");
}

TEST(Answer, HistoryWindowIsBounded) {
  SpyLlm llm;
  Pipeline p(prompts(), &llm, &store(), &embedder());
  Session s;
  s.tree = tree_ptr();
  for (int i = 0; i < 12; ++i) {
    llm.seen.clear();
    p.answer(catalog_entry(1 + i % 6).text, s);
    const ChatRequest* explain = nullptr;
    for (const auto& r : llm.seen)
      if (r.messages.at(0).content.rfind("Task: explain", 0) == 0) explain = &r;
    ASSERT_NE(explain, nullptr);
    const std::string hist = section(explain->messages[0].content, "Recent turns:", "Query:");
    EXPECT_EQ(count_lines_starting(hist, "Q: "), std::min(i, 8)) << i;
    if (i == 0) EXPECT_NE(hist.find("(none)"), std::string::npos);
  }
  // The explanation mirrors the draft, so the rule backend agrees with the fallback.
  Pipeline f = fallback();
  Session s2;
  s2.tree = tree_ptr();
  EXPECT_EQ(f.answer(catalog_entry(3).text, s2).explanation, s.turns[2].explanation);
}

TEST(Harness, ParsesLabeledCorpus) {
  const LabeledCorpus c = parse_labeled_corpus(
      "# comment\n\n1\tWhen is pick-up?\ttp(0)\n"
      "2\tmissing gold\n"
      "x\tbad id\ttp(0)\n"
      "40\tunknown\ttp(0)\n"
      "3\tbroken gold\ttp(\n"
      "4\t \ttp(0)\n"
      "2\tDrop-off time?\ttd( 0 )\r\n");
  ASSERT_EQ(c.items.size(), 2u);
  EXPECT_EQ(c.items[0].line, 3);
  EXPECT_EQ(c.items[1].gold, "td(0)");
  ASSERT_EQ(c.malformed.size(), 5u);
  EXPECT_EQ(c.malformed[0].line, 4);
  EXPECT_EQ(c.malformed[4].line, 8);
  EXPECT_THROW(load_labeled_corpus("/nonexistent.tsv"), domain_error);
}

TEST(Harness, ReportRecountsFromOutcomes) {
  const LabeledCorpus corpus = load_labeled_corpus(kData + "/eval/paraphrases.tsv");
  ASSERT_GE(corpus.items.size(), 150u);
  EXPECT_TRUE(corpus.malformed.empty());
  Pipeline p = fallback();
  const AccuracyReport r = evaluate_corpus(corpus, p, 3);
  ASSERT_EQ(r.outcomes.size(), corpus.items.size());

  // Independent recount: classify each item directly and compare logic text.
  std::map<EvidenceLevel, std::array<int, 3>> want; // items, class hits, logic hits
  for (const auto& item : corpus.items) {
    const FormulaList gold = parse_formula(item.gold);
    auto& w = want[evidence_level(gold)];
    ++w[0];
    const auto c = classify_keywords(item.query);
    w[1] += c.type_id && *c.type_id == item.type_id;
    const std::string got =
        instantiate(catalog_entry(item.type_id), extract_vehicles(item.query), extract_passengers(item.query), std::nullopt);
    w[2] += parse_formula(got) == gold;
  }
  int items = 0, cls = 0, lg = 0;
  for (const auto& [level, w] : want) {
    const Tally& t = r.levels.at(level);
    EXPECT_EQ(t.items, w[0]);
    EXPECT_EQ(t.class_at1, w[1]);
    EXPECT_EQ(t.logic_at1, w[2]);
    EXPECT_GE(t.class_atk, t.class_at1);
    EXPECT_GE(t.logic_atk, t.logic_at1);
    items += w[0];
    cls += w[1];
    lg += w[2];
  }
  EXPECT_EQ(r.overall.items, items);
  EXPECT_EQ(r.overall.class_at1, cls);
  EXPECT_EQ(r.overall.logic_at1, lg);

  // Overall rate is the item-weighted mean of the level rates.
  double weighted = 0.0;
  for (const auto& [level, t] : r.levels) weighted += Tally::rate(t.class_at1, t.items) * t.items;
  EXPECT_NEAR(weighted / r.overall.items, Tally::rate(r.overall.class_at1, r.overall.items), 1e-12);

  const auto j = report_json(r, true);
  EXPECT_EQ(j["backend"], "fallback");
  EXPECT_EQ(j["items"].size(), corpus.items.size());
  EXPECT_EQ(j["overall"]["counts"]["classification@1"], cls);
  EXPECT_THROW(evaluate_corpus(corpus, p, 0), domain_error);
}

TEST(Harness, SampledBackendsUseEveryAttempt) {
  // First attempt wrong, later attempts right: Acc@3 exceeds Acc@1.
  QueueLlm llm;
  llm.replies = {"category=post_hoc type=2", "category=post_hoc type=1"};
  Pipeline p(prompts(), &llm, &store(), &embedder());
  LabeledCorpus c;
  c.items.push_back({1, 1, "When is pick-up?", "tp(0)"});
  const AccuracyReport r = evaluate_corpus(c, p, 3);
  EXPECT_EQ(r.overall.class_at1, 0);
  EXPECT_EQ(r.overall.class_atk, 1);
  EXPECT_EQ(r.outcomes[0].predicted.size(), 3u);
}

TEST(Golden, MockBackendIsExactOnCatalog) {
  auto llm = load_scripted(golden_fixture_path("llm_golden.json"));
  Pipeline p(prompts(), llm.get(), &store(), &embedder());
  const AccuracyReport r = evaluate_corpus(canonical_corpus(), p, 3);
  EXPECT_EQ(r.backend, "mock");
  EXPECT_EQ(r.overall.items, 31);
  EXPECT_EQ(r.overall.class_at1, 31);
  EXPECT_EQ(r.overall.logic_at1, 31);
}

TEST(Golden, TranscriptIsByteIdentical) {
  const std::string want = read_file(golden_fixture_path("transcript_golden.json"));
  ASSERT_FALSE(want.empty());
  for (int run = 0; run < 2; ++run) {
    auto llm = load_scripted(golden_fixture_path("llm_golden.json"));
    Pipeline p(prompts(), llm.get(), &store(), &embedder());
    EXPECT_EQ(golden_transcript(p, golden_tree()), want) << "run " << run;
  }
  const auto j = nlohmann::json::parse(want);
  EXPECT_EQ(j["turns"].size(), 31u);
  for (const auto& t : j["turns"]) EXPECT_FALSE(t.contains("error")) << t["query"];
}

TEST(Golden, MockMissIsABackendError) {
  auto llm = load_scripted(golden_fixture_path("llm_golden.json"));
  Pipeline p(prompts(), llm.get(), &store(), &embedder());
  Session s;
  s.tree = tree_ptr();
  const Turn t = p.answer("A question nobody recorded", s);
  ASSERT_TRUE(t.error);
  EXPECT_EQ(t.error->code, "backend_error");
}
