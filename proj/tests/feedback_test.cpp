#include <gtest/gtest.h>

#include "memo/feedback.hpp"
#include "memo/simenv.hpp"
#include "test_support.hpp"

namespace memo {
namespace {

using nlohmann::json;
using testing::TempDir;

const HashingEmbedder kEmbedder;

SceneGraph toaster_scene() {
  SimEnv env(load_task(testing::asset_path("tasks/make_toast.json")));
  env.reset();
  return env.scene_graph();
}

FeedbackContext context() {
  FeedbackContext ctx;
  ctx.task_name = "Make toast";
  ctx.action_label = "open";
  ctx.object_labels = {"toaster door"};
  ctx.scene = toaster_scene();
  ctx.iteration = 1;
  return ctx;
}

Fixture paraphrase(const std::string& key, const json& answer, std::vector<std::string> when = {}) {
  return {"paraphrase", normalize_whitespace(key), std::move(when), {}, answer.dump(), "test"};
}

// Counts model calls so retry behavior is observable.
class CountingModel final : public ModelClient {
 public:
  explicit CountingModel(ModelClient& inner) : inner_(inner) {}
  int calls = 0;
  std::string id() const override { return "counting"; }

 protected:
  std::string complete_text(const ModelRequest& r) override {
    ++calls;
    return inner_.complete(r).text;
  }

 private:
  ModelClient& inner_;
};

const Prompts& prompts() {
  static const Prompts p = Prompts::load(testing::asset_path("prompts"));
  return p;
}

TEST(TaskInvariance, WholeWordLabelSequences) {
  const SceneGraph g = toaster_scene();
  EXPECT_FALSE(is_task_invariant("open the toaster door slowly", g));
  EXPECT_FALSE(is_task_invariant("The Toaster is hot", g));
  EXPECT_TRUE(is_task_invariant("ensure the robot stays a safe height above the table", g));
  EXPECT_TRUE(is_task_invariant("use the toasters", g));  // not the token "toaster"
  EXPECT_TRUE(is_task_invariant("grasp handles at their center", g));
}

TEST(ParseFeedback, ParaphrasesToLocalText) {
  const std::string raw = "the robot should place its end-effector at position (0.5,-0.3,0.2) to grab the handle";
  ScriptedModel model({paraphrase(raw, {{"local", "move to the door handle"}, {"general", nullptr}})});
  const auto p = parse_feedback(raw, context(), model, prompts());
  EXPECT_EQ(p.local_text, "move to the door handle");
  EXPECT_FALSE(p.general_text.has_value());
  EXPECT_EQ(p.raw_text, raw);
  EXPECT_FALSE(p.model_fallback);
}

TEST(ParseFeedback, ExtractsGeneralGuidance) {
  const std::string raw = "you hit the table while you were moving";
  ScriptedModel model({paraphrase(raw, {{"local", "move higher over the toaster"},
                                        {"general", "ensure the robot stays a safe height above the table"}})});
  const auto p = parse_feedback(raw, context(), model, prompts());
  ASSERT_TRUE(p.general_text.has_value());
  EXPECT_EQ(*p.general_text, "ensure the robot stays a safe height above the table");
}

TEST(ParseFeedback, SceneLabelInGeneralRetriesThenFallsBack) {
  const std::string raw = "pull the toaster door harder";
  ScriptedModel inner({paraphrase(raw, {{"local", "pull harder"}, {"general", "always pull the toaster door hard"}})});
  CountingModel model(inner);
  const auto p = parse_feedback(raw, context(), model, prompts());
  EXPECT_EQ(model.calls, 2);
  EXPECT_EQ(p.local_text, raw);
  EXPECT_FALSE(p.general_text.has_value());
  EXPECT_TRUE(p.model_fallback);
}

TEST(ParseFeedback, RetrySucceeds) {
  const std::string raw = "pull the toaster door harder";
  ScriptedModel inner({
      paraphrase(raw, {{"local", "pull harder"}, {"general", "pull doors firmly"}}, {"was rejected"}),
      paraphrase(raw, {{"local", "pull harder"}, {"general", "always pull the toaster door hard"}}),
  });
  CountingModel model(inner);
  const auto p = parse_feedback(raw, context(), model, prompts());
  EXPECT_EQ(model.calls, 2);
  EXPECT_EQ(p.local_text, "pull harder");
  EXPECT_EQ(p.general_text, "pull doors firmly");
  EXPECT_FALSE(p.model_fallback);
}

TEST(ParseFeedback, MalformedAnswerFallsBack) {
  ScriptedModel model({{"paraphrase", "*", {}, {}, "not json at all", "t"}});
  const auto p = parse_feedback("go left", context(), model, prompts());
  EXPECT_EQ(p.local_text, "go left");
  EXPECT_TRUE(p.model_fallback);
}

TEST(ParseFeedback, UnavailableModelFallsBack) {
  ScriptedModel model;  // every call is fixture-missing
  const auto p = parse_feedback("go left", context(), model, prompts());
  EXPECT_EQ(p.local_text, "go left");
  EXPECT_FALSE(p.general_text.has_value());
  EXPECT_TRUE(p.model_fallback);
}

TEST(ParseFeedback, EmptyLocalIsRejected) {
  ScriptedModel model({paraphrase("go left", {{"local", ""}, {"general", nullptr}})});
  const auto p = parse_feedback("go left", context(), model, prompts());
  EXPECT_TRUE(p.model_fallback);
  EXPECT_EQ(p.local_text, "go left");
}

TEST(Ingest, LocalOnlyIsOneEntry) {
  Skillbook book(testing::hashing_header());
  const auto ctx = context();
  const auto ids = ingest({"rotate the handle further", std::nullopt, "raw", false}, ctx, book, kEmbedder);
  ASSERT_EQ(ids.size(), 1u);
  const auto e = book.snapshot().find(ids[0]);
  EXPECT_EQ(e->payload.type, PayloadType::kGuidance);
  EXPECT_EQ(e->key, embed_key(kEmbedder, "open", {"toaster door"}));
  EXPECT_EQ(e->provenance.source, Source::kHuman);
  EXPECT_EQ(e->provenance.task_name, "Make toast");
  EXPECT_EQ(e->provenance.iteration, 1);
}

TEST(Ingest, LocalAndGeneralIsTwoEntriesOneBatch) {
  Skillbook book(testing::hashing_header());
  const auto ids = ingest({"move higher", std::string("stay above the table"), "raw", false}, context(), book, kEmbedder);
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_EQ(book.generation(), 1u);
  const auto g = book.snapshot().find(ids[1]);
  EXPECT_TRUE(g->key.is_global);
  EXPECT_EQ(g->payload.type, PayloadType::kGlobalGuidance);
}

TEST(Ingest, ExactDuplicateIsSkipped) {
  Skillbook book(testing::hashing_header());
  const ParsedFeedback p{"move higher", std::nullopt, "raw", false};
  EXPECT_EQ(ingest(p, context(), book, kEmbedder).size(), 1u);
  EXPECT_TRUE(ingest(p, context(), book, kEmbedder).empty());
  EXPECT_EQ(book.snapshot().size(), 1u);
}

TEST(Ingest, AppendOnly) {
  Skillbook book(testing::hashing_header());
  ingest({"a", std::nullopt, "a", false}, context(), book, kEmbedder);
  const auto before = book.snapshot().entries();
  ingest({"b", std::string("c"), "b", false}, context(), book, kEmbedder);
  const auto after = book.snapshot();
  for (const auto& e : before) EXPECT_EQ(*after.find(e->id), *e);
}

TEST(Ingest, FallbackFlaggedInProvenance) {
  Skillbook book(testing::hashing_header());
  auto ctx = context();
  ctx.failed_program = parse("release()");
  const auto ids = ingest({"raw text", std::nullopt, "raw text", true}, ctx, book, kEmbedder);
  const auto e = book.snapshot().find(ids.at(0));
  EXPECT_TRUE(e->provenance.model_fallback);
  EXPECT_EQ(e->provenance.failed_program, "release()");
}

// -- corpus -----------------------------------------------------------------

std::string record(const std::string& raw, const std::string& scene = "make_toast.json") {
  return json{{"raw_text", raw}, {"task_name", "Make toast"}, {"action_label", "open"},
              {"object_labels", {"toaster door"}}, {"scene_file", scene}, {"iteration", 0}}.dump();
}

ScriptedModel verbatim_model() {
  return ScriptedModel({{"paraphrase", "*", {}, {}, R"({"local":"{key}","general":null})", "t"}});
}

TEST(Corpus, EmptyFileIsZeroReport) {
  TempDir dir;
  testing::write_file(dir / "c.jsonl", "");
  Skillbook book(testing::hashing_header());
  auto model = verbatim_model();
  const auto r = ingest_corpus(dir / "c.jsonl", book, model, kEmbedder, prompts());
  EXPECT_EQ(r.records, 0u);
  EXPECT_EQ(r.entries_added, 0u);
  EXPECT_EQ(r.errors, 0u);
}

TEST(Corpus, OneMalformedLineAmongTen) {
  TempDir dir;
  std::string text;
  for (int i = 0; i < 10; ++i) text += (i == 4 ? std::string("{\"raw_text\": 12") : record("note " + std::to_string(i))) + "\n";
  testing::write_file(dir / "c.jsonl", text);
  Skillbook book(testing::hashing_header());
  auto model = verbatim_model();
  const auto r = ingest_corpus(dir / "c.jsonl", book, model, kEmbedder, prompts());
  EXPECT_EQ(r.records, 10u);
  EXPECT_EQ(r.records_added, 9u);
  EXPECT_EQ(r.errors, 1u);
  ASSERT_EQ(r.error_messages.size(), 1u);
  EXPECT_NE(r.error_messages[0].find(":5:"), std::string::npos) << r.error_messages[0];
}

TEST(Corpus, MissingSceneFileIsAnError) {
  TempDir dir;
  testing::write_file(dir / "c.jsonl", record("x", "nowhere.json") + "\n" + record("y") + "\n");
  Skillbook book(testing::hashing_header());
  auto model = verbatim_model();
  const auto r = ingest_corpus(dir / "c.jsonl", book, model, kEmbedder, prompts());
  EXPECT_EQ(r.errors, 1u);
  EXPECT_EQ(r.entries_added, 1u);
}

TEST(Corpus, TotalsReconcileAndReplayIsBitIdentical) {
  TempDir dir;
  std::string text;
  for (int i = 0; i < 224; ++i) text += record("correction " + std::to_string(i % 200)) + "\n";
  testing::write_file(dir / "c.jsonl", text);

  auto run = [&](const std::string& name) {
    auto book = Skillbook::open(dir / name, testing::hashing_header());
    auto model = verbatim_model();
    return ingest_corpus(dir / "c.jsonl", *book, model, kEmbedder, prompts());
  };
  const auto a = run("a.jsonl");
  const auto b = run("b.jsonl");
  EXPECT_EQ(a.entries_added + a.skipped, 224u);
  EXPECT_EQ(a.skipped, 24u);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(testing::read_file(dir / "a.jsonl"), testing::read_file(dir / "b.jsonl"));
}

}  // namespace
}  // namespace memo
