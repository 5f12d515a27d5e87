#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "memo/embedding.hpp"
#include "memo/error.hpp"
#include "memo/model.hpp"
#include "test_support.hpp"

namespace memo {
namespace {

using testing::TempDir;

ModelRequest request(ModelRole role, const std::string& key, const std::string& context = "") {
  ModelRequest r;
  r.role = role;
  r.messages.push_back({"system", "You are a robot."});
  r.messages.push_back({"user", context + "\nRequest: " + key});
  return r;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIo;
}

TEST(ExtractKey, LastRequestLineNormalized) {
  ModelRequest r = request(ModelRole::kGenerate, "  Open   the Toaster ");
  r.messages[0].text = "Request: ignored";
  EXPECT_EQ(extract_key(r), "open the toaster");
}

TEST(Digest, StableAndWhitespaceInsensitive) {
  const auto a = request(ModelRole::kGenerate, "open the toaster");
  auto b = a;
  b.messages[1].text = "\n\nRequest:   open the toaster  ";
  EXPECT_EQ(request_digest(a), request_digest(b));
  auto c = a;
  c.role = ModelRole::kDecompose;
  EXPECT_NE(request_digest(a), request_digest(c));
  EXPECT_EQ(request_digest(a).rfind("v1:", 0), 0u);
  EXPECT_EQ(request_digest(a).size(), 3u + 16u);
}

TEST(Scripted, FixtureHit) {
  ScriptedModel m({{"paraphrase", "you hit the table", {}, {}, "stay above the table", "t"}});
  const auto r = m.complete(request(ModelRole::kParaphrase, "You hit the table"));
  EXPECT_EQ(r.text, "stay above the table");
  EXPECT_EQ(r.backend_id, "scripted");
}

TEST(Scripted, MissingFixture) {
  ScriptedModel m;
  EXPECT_EQ(code_of([&] { m.complete(request(ModelRole::kGenerate, "fly")); }), ErrorCode::kFixtureMissing);
}

TEST(Scripted, RoleMustMatch) {
  ScriptedModel m({{"generate", "x", {}, {}, "release()", "t"}});
  EXPECT_EQ(code_of([&] { m.complete(request(ModelRole::kDecompose, "x")); }), ErrorCode::kFixtureMissing);
}

TEST(Scripted, ConditionsAndOrder) {
  ScriptedModel m({
      {"generate", "open", {"hint"}, {}, "with hint", "t"},
      {"generate", "open", {}, {"veto"}, "plain", "t"},
      {"generate", "*", {}, {}, "wild {key}", "t"},
  });
  EXPECT_EQ(m.complete(request(ModelRole::kGenerate, "open", "a hint here")).text, "with hint");
  EXPECT_EQ(m.complete(request(ModelRole::kGenerate, "open")).text, "plain");
  EXPECT_EQ(m.complete(request(ModelRole::kGenerate, "open", "veto")).text, "wild open");
  EXPECT_EQ(m.complete(request(ModelRole::kGenerate, "Say \"hi\"")).text, "wild Say \\\"hi\\\"");
}

TEST(Scripted, LoadsDirectoryInFilenameOrder) {
  TempDir dir;
  testing::write_file(dir / "b.json", R"([{"role":"generate","key":"k","response":"from b"}])");
  testing::write_file(dir / "a.json", R"([{"role":"generate","key":"k","response":"from a"},
                                          {"role":"paraphrase","key":"p","response":{"local":"x"}}])");
  auto m = ScriptedModel::from_path(dir.path());
  EXPECT_EQ(m->size(), 3u);
  EXPECT_EQ(m->complete(request(ModelRole::kGenerate, "k")).text, "from a");
  EXPECT_EQ(nlohmann::json::parse(m->complete(request(ModelRole::kParaphrase, "p")).text).at("local"), "x");
}

TEST(Scripted, RejectsUnknownRole) {
  TempDir dir;
  testing::write_file(dir / "bad.json", R"([{"role":"dream","key":"k","response":"x"}])");
  EXPECT_THROW(ScriptedModel::from_path(dir / "bad.json"), Error);
}

TEST(Complete, TruncatesToBudgetWithFlag) {
  ScriptedModel m({{"generate", "k", {}, {}, std::string(50, 'x'), "t"}});
  auto req = request(ModelRole::kGenerate, "k");
  req.budget = 10;
  const auto r = m.complete(req);
  EXPECT_EQ(r.text.size(), 10u);
  EXPECT_TRUE(r.truncated);
}

TEST(Complete, EmptyMessagesRejected) {
  ScriptedModel m;
  EXPECT_EQ(code_of([&] { m.complete(ModelRequest{}); }), ErrorCode::kInvalidArgument);
}

TEST(RecordReplay, FiveCallsReplayIdentically) {
  ScriptedModel inner({{"generate", "*", {}, {}, "answer to {key}", "t"}});
  RecordingModel rec(inner);
  std::vector<std::string> answers;
  for (int i = 0; i < 5; ++i) answers.push_back(rec.complete(request(ModelRole::kGenerate, "q" + std::to_string(i))).text);

  TempDir dir;
  rec.export_session(dir / "session.jsonl");
  const auto imported = import_session(dir / "session.jsonl");
  ASSERT_EQ(imported.size(), 5u);
  const auto session = rec.session();
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(imported[i].digest, session[i].digest);
    EXPECT_EQ(imported[i].response, session[i].response);
    EXPECT_EQ(imported[i].role, "generate");
  }

  auto replay = ReplayModel::from_file(dir / "session.jsonl");
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(replay->complete(request(ModelRole::kGenerate, "q" + std::to_string(i))).text, answers[i]);
  }
  EXPECT_EQ(replay->remaining(), 0u);
  EXPECT_EQ(code_of([&] { replay->complete(request(ModelRole::kGenerate, "q5")); }), ErrorCode::kReplayExhausted);
}

TEST(RecordReplay, MismatchIsLoud) {
  ScriptedModel inner({{"generate", "*", {}, {}, "x", "t"}});
  RecordingModel rec(inner);
  rec.complete(request(ModelRole::kGenerate, "first"));
  ReplayModel replay(rec.session());
  EXPECT_EQ(code_of([&] { replay.complete(request(ModelRole::kGenerate, "other")); }), ErrorCode::kReplayMismatch);
}

TEST(RecordReplay, FailedCallsReplayAsTheSameError) {
  ScriptedModel inner({{"generate", "known", {}, {}, "release()", "t"}});
  RecordingModel rec(inner);
  EXPECT_EQ(code_of([&] { rec.complete(request(ModelRole::kGenerate, "unknown")); }), ErrorCode::kFixtureMissing);
  rec.complete(request(ModelRole::kGenerate, "known"));

  TempDir dir;
  rec.export_session(dir / "s.jsonl");
  auto replay = ReplayModel::from_file(dir / "s.jsonl");
  EXPECT_EQ(code_of([&] { replay->complete(request(ModelRole::kGenerate, "unknown")); }), ErrorCode::kFixtureMissing);
  EXPECT_EQ(replay->complete(request(ModelRole::kGenerate, "known")).text, "release()");
}

TEST(ErrorCodes, NamesRoundTrip) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::kIo); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    EXPECT_EQ(error_code_from_string(to_string(code)), code);
  }
  EXPECT_FALSE(error_code_from_string("nonsense").has_value());
}

// -- remote -----------------------------------------------------------------

class LocalServer {
 public:
  explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler,
                       const std::string& path = "/v1/chat")
      : path_(path) {
    server_.Post(path, [this, handler](const httplib::Request& req, httplib::Response& res) {
      hits++;
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string origin() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::string url() const { return origin() + path_; }
  std::atomic<int> hits{0};

 private:
  httplib::Server server_;
  std::thread thread_;
  std::string path_;
  int port_ = 0;
};

TEST(Remote, PlainTextAnswer) {
  std::string seen;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen = req.body;
    EXPECT_EQ(req.get_header_value("Authorization"), "Bearer secret");
    res.set_content(R"j({"text":"release()"})j", "application/json");
  });
  RemoteModel m({server.url(), "secret", std::chrono::milliseconds(2000), 0, "m1"});
  EXPECT_EQ(m.complete(request(ModelRole::kGenerate, "k")).text, "release()");
  const auto body = nlohmann::json::parse(seen);
  EXPECT_EQ(body.at("model"), "m1");
  EXPECT_EQ(body.at("messages").size(), 2u);
  EXPECT_EQ(body.at("messages")[0].at("role"), "system");
}

TEST(Remote, ChatCompletionAnswer) {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"j({"choices":[{"message":{"content":"open_gripper()"}}]})j", "application/json");
  });
  RemoteModel m({server.url(), "", std::chrono::milliseconds(2000), 0, ""});
  EXPECT_EQ(m.complete(request(ModelRole::kGenerate, "k")).text, "open_gripper()");
}

TEST(Remote, TimeoutAfterRetries) {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    res.set_content(R"({"text":"late"})", "application/json");
  });
  RemoteModel m({server.url(), "", std::chrono::milliseconds(100), 2, ""});
  EXPECT_EQ(code_of([&] { m.complete(request(ModelRole::kGenerate, "k")); }), ErrorCode::kModelTimeout);
  EXPECT_EQ(server.hits.load(), 3);
}

TEST(Remote, ServerErrorsAreRetried) {
  LocalServer server([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  RemoteModel m({server.url(), "", std::chrono::milliseconds(1000), 1, ""});
  EXPECT_EQ(code_of([&] { m.complete(request(ModelRole::kGenerate, "k")); }), ErrorCode::kModelTimeout);
  EXPECT_EQ(server.hits.load(), 2);
}

TEST(Remote, ClientErrorIsUnavailable) {
  LocalServer server([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  RemoteModel m({server.url(), "", std::chrono::milliseconds(1000), 3, ""});
  EXPECT_EQ(code_of([&] { m.complete(request(ModelRole::kGenerate, "k")); }), ErrorCode::kModelUnavailable);
  EXPECT_EQ(server.hits.load(), 1);
}

// Serves the hashing embedder over HTTP, scaled so the client must normalize.
void serve_hashing(const httplib::Request& req, httplib::Response& res) {
  const HashingEmbedder local(16);
  nlohmann::json vectors = nlohmann::json::array();
  const auto body = nlohmann::json::parse(req.body);
  for (const auto& t : body.at("texts")) {
    std::vector<double> v;
    for (double x : local.embed(t.get<std::string>()).components()) v.push_back(3 * x);
    vectors.push_back(v);
  }
  res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
}

TEST(RemoteEmbedder, ProbesDimensionAndNormalizes) {
  LocalServer server(serve_hashing, "/embed");
  RemoteEmbedder e(server.origin(), std::chrono::milliseconds(2000), "svc");
  EXPECT_EQ(e.dimension(), 16u);
  EXPECT_EQ(e.id(), "svc-d16");
  const HashingEmbedder local(16);
  const Vector v = e.embed("open the door");
  for (size_t i = 0; i < 16; ++i) EXPECT_NEAR(v[i], local.embed("open the door")[i], 1e-12);
  EXPECT_TRUE(e.embed("").is_zero());
  const auto batch = e.embed_batch({"a", "", "pour"});
  ASSERT_EQ(batch.size(), 3u);
  EXPECT_TRUE(batch[1].is_zero());
  EXPECT_NEAR(batch[2].norm(), 1.0, 1e-12);
}

TEST(RemoteEmbedder, FailureIsEmbeddingUnavailable) {
  LocalServer server([](const httplib::Request&, httplib::Response& res) { res.status = 500; }, "/embed");
  EXPECT_EQ(code_of([&] { RemoteEmbedder(server.origin(), std::chrono::milliseconds(500)); }),
            ErrorCode::kEmbeddingUnavailable);
}

}  // namespace
}  // namespace memo
