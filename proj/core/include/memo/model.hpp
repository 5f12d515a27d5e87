#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memo/error.hpp"

namespace memo {

enum class ModelRole { kDecompose, kGenerate, kParaphrase, kCompress };

std::string_view to_string(ModelRole role);
std::optional<ModelRole> model_role_from_string(std::string_view s);

struct Message {
  std::string speaker;  // "system" | "user" | "assistant"
  std::string text;
};

struct ModelRequest {
  ModelRole role = ModelRole::kGenerate;
  std::vector<Message> messages;
  size_t budget = 16000;  // max response characters
};

struct ModelResponse {
  std::string text;
  std::string backend_id;
  std::chrono::milliseconds latency{0};
  bool truncated = false;
};

/// Prompts end with a line "Request: <key>"; scripted fixtures match on it.
inline constexpr std::string_view kKeyMarker = "Request:";

/// Lowercased, whitespace-collapsed text after the last "Request:" marker.
std::string extract_key(const ModelRequest& request);

/// Whitespace-normalized text collapsed to single spaces and trimmed.
std::string normalize_whitespace(std::string_view text);

/// "v1:<16 hex>" over role + normalized messages. Stable across platforms.
std::string request_digest(const ModelRequest& request);

/// Every language-model interaction goes through this contract.
class ModelClient {
 public:
  virtual ~ModelClient() = default;
  /// Throws Error with kFixtureMissing, kReplayExhausted, kReplayMismatch,
  /// kModelTimeout or kModelUnavailable.
  ModelResponse complete(const ModelRequest& request);
  virtual std::string id() const = 0;

 protected:
  virtual std::string complete_text(const ModelRequest& request) = 0;
};

/// One canned response. Fixtures are tried in file order; the first whose
/// role and key match and whose context conditions hold wins.
struct Fixture {
  std::string role;
  std::string key;  // normalized; "*" matches any key
  std::vector<std::string> when_contains;
  std::vector<std::string> unless_contains;
  std::string response;  // "{key}" expands to the request key (original case)
  std::string source;    // file the fixture came from
};

/// Deterministic table lookup keyed by (role, key).
class ScriptedModel final : public ModelClient {
 public:
  ScriptedModel() = default;
  explicit ScriptedModel(std::vector<Fixture> fixtures) : fixtures_(std::move(fixtures)) {}

  /// Loads a JSON array file, or every *.json file of a directory in
  /// filename order.
  static std::unique_ptr<ScriptedModel> from_path(const std::filesystem::path& path);

  void add(Fixture fixture) { fixtures_.push_back(std::move(fixture)); }
  void add_file(const std::filesystem::path& path);
  size_t size() const { return fixtures_.size(); }
  std::string id() const override { return "scripted"; }

 protected:
  std::string complete_text(const ModelRequest& request) override;

 private:
  std::vector<Fixture> fixtures_;
};

struct RecordedCall {
  std::string digest;
  std::string role;
  std::string response;
  /// Set when the call failed; replay rethrows the same error.
  std::optional<ErrorCode> error;
  std::string error_message;
};

/// Wraps any backend and keeps (digest, response) pairs for replay. Failed
/// calls are kept too, so fallback paths replay the same way.
class RecordingModel final : public ModelClient {
 public:
  explicit RecordingModel(ModelClient& inner) : inner_(inner) {}

  std::vector<RecordedCall> session() const;
  /// JSON-Lines, one call per line.
  void export_session(const std::filesystem::path& path) const;
  std::string id() const override { return "recording:" + inner_.id(); }

 protected:
  std::string complete_text(const ModelRequest& request) override;

 private:
  ModelClient& inner_;
  mutable std::mutex mu_;
  std::vector<RecordedCall> calls_;
};

std::vector<RecordedCall> import_session(const std::filesystem::path& path);

/// Serves recorded responses in order; each request must match the digest
/// recorded at that position.
class ReplayModel final : public ModelClient {
 public:
  explicit ReplayModel(std::vector<RecordedCall> calls) : calls_(calls.begin(), calls.end()) {}
  static std::unique_ptr<ReplayModel> from_file(const std::filesystem::path& path) {
    return std::make_unique<ReplayModel>(import_session(path));
  }
  size_t remaining() const;
  std::string id() const override { return "replay"; }

 protected:
  std::string complete_text(const ModelRequest& request) override;

 private:
  mutable std::mutex mu_;
  std::deque<RecordedCall> calls_;
};

struct RemoteModelOptions {
  std::string url;  // chat-completion endpoint
  std::string token;
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
  std::string model;
};

/// HTTP JSON chat completion:
///   POST url {"model", "messages":[{"role","content"}], "max_chars"}
/// accepts {"text": ...} or {"choices":[{"message":{"content": ...}}]}.
class RemoteModel final : public ModelClient {
 public:
  explicit RemoteModel(RemoteModelOptions options);
  /// Reads MEMO_MODEL_URL and MEMO_MODEL_TOKEN; nullptr if the URL is unset.
  static std::unique_ptr<RemoteModel> from_env();
  std::string id() const override { return "remote"; }

 protected:
  std::string complete_text(const ModelRequest& request) override;

 private:
  RemoteModelOptions options_;
};

}  // namespace memo
