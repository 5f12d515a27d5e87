#pragma once

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "memo/config.hpp"
#include "memo/embedding.hpp"
#include "memo/model.hpp"
#include "memo/simenv.hpp"
#include "memo/skillbook.hpp"

namespace httplib {
class Server;
}

namespace memo {

inline constexpr int kApiSchemaVersion = 1;

/// A person at the console. Violations, failed subtasks and explicit
/// interrupts park the episode until feedback arrives or the heartbeat
/// timeout passes.
class InteractiveTeacher final : public Teacher {
 public:
  explicit InteractiveTeacher(std::chrono::milliseconds heartbeat) : heartbeat_(heartbeat) {}

  std::optional<std::string> observe(const ExecutionTrace& trace) override;
  std::optional<bool> verdict(const std::string& subtask, bool predicted) override;
  std::string id() const override { return "interactive"; }

  void interrupt();
  /// False unless the teacher is waiting for feedback.
  bool give_feedback(const std::string& text);
  void give_verdict(bool ok);
  bool awaiting() const;
  void cancel();

 private:
  std::chrono::milliseconds heartbeat_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool interrupted_ = false;
  bool awaiting_ = false;
  bool cancelled_ = false;
  std::optional<std::string> feedback_;
  std::optional<bool> verdict_;
};

/// HTTP/JSON API over one shared skillbook. Episodes run on background
/// threads; clustering runs synchronously in the request.
class Service {
 public:
  Service(Skillbook& book, ModelClient& model, const Embedder& embedder, Prompts prompts,
          Config config, TaskLibrary tasks);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  /// Blocks until every episode thread has finished.
  void wait_idle();

 private:
  struct Episode;
  void install_routes();
  std::shared_ptr<Episode> episode(const std::string& id);
  nlohmann::json state_of(const Episode& ep) const;
  std::string launch(const TaskSpec& task, bool interactive, bool no_retrieval);

  Skillbook& book_;
  ModelClient& model_;
  const Embedder& embedder_;
  Prompts prompts_;
  Config config_;
  TaskLibrary tasks_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Episode>> episodes_;
  std::atomic<bool> stopping_{false};
  int next_episode_ = 1;
  std::unique_ptr<ModelClient> serialized_model_;  // one model call at a time
};

}  // namespace memo
