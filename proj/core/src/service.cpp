#include <httplib.h>

#include "memo/cluster.hpp"
#include "memo/error.hpp"
#include "memo/policy.hpp"
#include "memo/service.hpp"

namespace memo {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Interactive teacher
// ---------------------------------------------------------------------------

std::optional<std::string> InteractiveTeacher::observe(const ExecutionTrace& trace) {
  std::unique_lock lock(mu_);
  const auto kind = trace.events.empty() ? TraceEvent::Kind::kCall : trace.events.back().kind;
  const bool wants = interrupted_ || kind == TraceEvent::Kind::kViolation ||
                     kind == TraceEvent::Kind::kSubtaskFailed;
  if (!wants || cancelled_) return std::nullopt;
  interrupted_ = false;
  awaiting_ = true;
  feedback_.reset();
  cv_.notify_all();
  cv_.wait_for(lock, heartbeat_, [&] { return feedback_.has_value() || cancelled_; });
  awaiting_ = false;
  auto out = std::move(feedback_);
  feedback_.reset();
  return out;
}

std::optional<bool> InteractiveTeacher::verdict(const std::string&, bool) {
  std::lock_guard lock(mu_);
  auto out = verdict_;
  verdict_.reset();
  return out;
}

void InteractiveTeacher::interrupt() {
  std::lock_guard lock(mu_);
  interrupted_ = true;
}

bool InteractiveTeacher::give_feedback(const std::string& text) {
  std::lock_guard lock(mu_);
  if (!awaiting_ || feedback_) return false;
  feedback_ = text;
  cv_.notify_all();
  return true;
}

void InteractiveTeacher::give_verdict(bool ok) {
  std::lock_guard lock(mu_);
  verdict_ = ok;
}

bool InteractiveTeacher::awaiting() const {
  std::lock_guard lock(mu_);
  return awaiting_;
}

void InteractiveTeacher::cancel() {
  std::lock_guard lock(mu_);
  cancelled_ = true;
  cv_.notify_all();
}

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

namespace {

class SerializedModel final : public ModelClient {
 public:
  explicit SerializedModel(ModelClient& inner) : inner_(inner) {}
  std::string id() const override { return inner_.id(); }

 protected:
  std::string complete_text(const ModelRequest& request) override {
    std::lock_guard lock(mu_);
    return inner_.complete(request).text;
  }

 private:
  ModelClient& inner_;
  std::mutex mu_;
};

void send_json(httplib::Response& res, json body, int status = 200) {
  body["schema_version"] = kApiSchemaVersion;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, {{"error", {{"code", code}, {"message", message}}}}, status);
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownTask:
    case ErrorCode::kUnknownId: return 404;
    case ErrorCode::kBusy: return 409;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kDimensionMismatch: return 400;
    default: return 500;
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  }
  return j;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(normalize_whitespace(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(normalize_whitespace(cur));
  return out;
}

}  // namespace

struct Service::Episode {
  std::string id;
  std::string task;
  bool no_retrieval = false;
  std::unique_ptr<Teacher> teacher;
  InteractiveTeacher* interactive = nullptr;
  std::thread thread;
  std::atomic<bool> cancel{false};

  mutable std::mutex mu;
  std::condition_variable cv;
  std::vector<json> events;
  std::string state = "running";  // running | done | failed
  std::string current_subtask;
  std::optional<EpisodeResult> result;
  std::string error;
};

Service::Service(Skillbook& book, ModelClient& model, const Embedder& embedder, Prompts prompts,
                 Config config, TaskLibrary tasks)
    : book_(book), model_(model), embedder_(embedder), prompts_(std::move(prompts)),
      config_(std::move(config)), tasks_(std::move(tasks)),
      server_(std::make_unique<httplib::Server>()),
      serialized_model_(std::make_unique<SerializedModel>(model_)) {
  install_routes();
}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void Service::stop() {
  stopping_ = true;
  std::vector<std::shared_ptr<Episode>> eps;
  {
    std::lock_guard lock(mu_);
    for (auto& [_, ep] : episodes_) eps.push_back(ep);
  }
  for (auto& ep : eps) {
    ep->cancel = true;
    if (ep->interactive) ep->interactive->cancel();
    ep->cv.notify_all();
  }
  for (auto& ep : eps) {
    if (ep->thread.joinable()) ep->thread.join();
  }
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

void Service::wait_idle() {
  std::vector<std::shared_ptr<Episode>> eps;
  {
    std::lock_guard lock(mu_);
    for (auto& [_, ep] : episodes_) eps.push_back(ep);
  }
  for (auto& ep : eps) {
    std::unique_lock lock(ep->mu);
    ep->cv.wait(lock, [&] { return ep->state != "running"; });
  }
}

std::shared_ptr<Service::Episode> Service::episode(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = episodes_.find(id);
  return it == episodes_.end() ? nullptr : it->second;
}

json Service::state_of(const Episode& ep) const {
  std::lock_guard lock(ep.mu);
  json j = {{"id", ep.id},
            {"task", ep.task},
            {"state", ep.state},
            {"awaiting_feedback", ep.interactive != nullptr && ep.interactive->awaiting()},
            {"current_subtask", ep.current_subtask},
            {"event_count", ep.events.size()},
            {"no_retrieval", ep.no_retrieval}};
  if (!ep.events.empty()) j["last_event"] = ep.events.back();
  if (ep.result) {
    j["success"] = ep.result->success;
    j["feedback_count"] = ep.result->feedback_count;
    j["attempts"] = ep.result->attempts;
  }
  if (!ep.error.empty()) j["error"] = ep.error;
  return j;
}

std::string Service::launch(const TaskSpec& task, bool interactive, bool no_retrieval) {
  auto ep = std::make_shared<Episode>();
  ep->task = task.name;
  ep->no_retrieval = no_retrieval;
  if (interactive) {
    auto t = std::make_unique<InteractiveTeacher>(std::chrono::milliseconds(config_.heartbeat_timeout_ms));
    ep->interactive = t.get();
    ep->teacher = std::move(t);
  } else {
    ep->teacher = std::make_unique<ScriptedTeacher>(task.teacher);
  }
  {
    std::lock_guard lock(mu_);
    ep->id = "ep-" + std::to_string(next_episode_++);
    episodes_[ep->id] = ep;
  }
  Episode* raw = ep.get();
  ep->thread = std::thread([this, raw, task] {
    EpisodeOptions opts;
    opts.no_retrieval = raw->no_retrieval;
    opts.cancel = &raw->cancel;
    opts.on_event = [raw](const json& ev) {
      std::lock_guard lock(raw->mu);
      if (ev.value("type", "") == "subtask_start") raw->current_subtask = ev.value("subtask", "");
      raw->events.push_back(ev);
      raw->cv.notify_all();
    };
    try {
      Policy policy(book_, *serialized_model_, embedder_, prompts_, config_);
      EpisodeResult result = policy.run_episode(task, *raw->teacher, opts);
      std::lock_guard lock(raw->mu);
      raw->result = std::move(result);
      raw->state = "done";
    } catch (const std::exception& e) {
      std::lock_guard lock(raw->mu);
      raw->error = e.what();
      raw->state = "failed";
      raw->events.push_back({{"type", "error"}, {"message", e.what()}});
    }
    raw->cv.notify_all();
  });
  return ep->id;
}

void Service::install_routes() {
  auto& s = *server_;

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });

  s.Get("/tasks", [this](const httplib::Request&, httplib::Response& res) {
    json tasks = json::array();
    for (const auto& t : tasks_.tasks()) {
      tasks.push_back({{"name", t.name}, {"category", to_string(t.category)}, {"held_out", t.held_out}});
    }
    send_json(res, {{"tasks", tasks}});
  });

  s.Get("/skillbook/stats", [this](const httplib::Request&, httplib::Response& res) {
    const auto view = book_.snapshot();
    send_json(res, {{"generation", view.generation()}, {"size", view.size()}, {"stats", to_json(view.stats())}});
  });

  s.Get("/skillbook/entries", [this](const httplib::Request& req, httplib::Response& res) {
    const auto view = book_.snapshot();
    std::optional<bool> active;
    if (req.has_param("active")) {
      const std::string a = req.get_param_value("active");
      if (a != "true" && a != "false") throw Error(ErrorCode::kInvalidArgument, "active must be true or false");
      active = a == "true";
    }
    json entries = json::array();
    if (req.has_param("query")) {
      // "action|object one,object two"
      const auto parts = split(req.get_param_value("query"), '|');
      std::vector<std::string> objects;
      if (parts.size() > 1 && !parts[1].empty()) objects = split(parts[1], ',');
      const auto q = query_from_key(embed_key(embedder_, parts[0], objects));
      const auto result = view.retrieve(q, config_.retrieval);
      for (const auto& s : result.ranked) {
        const auto entry = view.find(s.id);
        json e = to_json(*entry);
        e["active"] = entry->active;
        e["score"] = s.score;
        entries.push_back(std::move(e));
      }
      for (EntryId id : result.globals) {
        json e = to_json(*view.find(id));
        e["active"] = true;
        entries.push_back(std::move(e));
      }
    } else {
      for (const auto& e : view.entries()) {
        if (active && e->active != *active) continue;
        json j = to_json(*e);
        j["active"] = e->active;
        entries.push_back(std::move(j));
      }
    }
    send_json(res, {{"generation", view.generation()}, {"entries", entries}});
  });

  s.Post("/cluster", [this](const httplib::Request&, httplib::Response& res) {
    const auto report = run_offline(book_, *serialized_model_, prompts_, config_);
    send_json(res, {{"report", to_json(report)}});
  });

  s.Post("/episodes", [this](const httplib::Request& req, httplib::Response& res) {
    if (stopping_) throw Error(ErrorCode::kBusy, "service is shutting down");
    const json body = parse_body(req);
    if (!body.contains("task") || !body.at("task").is_string()) {
      throw Error(ErrorCode::kInvalidArgument, "body needs a string field \"task\"");
    }
    const std::string teacher = body.value("teacher", "interactive");
    if (teacher != "interactive" && teacher != "scripted") {
      throw Error(ErrorCode::kInvalidArgument, "teacher must be interactive or scripted");
    }
    const TaskSpec& task = tasks_.find(body.at("task").get<std::string>());
    const std::string id = launch(task, teacher == "interactive", body.value("no_retrieval", false));
    send_json(res, {{"id", id}, {"task", task.name}, {"teacher", teacher}}, 201);
  });

  s.Get(R"(/episodes/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
    auto ep = episode(req.matches[1]);
    if (!ep) return send_error(res, 404, "unknown_episode", "no episode " + std::string(req.matches[1]));
    send_json(res, state_of(*ep));
  });

  s.Post(R"(/episodes/([^/]+)/interrupt)", [this](const httplib::Request& req, httplib::Response& res) {
    auto ep = episode(req.matches[1]);
    if (!ep) return send_error(res, 404, "unknown_episode", "no episode " + std::string(req.matches[1]));
    if (!ep->interactive) return send_error(res, 409, "not_interactive", "episode uses the scripted teacher");
    {
      std::lock_guard lock(ep->mu);
      if (ep->state != "running") return send_error(res, 409, "finished", "episode has finished");
    }
    ep->interactive->interrupt();
    send_json(res, {{"id", ep->id}, {"interrupted", true}}, 202);
  });

  s.Post(R"(/episodes/([^/]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
    auto ep = episode(req.matches[1]);
    if (!ep) return send_error(res, 404, "unknown_episode", "no episode " + std::string(req.matches[1]));
    const json body = parse_body(req);
    if (!body.contains("text") || !body.at("text").is_string() ||
        normalize_whitespace(body.at("text").get<std::string>()).empty()) {
      throw Error(ErrorCode::kInvalidArgument, "body needs a non-empty string field \"text\"");
    }
    if (!ep->interactive || !ep->interactive->give_feedback(body.at("text").get<std::string>())) {
      return send_error(res, 409, "not_awaiting_feedback", "episode is not waiting for feedback");
    }
    send_json(res, {{"id", ep->id}, {"accepted", true}}, 202);
  });

  s.Post(R"(/episodes/([^/]+)/verdict)", [this](const httplib::Request& req, httplib::Response& res) {
    auto ep = episode(req.matches[1]);
    if (!ep) return send_error(res, 404, "unknown_episode", "no episode " + std::string(req.matches[1]));
    const json body = parse_body(req);
    if (!body.contains("subtask_ok") || !body.at("subtask_ok").is_boolean()) {
      throw Error(ErrorCode::kInvalidArgument, "body needs a boolean field \"subtask_ok\"");
    }
    if (!ep->interactive) return send_error(res, 409, "not_interactive", "episode uses the scripted teacher");
    ep->interactive->give_verdict(body.at("subtask_ok").get<bool>());
    send_json(res, {{"id", ep->id}, {"accepted", true}}, 202);
  });

  s.Get(R"(/episodes/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    auto ep = episode(req.matches[1]);
    if (!ep) return send_error(res, 404, "unknown_episode", "no episode " + std::string(req.matches[1]));
    res.set_chunked_content_provider(
        "text/event-stream", [this, ep, next = size_t{0}](size_t, httplib::DataSink& sink) mutable {
          std::unique_lock lock(ep->mu);
          ep->cv.wait_for(lock, std::chrono::milliseconds(200), [&] {
            return next < ep->events.size() || ep->state != "running" || stopping_;
          });
          while (next < ep->events.size()) {
            json ev = ep->events[next];
            ev["seq"] = next++;
            const std::string chunk = "data: " + ev.dump() + "\n\n";
            lock.unlock();
            if (!sink.write(chunk.data(), chunk.size())) return false;
            lock.lock();
          }
          if (ep->state != "running" || stopping_) {
            sink.done();
            return true;
          }
          return true;
        });
  });
}

}  // namespace memo
