#include <algorithm>
#include <cctype>
#include <chrono>
#include <set>
#include <thread>

#include "memo/error.hpp"
#include "memo/feedback.hpp"
#include "memo/policy.hpp"

namespace memo {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string bullet_list(const std::vector<std::string>& items) {
  if (items.empty()) return "(none)";
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) out += (i ? "\n- " : "- ") + items[i];
  return out;
}

std::string identifier(std::string s) {
  for (auto& c : s) {
    c = std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : '_';
  }
  return s;
}

const SubtaskSpec* spec_for(const TaskSpec& task, const std::string& description) {
  const std::string want = lower(description);
  for (const auto& s : task.subtasks) {
    if (lower(s.name) == want) return &s;
  }
  return nullptr;
}

// Name like "open_door": the action plus the class of the object acted on.
std::string template_name(const Subtask& subtask, const SkillProgram& program, const SceneGraph& scene) {
  std::string object;
  for (const auto& call : program.calls) {
    if (call.skill_name == "rotate_joint" && !call.args.empty() && call.args[0].kind() == ValueKind::kObject) {
      object = std::get<ObjectRef>(call.args[0].data).label;
    }
  }
  if (object.empty()) {
    for (const auto& call : program.calls) {
      if (call.skill_name == "grasp" && !call.args.empty() && call.args[0].kind() == ValueKind::kObject) {
        object = std::get<ObjectRef>(call.args[0].data).label;
        break;
      }
    }
  }
  std::string name = identifier(subtask.action);
  if (const SceneNode* node = scene.find(object)) name += "_" + identifier(node->cls);
  return name;
}

}  // namespace

bool same_procedure(const Template& a, const Template& b) {
  if (a.bindings.size() != b.bindings.size() || a.params.size() != b.params.size() ||
      a.body.calls.size() != b.body.calls.size()) {
    return false;
  }
  // Parameter names come from scene labels, so compare them by position.
  auto index_of = [](const Template& t, const std::string& name) {
    for (size_t i = 0; i < t.params.size(); ++i) {
      if (t.params[i].name == name) return i;
    }
    return t.params.size();
  };
  for (size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].kind != b.params[i].kind) return false;
  }
  for (auto ia = a.bindings.begin(), ib = b.bindings.begin(); ia != a.bindings.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.type != ib->second.type || ia->second.axis != ib->second.axis ||
        index_of(a, ia->second.param) != index_of(b, ib->second.param)) {
      return false;
    }
  }
  for (size_t ci = 0; ci < a.body.calls.size(); ++ci) {
    const auto& ca = a.body.calls[ci];
    const auto& cb = b.body.calls[ci];
    if (ca.skill_name != cb.skill_name || ca.args.size() != cb.args.size()) return false;
    for (size_t ai = 0; ai < ca.args.size(); ++ai) {
      if (!a.bindings.count({ci, ai}) && !(ca.args[ai] == cb.args[ai])) return false;
    }
  }
  return true;
}

std::string strip_code_fence(std::string_view text) {
  const auto open = text.find("```");
  if (open == std::string_view::npos) return std::string(text);
  auto body = text.find('\n', open);
  if (body == std::string_view::npos) return {};
  ++body;
  const auto close = text.find("```", body);
  return std::string(text.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body));
}

Policy::Policy(Skillbook& book, ModelClient& model, const Embedder& embedder, Prompts prompts,
               Config config, const SkillRegistry& registry)
    : book_(book), model_(model), embedder_(embedder), prompts_(std::move(prompts)),
      config_(std::move(config)), registry_(registry) {
  if (embedder_.dimension() != book_.header().embedding_dimension) {
    throw Error(ErrorCode::kEmbedderMismatch, "embedder dimension does not match the skillbook");
  }
}

std::vector<Subtask> Policy::decompose(const std::string& task, const SceneGraph& scene) {
  ModelRequest req;
  req.role = ModelRole::kDecompose;
  req.budget = 4000;
  req.messages.push_back({"system", fill(prompts_.system, {{"skills", describe(registry_)}})});
  req.messages.push_back({"user", fill(prompts_.decompose, {{"task", task}, {"scene", scene.describe()}})});

  std::string problem;
  for (int round = 0; round < 2; ++round) {
    const std::string text = model_.complete(req).text;
    std::vector<Subtask> out;
    problem.clear();
    try {
      const json j = json::parse(strip_code_fence(text));
      if (!j.is_array() || j.empty()) throw std::runtime_error("answer must be a non-empty JSON array");
      for (const auto& s : j) {
        Subtask st;
        st.description = normalize_whitespace(s.at("description").get<std::string>());
        st.action = normalize_whitespace(s.at("action").get<std::string>());
        st.objects = s.value("objects", std::vector<std::string>{});
        if (st.description.empty() || st.action.empty()) {
          throw std::runtime_error("every subtask needs a description and an action");
        }
        for (const auto& label : st.objects) {
          if (!scene.find(label)) throw std::runtime_error("unknown object '" + label + "'");
        }
        out.push_back(std::move(st));
      }
      return out;
    } catch (const std::exception& e) {
      problem = e.what();
    }
    req.messages.push_back({"assistant", text});
    req.messages.push_back({"user", "Your answer was rejected: " + problem +
                                        ". Use only object labels from the scene.\nRequest: " + task});
  }
  throw Error(ErrorCode::kInvalidArgument, "decomposition of '" + task + "' failed: " + problem);
}

RetrievalQuery Policy::build_query(const Subtask& subtask, const SceneGraph& scene) const {
  const auto key = embed_key(embedder_, subtask.action, subtask.objects,
                             config_.use_scene_key ? &scene : nullptr);
  return query_from_key(key);
}

RetrievedContext Policy::retrieve(const Subtask& subtask, const SceneGraph& scene) const {
  RetrievedContext ctx;
  const auto view = book_.snapshot();
  ctx.result = view.retrieve(build_query(subtask, scene), config_.retrieval);
  for (EntryId id : ctx.result.globals) ctx.globals.push_back(view.find(id)->payload.text);
  for (const auto& s : ctx.result.ranked) {
    const auto e = view.find(s.id);
    if (e->payload.type == PayloadType::kTemplate) {
      ctx.templates.push_back(*e->payload.tmpl);
    } else {
      ctx.guidance.push_back(e->payload.text);
    }
  }
  return ctx;
}

GeneratedProgram Policy::generate(const Subtask& subtask, const SceneGraph& scene,
                                  const RetrievedContext& context,
                                  const std::vector<std::string>& corrections) {
  std::vector<std::string> templates;
  for (const auto& t : context.templates) templates.push_back(render_template(t));
  std::string template_text = templates.empty() ? "(none)" : "";
  for (const auto& t : templates) template_text += t + "\n";

  ModelRequest req;
  req.role = ModelRole::kGenerate;
  req.messages.push_back({"system", fill(prompts_.system, {{"skills", describe(registry_)}})});
  req.messages.push_back({"user", fill(prompts_.generate, {{"scene", scene.describe()},
                                                           {"globals", bullet_list(context.globals)},
                                                           {"guidance", bullet_list(context.guidance)},
                                                           {"templates", template_text},
                                                           {"corrections", bullet_list(corrections)},
                                                           {"subtask", subtask.description}})});
  GeneratedProgram out;
  for (int round = 0;; ++round) {
    out.model_text = model_.complete(req).text;
    std::string problem;
    ErrorCode code = ErrorCode::kSyntax;
    try {
      const SkillProgram raw = parse(strip_code_fence(out.model_text));
      std::set<std::string> names;
      for (const auto& t : context.templates) names.insert(t.name);
      out.used_template = std::any_of(raw.calls.begin(), raw.calls.end(),
                                      [&](const SkillCall& c) { return names.count(c.skill_name) > 0; });
      out.program = expand_templates(raw, context.templates, scene, registry_);
      const auto errors = validate(out.program, registry_);
      if (errors.empty()) {
        out.repairs = round;
        return out;
      }
      code = errors.front().code;
      for (const auto& e : errors) {
        problem += "call " + std::to_string(e.call_index + 1) + ": " + e.message + "; ";
      }
    } catch (const Error& e) {
      code = e.code();
      problem = e.what();
    }
    if (round >= config_.repair_rounds) {
      throw Error(code, "no valid program for '" + subtask.description + "': " + problem);
    }
    req.messages.push_back({"assistant", out.model_text});
    req.messages.push_back({"user", "That program was rejected: " + problem +
                                        "\nFix it and answer with the whole program.\nRequest: " +
                                        subtask.description});
  }
}

void Policy::learn_template(const Subtask& subtask, const SkillProgram& program, const SceneGraph& scene,
                            const std::string& task_name, int iteration) {
  Template tmpl = templatize(program, scene, template_name(subtask, program, scene));
  const auto view = book_.snapshot();
  std::set<std::string> taken;
  for (const auto& e : view.entries()) {
    if (!e->active || e->payload.type != PayloadType::kTemplate) continue;
    if (same_procedure(*e->payload.tmpl, tmpl)) return;
    taken.insert(e->payload.tmpl->name);
  }
  const std::string base = tmpl.name;
  for (int n = 2; taken.count(tmpl.name); ++n) tmpl.name = base + "_" + std::to_string(n);

  SkillbookEntry e;
  e.key = embed_key(embedder_, subtask.action, subtask.objects, config_.use_scene_key ? &scene : nullptr);
  e.payload = Payload::from_template(std::move(tmpl));
  e.provenance.task_name = task_name;
  e.provenance.source = Source::kSuccess;
  e.provenance.iteration = iteration;
  book_.insert(std::move(e));
}

EpisodeResult Policy::run_episode(const TaskSpec& task, Teacher& teacher, const EpisodeOptions& opt) {
  EpisodeResult result;
  auto emit = [&](json ev) {
    if (opt.on_event) opt.on_event(ev);
  };
  auto cancelled = [&] { return opt.cancel != nullptr && opt.cancel->load(); };

  json attempts = json::array();
  SimEnv env(task);
  emit({{"type", "episode_start"}, {"task", task.name}});

  for (int attempt = 1; attempt <= config_.max_attempts && !result.success; ++attempt) {
    if (cancelled()) break;
    result.attempts = attempt;
    env.reset();
    emit({{"type", "attempt_start"}, {"attempt", attempt}});
    json alog = {{"attempt", attempt}};
    json subtask_logs = json::array();
    int feedback_here = 0;
    std::string failure;

    std::vector<Subtask> subtasks;
    try {
      subtasks = decompose(task.name, env.scene_graph());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kReplayMismatch || e.code() == ErrorCode::kReplayExhausted) throw;
      failure = e.what();
    }

    for (size_t si = 0; failure.empty() && si < subtasks.size(); ++si) {
      const Subtask& st = subtasks[si];
      emit({{"type", "subtask_start"}, {"subtask", st.description}});
      json slog = {{"description", st.description}, {"action", st.action}, {"objects", st.objects}};
      json tries = json::array();
      const CheckpointId cp = env.checkpoint();
      std::vector<std::string> corrections;
      bool done = false;

      while (!done && failure.empty()) {
        if (cancelled()) {
          failure = "cancelled";
          break;
        }
        const SceneGraph scene = env.scene_graph();
        json tlog = json::object();
        RetrievedContext ctx;
        if (!opt.no_retrieval) {
          ctx = retrieve(st, scene);
          tlog["retrieval"] = to_json(ctx.result);
          emit({{"type", "retrieval"}, {"subtask", st.description}, {"retrieval", tlog["retrieval"]}});
        }
        GeneratedProgram gen;
        try {
          gen = generate(st, scene, ctx, corrections);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::kReplayMismatch || e.code() == ErrorCode::kReplayExhausted) throw;
          tlog["error"] = e.what();
          tries.push_back(tlog);
          failure = e.what();
          break;
        }
        tlog["program"] = render(gen.program);
        tlog["used_template"] = gen.used_template;
        emit({{"type", "program"}, {"subtask", st.description}, {"program", tlog["program"]}});

        ExecutionTrace trace{task.name, st.description, attempt, {}};
        auto record = [&](TraceEvent ev) {
          trace.events.push_back(std::move(ev));
          json j = to_json(trace.events.back());
          j["type"] = "trace";
          emit(j);
          return teacher.observe(trace);
        };

        std::optional<std::string> feedback;
        bool violated = false;
        for (const auto& call : gen.program.calls) {
          const StepOutcome out = env.step(call);
          feedback = record({TraceEvent::Kind::kCall, st.description, call.skill_name, render(call),
                             Violation::kNone, ""});
          if (feedback) break;
          if (!out.ok()) {
            violated = true;
            feedback = record({TraceEvent::Kind::kViolation, st.description, call.skill_name, render(call),
                               out.violation, out.detail});
            break;
          }
          if (config_.step_delay_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(config_.step_delay_ms));
          }
          if (cancelled()) break;
        }

        if (!feedback) {
          bool ok = !violated;
          if (ok) {
            const SubtaskSpec* spec = spec_for(task, st.description);
            ok = spec == nullptr || env.check_subtask(spec->name);
            if (auto v = teacher.verdict(st.description, ok)) ok = *v;
          }
          if (ok) {
            done = true;
            record({TraceEvent::Kind::kSubtaskDone, st.description, "", "", Violation::kNone, ""});
            if (!opt.no_retrieval && !gen.used_template) {
              learn_template(st, gen.program, scene, task.name, attempt);
            }
          } else {
            feedback = record({TraceEvent::Kind::kSubtaskFailed, st.description, "", "", Violation::kNone, ""});
          }
        }

        json events = json::array();
        for (const auto& ev : trace.events) events.push_back(to_json(ev));
        tlog["events"] = events;

        if (!done) {
          if (!feedback) {
            failure = "subtask '" + st.description + "' failed without feedback";
          } else if (++feedback_here > config_.max_feedback_per_attempt) {
            failure = "feedback limit reached";
          } else {
            ++result.feedback_count;
            FeedbackContext fctx{task.name, st.action, st.objects, scene, gen.program, attempt};
            const ParsedFeedback parsed = parse_feedback(*feedback, fctx, model_, prompts_);
            json flog = {{"raw", parsed.raw_text},
                         {"local", parsed.local_text},
                         {"general", parsed.general_text ? json(*parsed.general_text) : json(nullptr)},
                         {"model_fallback", parsed.model_fallback}};
            corrections.push_back(parsed.local_text);
            if (!opt.no_retrieval) flog["entry_ids"] = ingest(parsed, fctx, book_, embedder_, config_.use_scene_key);
            tlog["feedback"] = flog;
            json ev = flog;
            ev["type"] = "feedback";
            ev["subtask"] = st.description;
            emit(ev);
            env.restore(cp);
          }
        }
        tries.push_back(tlog);
      }
      slog["tries"] = tries;
      slog["ok"] = done;
      subtask_logs.push_back(slog);
    }

    if (failure.empty()) {
      result.success = env.check_success();
      if (!result.success) failure = "task goal not reached";
    }
    alog["subtasks"] = subtask_logs;
    alog["success"] = result.success;
    if (!failure.empty()) alog["failure"] = failure;
    attempts.push_back(alog);
    emit({{"type", "attempt_end"}, {"attempt", attempt}, {"success", result.success}});
  }

  result.log = {{"task", task.name},
                {"config", to_json(config_)},
                {"no_retrieval", opt.no_retrieval},
                {"teacher", teacher.id()},
                {"attempts", attempts},
                {"success", result.success},
                {"feedback_count", result.feedback_count}};
  if (!opt.no_retrieval) result.log["skillbook_generation"] = book_.generation();
  emit({{"type", "episode_end"}, {"success", result.success}, {"feedback_count", result.feedback_count},
        {"attempts", result.attempts}});
  return result;
}

}  // namespace memo
