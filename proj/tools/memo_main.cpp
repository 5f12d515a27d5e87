// memo: command-line front end for the skillbook, the policy and the service.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "memo/cluster.hpp"
#include "memo/config.hpp"
#include "memo/error.hpp"
#include "memo/feedback.hpp"
#include "memo/policy.hpp"
#include "memo/service.hpp"

namespace {

using nlohmann::json;
using namespace memo;

constexpr int kExitUsage = 2;

// A person at the terminal. Asks for a correction whenever a call is rejected
// or a subtask fails; an empty line lets the robot carry on.
class StdinTeacher final : public Teacher {
 public:
  std::optional<std::string> observe(const ExecutionTrace& trace) override {
    if (trace.events.empty()) return std::nullopt;
    const TraceEvent& ev = trace.events.back();
    if (ev.kind == TraceEvent::Kind::kViolation) {
      std::cout << "  " << ev.call_text << " rejected: " << to_string(ev.violation) << " (" << ev.detail << ")\n";
    } else if (ev.kind == TraceEvent::Kind::kSubtaskFailed) {
      std::cout << "  subtask failed: " << trace.subtask << "\n";
    } else {
      return std::nullopt;
    }
    std::cout << "feedback> " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line) || normalize_whitespace(line).empty()) return std::nullopt;
    return line;
  }
  std::string id() const override { return "interactive"; }
};

struct Common {
  std::string config_path;
  std::string skillbook;
  std::string model = "scripted";
  std::string fixtures;
  std::string record;
  std::string replay;
  std::string embed_url;
};

void add_common(CLI::App* app, Common& c, bool need_book) {
  app->add_option("--config", c.config_path, "Config JSON (defaults apply to missing keys)");
  auto* book = app->add_option("--skillbook", c.skillbook, "Skillbook JSON-Lines file");
  if (need_book) book->required();
  app->add_option("--model", c.model, "Model backend: scripted, remote (MEMO_MODEL_URL) or replay")
      ->check(CLI::IsMember({"scripted", "remote", "replay"}));
  app->add_option("--fixtures", c.fixtures, "Fixture file or directory for the scripted backend");
  app->add_option("--record", c.record, "Write every model call to this session file");
  app->add_option("--replay", c.replay, "Session file for --model replay");
  app->add_option("--embed-url", c.embed_url, "Embedding service base URL (default: hashing embedder)");
}

/// Everything a command needs, built from the common options.
struct Runtime {
  Config config;
  Prompts prompts;
  std::unique_ptr<Embedder> embedder;
  std::unique_ptr<ModelClient> backend;
  std::unique_ptr<RecordingModel> recorder;
  std::unique_ptr<Skillbook> book;
  std::string record_path;

  ModelClient& model() { return recorder ? static_cast<ModelClient&>(*recorder) : *backend; }

  ~Runtime() {
    if (recorder && !record_path.empty()) recorder->export_session(record_path);
  }
};

std::unique_ptr<Runtime> make_runtime(const Common& c) {
  auto rt = std::make_unique<Runtime>();
  rt->config = c.config_path.empty() ? Config{} : load_config(c.config_path);
  rt->prompts = Prompts::load_default(rt->config.prompt_version);
  if (c.embed_url.empty()) {
    rt->embedder = std::make_unique<HashingEmbedder>(rt->config.embedding_dim);
  } else {
    rt->embedder = std::make_unique<RemoteEmbedder>(c.embed_url, std::chrono::seconds(10));
  }

  if (c.model == "remote") {
    rt->backend = RemoteModel::from_env();
    if (!rt->backend) throw Error(ErrorCode::kModelUnavailable, "MEMO_MODEL_URL is not set");
  } else if (c.model == "replay") {
    if (c.replay.empty()) throw Error(ErrorCode::kInvalidArgument, "--model replay needs --replay FILE");
    rt->backend = ReplayModel::from_file(c.replay);
  } else {
    rt->backend = ScriptedModel::from_path(c.fixtures.empty() ? asset_dir() / "fixtures" : std::filesystem::path(c.fixtures));
  }
  if (!c.record.empty()) {
    rt->recorder = std::make_unique<RecordingModel>(*rt->backend);
    rt->record_path = c.record;
  }

  const SkillbookHeader header{kSchemaVersion, rt->embedder->dimension(), rt->embedder->id()};
  const Clock clock = rt->config.wall_clock ? wall_clock() : logical_clock();
  rt->book = c.skillbook.empty() ? std::make_unique<Skillbook>(header, clock)
                                 : Skillbook::open(c.skillbook, header, clock);
  return rt;
}

const TaskSpec* find_task(const TaskLibrary& lib, const std::string& name) {
  if (lib.contains(name)) return &lib.find(name);
  std::cerr << "unknown task '" << name << "'. Available tasks:\n";
  for (const auto& n : lib.names()) std::cerr << "  " << n << "\n";
  return nullptr;
}

std::string fmt(double v, int digits = 1) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct TrialStats {
  int successes = 0;
  int trials = 0;
  int feedback = 0;
  std::string summary() const {
    return std::to_string(successes) + "/" + std::to_string(trials) + ", avg feedback " +
           fmt(trials ? static_cast<double>(feedback) / trials : 0.0);
  }
};

EpisodeResult run_once(Runtime& rt, Skillbook& book, const TaskSpec& task, bool no_retrieval,
                       Teacher& teacher) {
  Policy policy(book, rt.model(), *rt.embedder, rt.prompts, rt.config);
  EpisodeOptions opts;
  opts.no_retrieval = no_retrieval;
  return policy.run_episode(task, teacher, opts);
}

// -- commands ----------------------------------------------------------------

int cmd_run(const Common& c, const std::string& task_name, int trials, bool no_retrieval,
            const std::string& teacher_kind, const std::string& log_path) {
  const auto lib = TaskLibrary::load_default();
  const TaskSpec* task = find_task(lib, task_name);
  if (!task) return kExitUsage;
  auto rt = make_runtime(c);

  std::ofstream log;
  if (!log_path.empty()) log.open(log_path, std::ios::trunc);
  TrialStats stats;
  for (int i = 1; i <= trials; ++i) {
    EpisodeResult r;
    if (teacher_kind == "interactive") {
      StdinTeacher teacher;
      r = run_once(*rt, *rt->book, *task, no_retrieval, teacher);
    } else if (teacher_kind == "none") {
      SilentTeacher teacher;
      r = run_once(*rt, *rt->book, *task, no_retrieval, teacher);
    } else {
      ScriptedTeacher teacher(task->teacher);
      r = run_once(*rt, *rt->book, *task, no_retrieval, teacher);
    }
    stats.trials++;
    stats.successes += r.success ? 1 : 0;
    stats.feedback += r.feedback_count;
    std::cout << "trial " << i << ": " << (r.success ? "success" : "failure") << ", feedback "
              << r.feedback_count << "\n";
    if (log) log << r.log.dump() << "\n";
  }
  std::cout << task->name << ": " << stats.summary() << "\n";
  return 0;
}

int cmd_ingest(const Common& c, const std::string& corpus) {
  auto rt = make_runtime(c);
  const auto report = ingest_corpus(corpus, *rt->book, rt->model(), *rt->embedder, rt->prompts,
                                    rt->config.use_scene_key);
  std::cout << to_json(report).dump(2) << "\n";
  return report.errors == 0 ? 0 : 1;
}

int cmd_cluster(const Common& c) {
  auto rt = make_runtime(c);
  const auto report = run_offline(*rt->book, rt->model(), rt->prompts, rt->config);
  std::cout << to_json(report).dump(2) << "\n";
  return 0;
}

int cmd_inspect(const Common& c, const std::string& query, bool all) {
  auto rt = make_runtime(c);
  const auto view = rt->book->snapshot();
  auto line = [](const SkillbookEntry& e, const std::string& score) {
    std::string text = e.payload.type == PayloadType::kTemplate ? render_template(*e.payload.tmpl)
                                                                : e.payload.text;
    std::cout << "#" << e.id << " " << to_string(e.payload.type) << (e.active ? "" : " (inactive)")
              << score << " [" << e.key.action_text;
    for (const auto& o : e.key.object_texts) std::cout << " | " << o;
    std::cout << "]\n  " << text << "\n";
  };
  if (!query.empty()) {
    const auto bar = query.find('|');
    const std::string action = normalize_whitespace(query.substr(0, bar));
    std::vector<std::string> objects;
    if (bar != std::string::npos) {
      std::string rest = query.substr(bar + 1);
      for (size_t pos = 0; pos <= rest.size();) {
        const auto comma = rest.find(',', pos);
        const std::string o = normalize_whitespace(rest.substr(pos, comma - pos));
        if (!o.empty()) objects.push_back(o);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    const auto result = view.retrieve(query_from_key(embed_key(*rt->embedder, action, objects)),
                                      rt->config.retrieval);
    for (const auto& s : result.ranked) line(*view.find(s.id), " score " + fmt(s.score, 4));
    for (EntryId id : result.globals) line(*view.find(id), "");
  } else {
    for (const auto& e : view.entries()) {
      if (all || e->active) line(*e, "");
    }
  }
  std::cout << "generation " << view.generation() << ", " << to_json(view.stats()).dump() << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& suite, int trials) {
  const auto lib = TaskLibrary::load_default();
  auto rt = make_runtime(c);

  // Learn from every training task once unless a skillbook was supplied.
  if (c.skillbook.empty()) {
    for (const auto& t : lib.tasks()) {
      if (t.held_out) continue;
      ScriptedTeacher teacher(t.teacher);
      run_once(*rt, *rt->book, t, false, teacher);
    }
  }
  std::cout << "skillbook: generation " << rt->book->generation() << ", "
            << to_json(rt->book->stats()).dump() << "\n\n";

  std::printf("%-56s %-22s %-22s\n", "task (zero-shot)", "MEMO", "no retrieval");
  TrialStats memo_total, base_total;
  for (const auto& t : lib.tasks()) {
    if ((suite == "heldout" && !t.held_out) || (suite == "train" && t.held_out)) continue;
    TrialStats memo_stats, base_stats;
    for (int i = 0; i < trials; ++i) {
      // Zero-shot: each trial starts from the same learned skillbook and
      // nobody corrects the robot.
      auto book = rt->book->clone();
      SilentTeacher teacher;
      const auto r = run_once(*rt, *book, t, false, teacher);
      memo_stats.trials++;
      memo_stats.successes += r.success;
      memo_stats.feedback += r.feedback_count;

      auto empty = rt->book->clone();
      SilentTeacher base_teacher;
      const auto b = run_once(*rt, *empty, t, true, base_teacher);
      base_stats.trials++;
      base_stats.successes += b.success;
      base_stats.feedback += b.feedback_count;
    }
    std::printf("%-56s %-22s %-22s\n", t.name.c_str(), memo_stats.summary().c_str(),
                base_stats.summary().c_str());
    memo_total.trials += memo_stats.trials;
    memo_total.successes += memo_stats.successes;
    memo_total.feedback += memo_stats.feedback;
    base_total.trials += base_stats.trials;
    base_total.successes += base_stats.successes;
    base_total.feedback += base_stats.feedback;
  }
  std::printf("%-56s %-22s %-22s\n", "total", memo_total.summary().c_str(), base_total.summary().c_str());
  return 0;
}

std::atomic<bool> g_stop{false};

int cmd_serve(const Common& c, const std::string& host, int port) {
  auto rt = make_runtime(c);
  Service service(*rt->book, rt->model(), *rt->embedder, rt->prompts, rt->config, TaskLibrary::load_default());
  const int bound = service.start(host, port);
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return 0;
}

int cmd_tasks() {
  const auto lib = TaskLibrary::load_default();
  for (const auto& t : lib.tasks()) {
    std::cout << (t.held_out ? "heldout " : "train   ") << to_string(t.category) << "  " << t.name << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memo: skillbook-backed robot skill learning from human feedback"};
  app.require_subcommand(1);
  Common common;

  std::string task;
  int trials = 1;
  bool no_retrieval = false;
  std::string teacher = "scripted";
  std::string log_path;
  auto* run = app.add_subcommand("run", "Run episodes of one task");
  add_common(run, common, false);
  run->add_option("--task", task, "Task name (case-insensitive)")->required();
  run->add_option("--trials", trials, "Number of episodes")->check(CLI::PositiveNumber);
  run->add_flag("--no-retrieval", no_retrieval, "Baseline without skillbook reads or writes");
  run->add_option("--teacher", teacher, "scripted, interactive or none")
      ->check(CLI::IsMember({"scripted", "interactive", "none"}));
  run->add_option("--log", log_path, "Write one JSON episode log per line");

  std::string corpus;
  auto* ingest = app.add_subcommand("ingest", "Replay a feedback corpus into a skillbook");
  add_common(ingest, common, true);
  ingest->add_option("--corpus", corpus, "JSON-Lines feedback corpus")->required()->check(CLI::ExistingFile);

  auto* cluster = app.add_subcommand("cluster", "Cluster and compress guidance offline");
  add_common(cluster, common, true);

  std::string query;
  bool all = false;
  auto* inspect = app.add_subcommand("inspect", "List or query skillbook entries");
  add_common(inspect, common, true);
  inspect->add_option("--query", query, "\"action|object one,object two\"");
  inspect->add_flag("--all", all, "Include inactive entries");

  std::string suite = "heldout";
  auto* eval = app.add_subcommand("eval", "Compare MEMO with the no-retrieval baseline");
  add_common(eval, common, false);
  eval->add_option("--suite", suite, "heldout, train or all")->check(CLI::IsMember({"heldout", "train", "all"}));
  eval->add_option("--trials", trials, "Trials per task")->check(CLI::PositiveNumber);

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API for the console");
  add_common(serve, common, false);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");

  auto* tasks = app.add_subcommand("tasks", "List the task library");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(common, task, trials, no_retrieval, teacher, log_path);
    if (*ingest) return cmd_ingest(common, corpus);
    if (*cluster) return cmd_cluster(common);
    if (*inspect) return cmd_inspect(common, query, all);
    if (*eval) return cmd_eval(common, suite, trials);
    if (*serve) return cmd_serve(common, host, port);
    if (*tasks) return cmd_tasks();
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
