#include <fstream>
#include <map>

#include "memo/error.hpp"
#include "memo/feedback.hpp"
#include "memo/simenv.hpp"

namespace memo {

using nlohmann::json;

bool is_task_invariant(std::string_view text, const SceneGraph& scene) {
  const auto words = tokenize(text);
  for (const auto& node : scene.nodes) {
    if (node.label == "table") continue;
    const auto label = tokenize(node.label);
    if (label.empty() || label.size() > words.size()) continue;
    for (size_t i = 0; i + label.size() <= words.size(); ++i) {
      if (std::equal(label.begin(), label.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        return false;
      }
    }
  }
  return true;
}

namespace {

std::string join(const std::vector<std::string>& xs, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) out += (i ? sep : "") + xs[i];
  return out;
}

// Returns an empty string when the answer satisfies the contract.
std::string check_answer(const std::string& text, const SceneGraph& scene, ParsedFeedback& out) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    return "answer is not a JSON object";
  }
  if (!j.is_object() || !j.contains("local") || !j.at("local").is_string()) {
    return "answer needs a string field \"local\"";
  }
  out.local_text = normalize_whitespace(j.at("local").get<std::string>());
  if (out.local_text.empty()) return "\"local\" must not be empty";
  out.general_text.reset();
  if (j.contains("general") && !j.at("general").is_null()) {
    if (!j.at("general").is_string()) return "\"general\" must be a string or null";
    std::string general = normalize_whitespace(j.at("general").get<std::string>());
    if (!general.empty()) {
      if (!is_task_invariant(general, scene)) {
        return "\"general\" mentions an object from the current scene; general guidance must be task-invariant";
      }
      out.general_text = std::move(general);
    }
  }
  return {};
}

}  // namespace

ParsedFeedback parse_feedback(const std::string& raw, const FeedbackContext& ctx, ModelClient& model,
                              const Prompts& prompts) {
  if (normalize_whitespace(raw).empty()) {
    throw Error(ErrorCode::kInvalidArgument, "feedback text is empty");
  }
  ParsedFeedback out;
  out.raw_text = raw;

  ModelRequest req;
  req.role = ModelRole::kParaphrase;
  req.budget = 4000;
  req.messages.push_back({"system", prompts.system});
  req.messages.push_back(
      {"user", fill(prompts.paraphrase, {{"task", ctx.task_name},
                                         {"action", ctx.action_label},
                                         {"objects", join(ctx.object_labels, ", ")},
                                         {"scene", ctx.scene.describe()},
                                         {"feedback", normalize_whitespace(raw)}})});
  try {
    for (int round = 0; round < 2; ++round) {
      const auto res = model.complete(req);
      const std::string problem = check_answer(res.text, ctx.scene, out);
      if (problem.empty()) return out;
      req.messages.push_back({"assistant", res.text});
      req.messages.push_back({"user", "Your answer was rejected: " + problem +
                                          ". Answer again with the same JSON shape.\nRequest: " +
                                          normalize_whitespace(raw)});
    }
  } catch (const Error& e) {
    // A diverging replay is a reproducibility bug, not an unavailable model.
    if (e.code() == ErrorCode::kReplayMismatch || e.code() == ErrorCode::kReplayExhausted) throw;
  }
  out.local_text = normalize_whitespace(raw);
  out.general_text.reset();
  out.model_fallback = true;
  return out;
}

std::vector<EntryId> ingest(const ParsedFeedback& parsed, const FeedbackContext& ctx, Skillbook& book,
                            const Embedder& embedder, bool use_scene_key) {
  if (parsed.local_text.empty()) throw Error(ErrorCode::kInvalidArgument, "parsed feedback has no local text");
  if (ctx.action_label.empty()) throw Error(ErrorCode::kInvalidArgument, "feedback context has no action");
  if (parsed.general_text && !is_task_invariant(*parsed.general_text, ctx.scene)) {
    throw Error(ErrorCode::kInvalidArgument, "general guidance mentions a scene object");
  }

  Provenance prov;
  prov.task_name = ctx.task_name;
  prov.source = Source::kHuman;
  prov.iteration = ctx.iteration;
  prov.model_fallback = parsed.model_fallback;
  if (ctx.failed_program) prov.failed_program = render(*ctx.failed_program);

  const auto view = book.snapshot();
  Skillbook::Batch batch;

  SkillbookEntry local;
  local.key = embed_key(embedder, ctx.action_label, ctx.object_labels, use_scene_key ? &ctx.scene : nullptr);
  local.payload = Payload::guidance(parsed.local_text);
  local.provenance = prov;
  if (!view.find_duplicate(local.key, local.payload)) batch.inserts.push_back(std::move(local));

  if (parsed.general_text) {
    SkillbookEntry global;
    global.key = global_key(embedder);
    global.payload = Payload::global(*parsed.general_text);
    global.provenance = prov;
    if (!view.find_duplicate(global.key, global.payload)) batch.inserts.push_back(std::move(global));
  }
  return book.publish(std::move(batch));
}

json to_json(const IngestReport& r) {
  return {{"records", r.records},       {"records_added", r.records_added},
          {"entries_added", r.entries_added}, {"skipped", r.skipped},
          {"errors", r.errors},         {"error_messages", r.error_messages}};
}

IngestReport ingest_corpus(const std::filesystem::path& path, Skillbook& book, ModelClient& model,
                           const Embedder& embedder, const Prompts& prompts, bool use_scene_key) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read corpus " + path.string());

  std::map<std::string, SceneGraph> scenes;
  auto scene_for = [&](const std::string& file) -> const SceneGraph& {
    auto it = scenes.find(file);
    if (it != scenes.end()) return it->second;
    std::filesystem::path p = path.parent_path() / file;
    if (!std::filesystem::exists(p)) p = asset_dir() / "tasks" / file;
    const TaskSpec spec = load_task(p);
    return scenes.emplace(file, build_scene_graph(spec.initial_world)).first->second;
  };

  IngestReport report;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++report.records;
    try {
      const json j = json::parse(line);
      FeedbackContext ctx;
      ctx.task_name = j.at("task_name").get<std::string>();
      ctx.action_label = j.at("action_label").get<std::string>();
      ctx.object_labels = j.at("object_labels").get<std::vector<std::string>>();
      ctx.iteration = j.value("iteration", 0);
      ctx.scene = scene_for(j.at("scene_file").get<std::string>());
      const std::string raw = j.at("raw_text").get<std::string>();
      const ParsedFeedback parsed = parse_feedback(raw, ctx, model, prompts);
      const auto ids = ingest(parsed, ctx, book, embedder, use_scene_key);
      if (ids.empty()) {
        ++report.skipped;
      } else {
        ++report.records_added;
        report.entries_added += ids.size();
      }
    } catch (const std::exception& e) {
      ++report.errors;
      report.error_messages.push_back(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return report;
}

}  // namespace memo
