#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memo/config.hpp"
#include "memo/dsl.hpp"
#include "memo/embedding.hpp"
#include "memo/model.hpp"
#include "memo/simenv.hpp"
#include "memo/skillbook.hpp"

namespace memo {

struct Subtask {
  std::string description;
  std::string action;
  std::vector<std::string> objects;
};

/// Entries retrieved for one subtask, resolved to their payloads.
struct RetrievedContext {
  RetrievalResult result;
  std::vector<std::string> globals;
  std::vector<std::string> guidance;
  std::vector<Template> templates;
};

struct GeneratedProgram {
  SkillProgram program;     // template calls expanded, validated
  std::string model_text;   // last raw model answer
  bool used_template = false;
  int repairs = 0;
};

struct EpisodeOptions {
  bool no_retrieval = false;  // baseline: no skillbook reads or writes
  /// Receives every episode event as JSON ({"type": ...}).
  std::function<void(const nlohmann::json&)> on_event;
  const std::atomic<bool>* cancel = nullptr;
};

struct EpisodeResult {
  bool success = false;
  int attempts = 0;
  int feedback_count = 0;
  nlohmann::json log;  // deterministic; no timestamps or latencies
};

/// The LLM policy: decompose, retrieve, generate, execute, learn.
class Policy {
 public:
  Policy(Skillbook& book, ModelClient& model, const Embedder& embedder, Prompts prompts,
         Config config, const SkillRegistry& registry = SkillRegistry::standard());

  /// Model answer: [{"description", "action", "objects": [...]}, ...].
  /// Object labels must exist in the scene; one retry, then Error{kInvalidArgument}.
  std::vector<Subtask> decompose(const std::string& task, const SceneGraph& scene);

  RetrievalQuery build_query(const Subtask& subtask, const SceneGraph& scene) const;
  RetrievedContext retrieve(const Subtask& subtask, const SceneGraph& scene) const;

  /// Prompt order: prior, scene, global guidance, guidance, templates,
  /// corrections, request. Invalid programs get up to repair_rounds retries
  /// with the errors appended; then the last error is thrown.
  GeneratedProgram generate(const Subtask& subtask, const SceneGraph& scene,
                            const RetrievedContext& context,
                            const std::vector<std::string>& corrections);

  EpisodeResult run_episode(const TaskSpec& task, Teacher& teacher,
                            const EpisodeOptions& options = {});

  const Config& config() const { return config_; }
  Skillbook& book() { return book_; }

 private:
  void learn_template(const Subtask& subtask, const SkillProgram& program,
                      const SceneGraph& scene, const std::string& task_name, int iteration);

  Skillbook& book_;
  ModelClient& model_;
  const Embedder& embedder_;
  Prompts prompts_;
  Config config_;
  const SkillRegistry& registry_;
};

/// Same calls, parameters and bindings; only the default literals may differ.
/// Successful executions of an already known procedure add no template.
bool same_procedure(const Template& a, const Template& b);

/// Strips an optional ``` fence around a model answer.
std::string strip_code_fence(std::string_view text);

}  // namespace memo
