#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "memo/config.hpp"
#include "memo/dsl.hpp"
#include "memo/embedding.hpp"
#include "memo/model.hpp"
#include "memo/skillbook.hpp"

namespace memo {

struct FeedbackContext {
  std::string task_name;
  std::string action_label;
  std::vector<std::string> object_labels;
  SceneGraph scene;
  std::optional<SkillProgram> failed_program;
  int iteration = 0;
};

struct ParsedFeedback {
  std::string local_text;
  std::optional<std::string> general_text;
  std::string raw_text;
  bool model_fallback = false;
};

/// True when `text` mentions none of the scene's object labels (the table
/// itself is not an object). Matching is on whole lowercase word sequences.
bool is_task_invariant(std::string_view text, const SceneGraph& scene);

/// Paraphrases a correction and optionally extracts task-invariant guidance.
/// The model answers {"local": "...", "general": "..." | null}. One retry on
/// an invalid answer; after that, or if the model is unavailable, the raw
/// text is kept verbatim with no general guidance and model_fallback set.
ParsedFeedback parse_feedback(const std::string& raw, const FeedbackContext& ctx,
                              ModelClient& model, const Prompts& prompts);

/// Inserts the local entry (and the global entry, if any) as one batch.
/// Exact duplicates of active entries are skipped. Returns new ids.
std::vector<EntryId> ingest(const ParsedFeedback& parsed, const FeedbackContext& ctx,
                            Skillbook& book, const Embedder& embedder, bool use_scene_key = false);

struct IngestReport {
  size_t records = 0;         // non-blank lines
  size_t records_added = 0;   // records that produced at least one entry
  size_t entries_added = 0;
  size_t skipped = 0;         // duplicates
  size_t errors = 0;          // malformed or failed records
  std::vector<std::string> error_messages;
};

nlohmann::json to_json(const IngestReport& report);

/// Replays a JSON-Lines corpus of
///   {raw_text, task_name, action_label, object_labels, scene_file, iteration}
/// in file order. scene_file is a task file, resolved against the corpus
/// directory and then <assets>/tasks.
IngestReport ingest_corpus(const std::filesystem::path& path, Skillbook& book, ModelClient& model,
                           const Embedder& embedder, const Prompts& prompts,
                           bool use_scene_key = false);

}  // namespace memo
