#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "memo/skillbook.hpp"

namespace memo {

/// Every tunable in one place; embedded in each episode log and report.
struct Config {
  RetrievalParams retrieval;
  double cluster_threshold = 0.80;
  bool use_scene_key = false;
  int max_feedback_per_attempt = 5;
  int max_attempts = 2;
  int repair_rounds = 2;
  size_t embedding_dim = 256;
  bool wall_clock = false;
  int step_delay_ms = 0;
  int heartbeat_timeout_ms = 30000;
  std::string prompt_version = "v1";
};

nlohmann::json to_json(const Config& config);
/// Missing keys keep their defaults; unknown keys are rejected.
Config config_from_json(const nlohmann::json& j);
Config load_config(const std::filesystem::path& path);

/// $MEMO_ASSETS, else the source-tree assets, else the installed copy.
std::filesystem::path asset_dir();

/// Versioned prompt texts loaded from <assets>/prompts/<name>.<version>.txt.
struct Prompts {
  std::string version;
  std::string system;
  std::string decompose;
  std::string generate;
  std::string paraphrase;
  std::string compress;

  static Prompts load(const std::filesystem::path& dir, const std::string& version = "v1");
  static Prompts load_default(const std::string& version = "v1");
};

/// Replaces every "{{name}}" with vars[name].
std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace memo
