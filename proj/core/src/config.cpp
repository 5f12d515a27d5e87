#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "memo/config.hpp"
#include "memo/error.hpp"

namespace memo {

using nlohmann::json;

json to_json(const Config& c) {
  return {{"lambda_act", c.retrieval.lambda_act},
          {"lambda_obj", c.retrieval.lambda_obj},
          {"lambda_scene", c.retrieval.lambda_scene},
          {"top_k", c.retrieval.top_k},
          {"min_score", c.retrieval.min_score},
          {"max_globals", c.retrieval.max_globals},
          {"cluster_threshold", c.cluster_threshold},
          {"use_scene_key", c.use_scene_key},
          {"max_feedback_per_attempt", c.max_feedback_per_attempt},
          {"max_attempts", c.max_attempts},
          {"repair_rounds", c.repair_rounds},
          {"embedding_dim", c.embedding_dim},
          {"wall_clock", c.wall_clock},
          {"step_delay_ms", c.step_delay_ms},
          {"heartbeat_timeout_ms", c.heartbeat_timeout_ms},
          {"prompt_version", c.prompt_version}};
}

Config config_from_json(const json& j) {
  Config c;
  const json defaults = to_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
  }
  json merged = defaults;
  merged.update(j);
  try {
    c.retrieval.lambda_act = merged.at("lambda_act").get<double>();
    c.retrieval.lambda_obj = merged.at("lambda_obj").get<double>();
    c.retrieval.lambda_scene = merged.at("lambda_scene").get<double>();
    c.retrieval.top_k = merged.at("top_k").get<size_t>();
    c.retrieval.min_score = merged.at("min_score").get<double>();
    c.retrieval.max_globals = merged.at("max_globals").get<size_t>();
    c.cluster_threshold = merged.at("cluster_threshold").get<double>();
    c.use_scene_key = merged.at("use_scene_key").get<bool>();
    c.max_feedback_per_attempt = merged.at("max_feedback_per_attempt").get<int>();
    c.max_attempts = merged.at("max_attempts").get<int>();
    c.repair_rounds = merged.at("repair_rounds").get<int>();
    c.embedding_dim = merged.at("embedding_dim").get<size_t>();
    c.wall_clock = merged.at("wall_clock").get<bool>();
    c.step_delay_ms = merged.at("step_delay_ms").get<int>();
    c.heartbeat_timeout_ms = merged.at("heartbeat_timeout_ms").get<int>();
    c.prompt_version = merged.at("prompt_version").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad config value: ") + e.what());
  }
  if (!(c.retrieval.lambda_act > 0) || !(c.retrieval.lambda_obj > 0) || c.retrieval.lambda_scene < 0 ||
      c.retrieval.top_k == 0) {
    throw Error(ErrorCode::kInvalidArgument, "retrieval weights/top_k out of range");
  }
  if (c.max_attempts < 1 || c.max_feedback_per_attempt < 0 || c.repair_rounds < 0) {
    throw Error(ErrorCode::kInvalidArgument, "episode limits out of range");
  }
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
}

std::filesystem::path asset_dir() {
  if (const char* env = std::getenv("MEMO_ASSETS"); env && *env) return env;
#ifdef MEMO_DEFAULT_ASSET_DIR
  if (std::filesystem::exists(MEMO_DEFAULT_ASSET_DIR)) return MEMO_DEFAULT_ASSET_DIR;
#endif
#ifdef MEMO_INSTALLED_ASSET_DIR
  return MEMO_INSTALLED_ASSET_DIR;
#else
  return "assets";
#endif
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

Prompts Prompts::load(const std::filesystem::path& dir, const std::string& version) {
  auto file = [&](const char* name) { return read_file(dir / (std::string(name) + "." + version + ".txt")); };
  Prompts p;
  p.version = version;
  p.system = file("system");
  p.decompose = file("decompose");
  p.generate = file("generate");
  p.paraphrase = file("paraphrase");
  p.compress = file("compress");
  return p;
}

Prompts Prompts::load_default(const std::string& version) {
  return load(asset_dir() / "prompts", version);
}

std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  size_t i = 0;
  while (i < tmpl.size()) {
    const size_t open = tmpl.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    const size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    out.append(tmpl.substr(i, open - i));
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    auto it = vars.find(name);
    if (it != vars.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    i = close + 2;
  }
  return out;
}

}  // namespace memo
