#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "memo/embedding.hpp"
#include "memo/error.hpp"
#include "memo/model.hpp"

namespace memo {

using nlohmann::json;

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::kDecompose: return "decompose";
    case ModelRole::kGenerate: return "generate";
    case ModelRole::kParaphrase: return "paraphrase";
    case ModelRole::kCompress: return "compress";
  }
  return "unknown";
}

std::optional<ModelRole> model_role_from_string(std::string_view s) {
  for (auto r : {ModelRole::kDecompose, ModelRole::kGenerate, ModelRole::kParaphrase,
                 ModelRole::kCompress}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
    } else {
      if (space) out += ' ';
      out += c;
      space = false;
    }
  }
  return out;
}

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string raw_key(const ModelRequest& request) {
  for (auto m = request.messages.rbegin(); m != request.messages.rend(); ++m) {
    const auto pos = m->text.rfind(kKeyMarker);
    if (pos == std::string::npos) continue;
    auto end = m->text.find('\n', pos);
    const auto start = pos + kKeyMarker.size();
    return normalize_whitespace(
        m->text.substr(start, end == std::string::npos ? std::string::npos : end - start));
  }
  return {};
}

std::string all_text(const ModelRequest& request) {
  std::string out;
  for (const auto& m : request.messages) {
    out += m.text;
    out += '\n';
  }
  return out;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

std::string extract_key(const ModelRequest& request) { return lower(raw_key(request)); }

std::string request_digest(const ModelRequest& request) {
  std::string canon = "v1|" + std::string(to_string(request.role));
  for (const auto& m : request.messages) {
    canon += "|" + m.speaker + ":" + normalize_whitespace(m.text);
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
  return std::string("v1:") + buf;
}

ModelResponse ModelClient::complete(const ModelRequest& request) {
  if (request.messages.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model request has no messages");
  }
  const auto start = std::chrono::steady_clock::now();
  ModelResponse out;
  out.text = complete_text(request);
  out.backend_id = id();
  out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  if (out.text.size() > request.budget) {
    out.text.resize(request.budget);
    out.truncated = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scripted
// ---------------------------------------------------------------------------

void ScriptedModel::add_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read fixture file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptRecord, path.string() + ": " + e.what());
  }
  const json& list = j.is_object() ? j.at("fixtures") : j;
  for (const auto& f : list) {
    Fixture fx;
    fx.role = f.at("role").get<std::string>();
    if (!model_role_from_string(fx.role)) {
      throw Error(ErrorCode::kCorruptRecord, path.string() + ": unknown role '" + fx.role + "'");
    }
    fx.key = lower(normalize_whitespace(f.at("key").get<std::string>()));
    fx.when_contains = f.value("when_contains", std::vector<std::string>{});
    fx.unless_contains = f.value("unless_contains", std::vector<std::string>{});
    const json& r = f.at("response");
    fx.response = r.is_string() ? r.get<std::string>() : r.dump();
    fx.source = path.filename().string();
    fixtures_.push_back(std::move(fx));
  }
}

std::unique_ptr<ScriptedModel> ScriptedModel::from_path(const std::filesystem::path& path) {
  auto model = std::make_unique<ScriptedModel>();
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) model->add_file(f);
  } else {
    model->add_file(path);
  }
  return model;
}

std::string ScriptedModel::complete_text(const ModelRequest& request) {
  const std::string role(to_string(request.role));
  const std::string key = extract_key(request);
  const std::string context = all_text(request);
  for (const auto& f : fixtures_) {
    if (f.role != role || (f.key != "*" && f.key != key)) continue;
    const bool all_present = std::all_of(f.when_contains.begin(), f.when_contains.end(),
                                         [&](const auto& s) { return context.find(s) != std::string::npos; });
    const bool none_present = std::none_of(f.unless_contains.begin(), f.unless_contains.end(),
                                           [&](const auto& s) { return context.find(s) != std::string::npos; });
    if (!all_present || !none_present) continue;
    std::string out = f.response;
    // JSON-escaped key so "{key}" can sit inside a JSON string response.
    std::string escaped = json(raw_key(request)).dump();
    escaped = escaped.substr(1, escaped.size() - 2);
    replace_all(out, "{key}", escaped);
    return out;
  }
  throw Error(ErrorCode::kFixtureMissing, "no " + role + " fixture for key '" + key + "'");
}

// ---------------------------------------------------------------------------
// Record / replay
// ---------------------------------------------------------------------------

std::string RecordingModel::complete_text(const ModelRequest& request) {
  // Record the untruncated text so replay reproduces complete() exactly.
  const std::string digest = request_digest(request);
  const std::string role(to_string(request.role));
  std::string text;
  try {
    text = inner_.complete(request).text;
  } catch (const Error& e) {
    std::lock_guard lock(mu_);
    calls_.push_back({digest, role, "", e.code(), e.what()});
    throw;
  }
  std::lock_guard lock(mu_);
  calls_.push_back({digest, role, text, std::nullopt, ""});
  return text;
}

std::vector<RecordedCall> RecordingModel::session() const {
  std::lock_guard lock(mu_);
  return calls_;
}

void RecordingModel::export_session(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& c : session()) {
    json j{{"digest", c.digest}, {"role", c.role}, {"response", c.response}};
    if (c.error) j["error"] = {{"code", to_string(*c.error)}, {"message", c.error_message}};
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed to write " + path.string());
}

std::vector<RecordedCall> import_session(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<RecordedCall> out;
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      RecordedCall call{j.at("digest").get<std::string>(), j.at("role").get<std::string>(),
                        j.at("response").get<std::string>(), std::nullopt, ""};
      if (j.contains("error")) {
        const auto code = error_code_from_string(j.at("error").at("code").get<std::string>());
        if (!code) {
          throw Error(ErrorCode::kCorruptRecord, path.string() + ":" + std::to_string(n) + ": unknown error code");
        }
        call.error = code;
        call.error_message = j.at("error").value("message", "");
      }
      out.push_back(std::move(call));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCorruptRecord, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

size_t ReplayModel::remaining() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

std::string ReplayModel::complete_text(const ModelRequest& request) {
  std::lock_guard lock(mu_);
  if (calls_.empty()) throw Error(ErrorCode::kReplayExhausted, "replay session exhausted");
  const std::string digest = request_digest(request);
  if (calls_.front().digest != digest) {
    throw Error(ErrorCode::kReplayMismatch, "replay expected request " + calls_.front().digest +
                                                " but got " + digest + " (prompt changed?)");
  }
  RecordedCall call = std::move(calls_.front());
  calls_.pop_front();
  if (call.error) throw Error(*call.error, call.error_message);
  return call.response;
}

}  // namespace memo
