#include <cstdlib>

#include <httplib.h>

#include <json.hpp>

#include "memo/error.hpp"
#include "memo/model.hpp"
#include "remote_url.hpp"

namespace memo {

using nlohmann::json;

RemoteModel::RemoteModel(RemoteModelOptions options) : options_(std::move(options)) {
  if (options_.url.empty()) throw Error(ErrorCode::kInvalidArgument, "remote model URL is empty");
  if (options_.retries < 0) options_.retries = 0;
}

std::unique_ptr<RemoteModel> RemoteModel::from_env() {
  const char* url = std::getenv("MEMO_MODEL_URL");
  if (url == nullptr || *url == '\0') return nullptr;
  RemoteModelOptions opts;
  opts.url = url;
  if (const char* token = std::getenv("MEMO_MODEL_TOKEN")) opts.token = token;
  return std::make_unique<RemoteModel>(std::move(opts));
}

std::string RemoteModel::complete_text(const ModelRequest& request) {
  const auto url = detail::split_url(options_.url);
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.speaker}, {"content", m.text}});
  json body = {{"messages", messages}, {"max_chars", request.budget}};
  if (!options_.model.empty()) body["model"] = options_.model;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!options_.token.empty()) headers.emplace("Authorization", "Bearer " + options_.token);

  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    httplib::Client client(url.origin);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);
    client.set_write_timeout(options_.timeout);
    auto res = client.Post(url.path.empty() ? "/" : url.path, headers, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kModelUnavailable, "model endpoint returned HTTP " + std::to_string(res->status));
    }
    try {
      const auto j = json::parse(res->body);
      if (j.contains("text")) return j.at("text").get<std::string>();
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kModelUnavailable, std::string("malformed model response: ") + e.what());
    }
  }
  throw Error(ErrorCode::kModelTimeout, "model request failed after " +
                                            std::to_string(options_.retries + 1) +
                                            " attempt(s): " + last_error);
}

}  // namespace memo
