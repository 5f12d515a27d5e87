#include <httplib.h>

#include <json.hpp>

#include "memo/embedding.hpp"
#include "memo/error.hpp"
#include "remote_url.hpp"

namespace memo {

RemoteEmbedder::RemoteEmbedder(std::string base_url, std::chrono::milliseconds timeout,
                               std::string embedder_id)
    : base_url_(std::move(base_url)), timeout_(timeout), id_(std::move(embedder_id)) {
  const auto probe = post({"dimension probe"});
  if (probe.size() != 1 || probe.front().dim() == 0) {
    throw Error(ErrorCode::kEmbeddingUnavailable, "embedding service returned no vector");
  }
  dim_ = probe.front().dim();
}

RemoteEmbedder::~RemoteEmbedder() = default;

Vector RemoteEmbedder::embed(std::string_view text) const {
  if (tokenize(text).empty()) return Vector::zero(dim_);
  auto out = post({std::string(text)});
  return out.front();
}

std::vector<Vector> RemoteEmbedder::embed_batch(const std::vector<std::string>& texts) const {
  std::vector<Vector> out(texts.size());
  std::vector<std::string> pending;
  std::vector<size_t> where;
  for (size_t i = 0; i < texts.size(); ++i) {
    if (tokenize(texts[i]).empty()) {
      out[i] = Vector::zero(dim_);
    } else {
      pending.push_back(texts[i]);
      where.push_back(i);
    }
  }
  if (!pending.empty()) {
    auto got = post(pending);
    for (size_t k = 0; k < got.size(); ++k) out[where[k]] = std::move(got[k]);
  }
  return out;
}

std::vector<Vector> RemoteEmbedder::post(const std::vector<std::string>& texts) const {
  const auto url = detail::split_url(base_url_);
  std::lock_guard lock(mu_);
  httplib::Client client(url.origin);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);

  const nlohmann::json body = {{"texts", texts}};
  auto res = client.Post(url.path + "/embed", body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::kEmbeddingUnavailable,
                "embedding request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kEmbeddingUnavailable,
                "embedding service returned HTTP " + std::to_string(res->status));
  }
  std::vector<Vector> out;
  try {
    const auto parsed = nlohmann::json::parse(res->body);
    for (const auto& v : parsed.at("vectors")) {
      out.push_back(Vector(v.get<std::vector<double>>()).normalized());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kEmbeddingUnavailable,
                std::string("malformed embedding response: ") + e.what());
  }
  if (out.size() != texts.size()) {
    throw Error(ErrorCode::kEmbeddingUnavailable, "embedding service returned wrong count");
  }
  for (const auto& v : out) {
    if (dim_ != 0 && v.dim() != dim_) {
      throw Error(ErrorCode::kEmbeddingUnavailable, "embedding dimension changed mid-session");
    }
  }
  return out;
}

}  // namespace memo
