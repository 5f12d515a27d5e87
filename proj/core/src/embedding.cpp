#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "memo/embedding.hpp"

namespace memo {

double Vector::norm() const {
  double s = 0;
  for (double x : c_) s += x * x;
  return std::sqrt(s);
}

bool Vector::is_zero() const {
  return std::all_of(c_.begin(), c_.end(), [](double x) { return x == 0.0; });
}

Vector Vector::normalized() const {
  const double n = norm();
  if (n == 0.0) return *this;
  std::vector<double> out(c_.size());
  for (size_t i = 0; i < c_.size(); ++i) out[i] = c_[i] / n;
  return Vector(std::move(out));
}

double cosine(const Vector& a, const Vector& b) {
  if (a.dim() != b.dim()) return 0.0;
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.dim(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<Vector> Embedder::embed_batch(const std::vector<std::string>& texts) const {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Vector HashingEmbedder::embed(std::string_view text) const {
  const auto tokens = tokenize(text);
  std::vector<double> acc(dim_, 0.0);
  if (tokens.empty()) return Vector(std::move(acc));

  auto add = [&](const std::string& feature) {
    const std::uint64_t h = fnv1a64(feature);
    const size_t bucket = static_cast<size_t>(h % dim_);
    acc[bucket] += (h >> 63) ? -1.0 : 1.0;
  };
  for (size_t i = 0; i < tokens.size(); ++i) {
    add("u:" + tokens[i]);
    if (i + 1 < tokens.size()) add("b:" + tokens[i] + " " + tokens[i + 1]);
  }
  Vector v(std::move(acc));
  // Signed buckets can cancel exactly; fall back to the first unigram alone.
  if (v.is_zero()) {
    std::vector<double> single(dim_, 0.0);
    const std::uint64_t h = fnv1a64("u:" + tokens.front());
    single[h % dim_] = 1.0;
    return Vector(std::move(single));
  }
  return v.normalized();
}

EmbeddingKey embed_key(const Embedder& embedder, std::string_view action_text,
                       const std::vector<std::string>& object_texts, const SceneGraph* scene) {
  EmbeddingKey key;
  key.action_text = std::string(action_text);
  key.object_texts = object_texts;
  key.v_act = embedder.embed(action_text);

  std::vector<std::string> sorted = object_texts;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> sum(embedder.dimension(), 0.0);
  for (const auto& text : sorted) {
    const Vector v = embedder.embed(text);
    for (size_t i = 0; i < sum.size() && i < v.dim(); ++i) sum[i] += v[i];
  }
  key.v_obj = Vector(std::move(sum)).normalized();

  if (scene != nullptr) key.v_scene = embedder.embed(scene_digest(*scene));
  return key;
}

EmbeddingKey global_key(const Embedder& embedder) {
  EmbeddingKey key;
  key.action_text = std::string(kGlobalMarker);
  key.v_act = Vector::zero(embedder.dimension());
  key.v_obj = Vector::zero(embedder.dimension());
  key.is_global = true;
  return key;
}

std::string scene_digest(const SceneGraph& scene) {
  auto cm = [](double v) {
    const double r = std::round(v * 100.0) / 100.0;
    std::ostringstream os;
    os << (r == 0.0 ? 0.0 : r);
    return os.str();
  };
  std::vector<std::string> nodes;
  for (const auto& n : scene.nodes) {
    nodes.push_back(n.label + "@(" + cm(n.pose.x) + "," + cm(n.pose.y) + "," + cm(n.pose.z) + ")");
  }
  std::vector<std::string> edges;
  for (const auto& e : scene.edges) edges.push_back(edge_text(e));
  std::sort(nodes.begin(), nodes.end());
  std::sort(edges.begin(), edges.end());

  std::string out;
  for (const auto& n : nodes) out += n + "; ";
  out += "| ";
  for (const auto& e : edges) out += e + "; ";
  return out;
}

}  // namespace memo
