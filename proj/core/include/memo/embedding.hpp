#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memo/scene.hpp"

namespace memo {

/// Fixed-dimension embedding. Unit L2 norm, or all zeros for empty text.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::vector<double> components) : c_(std::move(components)) {}

  static Vector zero(size_t dim) { return Vector(std::vector<double>(dim, 0.0)); }

  size_t dim() const { return c_.size(); }
  std::span<const double> components() const { return c_; }
  double operator[](size_t i) const { return c_[i]; }
  double norm() const;
  bool is_zero() const;
  /// Scaled to unit norm; zero stays zero.
  Vector normalized() const;

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> c_;
};

/// Cosine similarity clamped to [-1, 1]; 0 if either vector is zero.
double cosine(const Vector& a, const Vector& b);

/// 64-bit FNV-1a. Used for feature hashing and request digests.
std::uint64_t fnv1a64(std::string_view bytes);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Vector embed(std::string_view text) const = 0;
  virtual std::vector<Vector> embed_batch(const std::vector<std::string>& texts) const;
  virtual size_t dimension() const = 0;
  /// Pinned in the skillbook header; a mismatch refuses to load.
  virtual std::string id() const = 0;
};

/// Lowercased word unigrams and bigrams hashed into `dim` buckets with a
/// sign bit, then L2-normalized. Bit-stable across platforms.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(size_t dim = 256) : dim_(dim) {}

  Vector embed(std::string_view text) const override;
  size_t dimension() const override { return dim_; }
  std::string id() const override { return "hashing-v1-d" + std::to_string(dim_); }

 private:
  size_t dim_;
};

/// Client for an embedding service speaking
///   POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}
/// The dimension is probed once at construction.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(std::string base_url, std::chrono::milliseconds timeout,
                 std::string embedder_id = "remote");
  ~RemoteEmbedder() override;

  Vector embed(std::string_view text) const override;
  std::vector<Vector> embed_batch(const std::vector<std::string>& texts) const override;
  size_t dimension() const override { return dim_; }
  std::string id() const override { return id_ + "-d" + std::to_string(dim_); }

 private:
  std::vector<Vector> post(const std::vector<std::string>& texts) const;

  std::string base_url_;
  std::chrono::milliseconds timeout_;
  std::string id_;
  size_t dim_ = 0;
  mutable std::mutex mu_;  // one request at a time per connection
};

/// Lowercase alphanumeric word tokens.
std::vector<std::string> tokenize(std::string_view text);

inline constexpr std::string_view kGlobalMarker = "<global>";

/// Key identifying a skillbook entry: action/object(s)[/scene] vectors.
struct EmbeddingKey {
  Vector v_act;
  Vector v_obj;
  std::optional<Vector> v_scene;
  std::string action_text;
  std::vector<std::string> object_texts;
  bool is_global = false;

  bool operator==(const EmbeddingKey&) const = default;
};

/// v_act = embed(action); v_obj = renormalized mean of the object embeddings
/// (zero for no objects; order-independent); v_scene from scene_digest().
EmbeddingKey embed_key(const Embedder& embedder, std::string_view action_text,
                       const std::vector<std::string>& object_texts,
                       const SceneGraph* scene = nullptr);

/// The shared key v_g for task-invariant guidance.
EmbeddingKey global_key(const Embedder& embedder);

/// Sorted "label@(x,y,z)" list plus sorted relation sentences, rounded to cm.
std::string scene_digest(const SceneGraph& scene);

}  // namespace memo
