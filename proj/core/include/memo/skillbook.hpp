#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memo/dsl.hpp"
#include "memo/embedding.hpp"

namespace memo {

using EntryId = std::uint64_t;

enum class PayloadType { kGuidance, kGlobalGuidance, kTemplate };
enum class Source { kHuman, kSuccess, kClustering };

std::string_view to_string(PayloadType type);
std::string_view to_string(Source source);

struct Payload {
  PayloadType type = PayloadType::kGuidance;
  std::string text;               // guidance and global guidance
  std::optional<Template> tmpl;   // template entries

  static Payload guidance(std::string text) { return {PayloadType::kGuidance, std::move(text), {}}; }
  static Payload global(std::string text) {
    return {PayloadType::kGlobalGuidance, std::move(text), {}};
  }
  static Payload from_template(Template t) { return {PayloadType::kTemplate, {}, std::move(t)}; }

  bool operator==(const Payload&) const = default;
};

struct Provenance {
  std::string task_name;
  Source source = Source::kHuman;
  int iteration = 0;
  std::uint64_t generation = 0;  // stamped when published
  bool model_fallback = false;
  std::optional<std::string> failed_program;
  std::string created_at;

  bool operator==(const Provenance&) const = default;
};

struct SkillbookEntry {
  EntryId id = 0;  // 0 asks the skillbook to assign the next id
  EmbeddingKey key;
  Payload payload;
  Provenance provenance;
  bool active = true;
  std::string created_at;

  bool operator==(const SkillbookEntry&) const = default;
};

struct SkillbookHeader {
  int schema_version = 1;
  size_t embedding_dimension = 256;
  std::string embedder_id;

  bool operator==(const SkillbookHeader&) const = default;
};

inline constexpr int kSchemaVersion = 1;

struct RetrievalQuery {
  Vector q_act;
  Vector q_obj;
  std::optional<Vector> q_scene;
  std::string raw_action;
  std::vector<std::string> raw_objects;
};

struct RetrievalParams {
  double lambda_act = 1.0;
  double lambda_obj = 1.0;
  double lambda_scene = 0.0;
  size_t top_k = 4;
  double min_score = 0.35;
  size_t max_globals = 8;
};

struct ScoredEntry {
  EntryId id = 0;
  double score = 0;
  bool operator==(const ScoredEntry&) const = default;
};

struct RetrievalResult {
  std::vector<ScoredEntry> ranked;  // score desc, id asc
  std::vector<EntryId> globals;     // most recent first
  std::uint64_t generation = 0;
};

/// r(q, v): weighted mean of the action, object and (optional) scene cosines.
/// The scene term drops out of numerator and denominator when either scene
/// vector is absent or its weight is zero.
double retrieval_score(const RetrievalQuery& q, const EmbeddingKey& key,
                       const RetrievalParams& params);

/// Same weighting applied between two stored keys (used for clustering).
double key_similarity(const EmbeddingKey& a, const EmbeddingKey& b,
                      const RetrievalParams& params);

RetrievalQuery query_from_key(const EmbeddingKey& key);

struct SkillbookStats {
  size_t guidance_active = 0, guidance_inactive = 0;
  size_t global_active = 0, global_inactive = 0;
  size_t template_active = 0, template_inactive = 0;
  size_t guidance_chars = 0;  // sum of active guidance text lengths
  size_t global_chars = 0;    // sum of active global guidance text lengths

  bool operator==(const SkillbookStats&) const = default;
};

nlohmann::json to_json(const SkillbookStats& stats);

namespace detail {
struct BookState;
}

/// Immutable view of one skillbook generation. Cheap to copy and safe to
/// share across threads.
class SkillbookView {
 public:
  SkillbookView() = default;

  std::uint64_t generation() const;
  const SkillbookHeader& header() const;
  size_t size() const;
  std::vector<std::shared_ptr<const SkillbookEntry>> entries() const;
  std::shared_ptr<const SkillbookEntry> find(EntryId id) const;

  /// Exact brute-force scan. Throws Error{kInvalidArgument} for non-positive
  /// action/object weights, negative scene weight or top_k == 0, and
  /// Error{kDimensionMismatch} for a query of the wrong dimension.
  RetrievalResult retrieve(const RetrievalQuery& q, const RetrievalParams& params) const;
  SkillbookStats stats() const;

  /// An active entry with identical key vectors and payload, if any.
  std::optional<EntryId> find_duplicate(const EmbeddingKey& key, const Payload& payload) const;

 private:
  friend class Skillbook;
  explicit SkillbookView(std::shared_ptr<const detail::BookState> state)
      : state_(std::move(state)) {}
  std::shared_ptr<const detail::BookState> state_;
};

/// Timestamp source for created_at fields, given the generation being
/// published. logical_clock() keeps files reproducible.
using Clock = std::function<std::string(std::uint64_t generation)>;
Clock logical_clock();
Clock wall_clock();

/// The vector database of guidance, global guidance and template entries.
///
/// Many readers, one writer: every mutation builds a new immutable state and
/// publishes it with a single pointer swap, bumping the generation by one.
/// When attached to a file, each published batch is appended as JSON-Lines
/// records (entries and tombstones) before it becomes visible.
class Skillbook {
 public:
  explicit Skillbook(SkillbookHeader header, Clock clock = logical_clock());
  ~Skillbook();
  Skillbook(const Skillbook&) = delete;
  Skillbook& operator=(const Skillbook&) = delete;

  /// Reads a store file. An empty file yields an empty book with `expected`
  /// as its header. Throws Error{kCorruptRecord} naming the line, or
  /// Error{kEmbedderMismatch}.
  static std::unique_ptr<Skillbook> load(const std::filesystem::path& path,
                                         const SkillbookHeader& expected,
                                         Clock clock = logical_clock());

  /// load() when the file exists, otherwise a new book; attached either way.
  static std::unique_ptr<Skillbook> open(const std::filesystem::path& path,
                                         const SkillbookHeader& expected,
                                         Clock clock = logical_clock());

  /// In-memory copy of the current generation, not attached to any file.
  std::unique_ptr<Skillbook> clone() const;

  /// Appends future batches to `path`; writes the full current state first
  /// when the file is missing or empty.
  void attach(const std::filesystem::path& path);

  struct Batch {
    std::vector<SkillbookEntry> inserts;
    std::vector<EntryId> deactivations;
  };

  /// All-or-nothing: validates every insert and deactivation, then publishes
  /// one generation. An empty batch is a no-op. Returns the inserted ids.
  std::vector<EntryId> publish(Batch batch);

  EntryId insert(SkillbookEntry entry);
  size_t deactivate(const std::vector<EntryId>& ids);

  SkillbookView snapshot() const;
  RetrievalResult retrieve(const RetrievalQuery& q, const RetrievalParams& params) const {
    return snapshot().retrieve(q, params);
  }
  SkillbookStats stats() const { return snapshot().stats(); }
  std::uint64_t generation() const { return snapshot().generation(); }
  const SkillbookHeader& header() const { return header_; }

  /// Writes the full store (header, entries, tombstones) to `path`.
  void persist(const std::filesystem::path& path) const;

  /// Held by offline clustering; at most one job at a time.
  std::mutex& job_lock() { return job_mu_; }

 private:
  void swap_in(std::shared_ptr<const detail::BookState> next);

  SkillbookHeader header_;
  Clock clock_;
  mutable std::mutex state_mu_;
  std::mutex write_mu_;
  std::mutex job_mu_;
  std::shared_ptr<const detail::BookState> state_;
  std::optional<std::filesystem::path> file_;
};

// JSON codecs shared with logs and the service.
nlohmann::json to_json(const Vector& v);
nlohmann::json to_json(const Template& t);
Template template_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SkillbookEntry& e);
SkillbookEntry entry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RetrievalResult& r);

}  // namespace memo
