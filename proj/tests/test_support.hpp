#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "memo/config.hpp"
#include "memo/dsl.hpp"
#include "memo/embedding.hpp"
#include "memo/skillbook.hpp"

namespace memo::testing {

inline std::filesystem::path asset_path(const std::string& rel) {
  return std::filesystem::path(MEMO_TEST_ASSET_DIR) / rel;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("memo-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline SkillbookHeader hashing_header(size_t dim = 256) {
  return {kSchemaVersion, dim, HashingEmbedder(dim).id()};
}

// -- random generators -------------------------------------------------------

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Pose random_pose(Rng& rng) {
  return {uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 0, 1),
          uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3)};
}

/// Scene with `n` distinct labeled boxes.
inline SceneGraph random_scene(Rng& rng, int n) {
  static const char* kWords[] = {"red", "blue", "cup", "door", "handle", "can", "plate", "lid"};
  SceneGraph g;
  for (int i = 0; i < n; ++i) {
    SceneNode node;
    node.label = std::string(kWords[uniform_int(rng, 0, 7)]) + " " + std::to_string(i);
    node.cls = kWords[uniform_int(rng, 0, 7)];
    node.pose = random_pose(rng);
    node.dimensions = {uniform(rng, 0.01, 0.5), uniform(rng, 0.01, 0.5), uniform(rng, 0.01, 0.5)};
    g.nodes.push_back(node);
  }
  return g;
}

/// A literal of the requested kind. With a scene, about half the literals are
/// copied from scene poses, extents and labels so templatize has something
/// to bind.
inline Value random_value(Rng& rng, const ParamSpec& spec, const SceneGraph* scene) {
  const bool from_scene = scene && !scene->nodes.empty() && uniform_int(rng, 0, 1) == 1;
  const SceneNode* node =
      from_scene ? &scene->nodes[uniform_int(rng, 0, static_cast<int>(scene->nodes.size()) - 1)]
                 : nullptr;
  switch (spec.kind) {
    case ValueKind::kPose:
      return Value::pose(node ? node->pose : random_pose(rng));
    case ValueKind::kObject:
      return Value::object(node ? node->label : "thing " + std::to_string(uniform_int(rng, 0, 99)));
    case ValueKind::kNumber: {
      double v = node && spec.unit != Unit::kRadian ? node->dimensions[uniform_int(rng, 0, 2)]
                                                    : uniform(rng, -2, 2);
      // Occasionally short decimal literals, as a model would write them.
      if (!node && uniform_int(rng, 0, 2) == 0) v = std::round(v * 100) / 100;
      const Unit unit = uniform_int(rng, 0, 1) == 1 ? spec.unit : Unit::kNone;
      return Value::number(v, unit);
    }
    case ValueKind::kString:
      return Value::string("s" + std::to_string(uniform_int(rng, 0, 9)));
    case ValueKind::kBool:
      return Value::boolean(uniform_int(rng, 0, 1) == 1);
  }
  return Value::boolean(false);
}

/// Valid program against the standard registry, 1 to 8 calls.
inline SkillProgram random_program(Rng& rng, const SceneGraph* scene = nullptr) {
  const auto& sigs = SkillRegistry::standard().signatures();
  SkillProgram p;
  const int n = uniform_int(rng, 1, 8);
  for (int i = 0; i < n; ++i) {
    const auto& sig = sigs[uniform_int(rng, 0, static_cast<int>(sigs.size()) - 1)];
    SkillCall call;
    call.skill_name = sig.name;
    for (const auto& param : sig.params) call.args.push_back(random_value(rng, param, scene));
    p.calls.push_back(std::move(call));
  }
  return p;
}

/// Unit vector near one of `centers`, so that scores spread across [-1, 1].
inline Vector noisy_unit(Rng& rng, const std::vector<std::vector<double>>& centers, double noise) {
  const auto& c = centers[uniform_int(rng, 0, static_cast<int>(centers.size()) - 1)];
  std::normal_distribution<double> gauss(0.0, noise);
  std::vector<double> v(c.size());
  double sq = 0;
  for (size_t i = 0; i < c.size(); ++i) {
    v[i] = c[i] + gauss(rng);
    sq += v[i] * v[i];
  }
  const double n = std::sqrt(sq);
  for (auto& x : v) x /= n;
  return Vector(std::move(v));
}

inline std::vector<std::vector<double>> random_centers(Rng& rng, int count, size_t dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> out(count, std::vector<double>(dim));
  for (auto& c : out) {
    for (auto& x : c) x = gauss(rng);
  }
  return out;
}

// -- independent retrieval oracle -------------------------------------------

/// Plain-loop cosine written independently of the library's implementation.
inline double oracle_cosine(const Vector& a, const Vector& b) {
  long double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.dim(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  const long double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return static_cast<double>(std::clamp(c, -1.0L, 1.0L));
}

inline double oracle_score(const RetrievalQuery& q, const EmbeddingKey& k, const RetrievalParams& p) {
  double num = p.lambda_act * oracle_cosine(q.q_act, k.v_act) +
               p.lambda_obj * oracle_cosine(q.q_obj, k.v_obj);
  double den = p.lambda_act + p.lambda_obj;
  if (p.lambda_scene > 0 && q.q_scene && k.v_scene) {
    num += p.lambda_scene * oracle_cosine(*q.q_scene, *k.v_scene);
    den += p.lambda_scene;
  }
  return num / den;
}

struct OracleResult {
  std::vector<ScoredEntry> ranked;
  std::vector<EntryId> globals;
};

/// Scores every active non-global, non-template-excluded entry, filters by
/// threshold, sorts by (score desc, id asc) and truncates to k. Globals are
/// the most recent active global entries.
inline OracleResult oracle_retrieve(const std::vector<SkillbookEntry>& entries,
                                    const RetrievalQuery& q, const RetrievalParams& p) {
  OracleResult out;
  for (const auto& e : entries) {
    if (!e.active) continue;
    if (e.key.is_global) {
      out.globals.push_back(e.id);
      continue;
    }
    const double s = oracle_score(q, e.key, p);
    if (s >= p.min_score) out.ranked.push_back({e.id, s});
  }
  std::sort(out.ranked.begin(), out.ranked.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (out.ranked.size() > p.top_k) out.ranked.resize(p.top_k);
  std::sort(out.globals.begin(), out.globals.end(), std::greater<>());
  if (out.globals.size() > p.max_globals) out.globals.resize(p.max_globals);
  return out;
}

inline SkillbookEntry guidance_entry(EmbeddingKey key, std::string text, std::string task = "test") {
  SkillbookEntry e;
  e.key = std::move(key);
  e.payload = e.key.is_global ? Payload::global(std::move(text)) : Payload::guidance(std::move(text));
  e.provenance.task_name = std::move(task);
  return e;
}

/// Key with explicit vectors; no embedder involved.
inline EmbeddingKey raw_key(Vector act, Vector obj, std::string action = "act") {
  EmbeddingKey k;
  k.v_act = std::move(act);
  k.v_obj = std::move(obj);
  k.action_text = std::move(action);
  return k;
}

inline Vector unit_axis(size_t dim, size_t i) {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return Vector(std::move(v));
}

/// Unit vector with cosine `c` against unit_axis(dim, 0).
inline Vector with_cosine(size_t dim, double c) {
  std::vector<double> v(dim, 0.0);
  v[0] = c;
  v[1] = std::sqrt(1.0 - c * c);
  return Vector(std::move(v));
}

}  // namespace memo::testing
