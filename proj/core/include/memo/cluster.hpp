#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "memo/config.hpp"
#include "memo/model.hpp"
#include "memo/skillbook.hpp"

namespace memo {

/// Guidance entries grouped around a seed, plus templates that condition
/// (but are never rewritten by) the compression.
struct Cluster {
  EntryId seed = 0;
  std::vector<EntryId> members;    // ascending ids, seed included
  std::vector<EntryId> templates;  // conditioning only
  bool global = false;
};

/// Greedy single pass over active guidance: the highest unclustered id seeds
/// a cluster that absorbs every unclustered entry with key similarity to the
/// seed >= threshold. Active global guidance forms one dedicated cluster.
std::vector<Cluster> form_clusters(const SkillbookView& view, double threshold,
                                   const RetrievalParams& params = {});

struct Compression {
  std::vector<std::string> texts;  // replacement entries
  std::vector<EntryId> pruned;     // members judged misleading
  std::string rationale;
  bool identity = true;  // keep the members unchanged
  bool fallback = false; // the model never produced a valid answer
  int model_calls = 0;
};

/// Empty when `c` honors the contract for `members`: no more entries, no more
/// characters, pruned ids drawn from the members, no empty texts.
std::string check_compression(const Compression& c, const std::vector<EntryId>& member_ids,
                              const std::vector<std::string>& member_texts);

/// Asks the model to merge a cluster. The model answers
///   {"entries": ["..."], "pruned": [ids], "rationale": "..."}.
/// A rejected answer is retried once with the budget spelled out; a second
/// failure (or an unavailable model) keeps the cluster unchanged. Singleton
/// clusters without templates are left alone without asking the model.
Compression compress_cluster(const Cluster& cluster, const SkillbookView& view,
                             ModelClient& model, const Prompts& prompts);

struct ClusterReport {
  std::uint64_t generation_before = 0;
  std::uint64_t generation_after = 0;
  size_t clusters = 0;
  std::vector<size_t> sizes;
  std::vector<EntryId> deactivated;
  std::vector<EntryId> pruned;
  std::vector<EntryId> inserted;
  size_t fallbacks = 0;
  size_t chars_before = 0;
  size_t chars_after = 0;
};

nlohmann::json to_json(const ClusterReport& report);

/// Offline clustering and compression over one snapshot, published as a
/// single generation. Templates are never modified. Throws Error{kBusy} if
/// another job holds the book's job lock.
ClusterReport run_offline(Skillbook& book, ModelClient& model, const Prompts& prompts,
                          const Config& config);

}  // namespace memo
