#include <algorithm>
#include <map>
#include <set>

#include "memo/cluster.hpp"
#include "memo/error.hpp"

namespace memo {

using nlohmann::json;

namespace {

bool is_guidance(const SkillbookEntry& e) { return e.payload.type == PayloadType::kGuidance; }

size_t total_chars(const std::vector<std::string>& texts) {
  size_t n = 0;
  for (const auto& t : texts) n += t.size();
  return n;
}

std::string member_block(const Cluster& cluster, const SkillbookView& view) {
  std::string out;
  for (EntryId id : cluster.members) {
    out += "[" + std::to_string(id) + "] " + view.find(id)->payload.text + "\n";
  }
  return out;
}

std::string template_block(const Cluster& cluster, const SkillbookView& view) {
  if (cluster.templates.empty()) return "(none)\n";
  std::string out;
  for (EntryId id : cluster.templates) out += render_template(*view.find(id)->payload.tmpl) + "\n";
  return out;
}

// Parses the model's answer; an empty string means success.
std::string parse_answer(const std::string& text, Compression& out) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    return "answer is not a JSON object";
  }
  if (!j.is_object() || !j.contains("entries") || !j.at("entries").is_array()) {
    return "answer needs an array field \"entries\"";
  }
  out.texts.clear();
  out.pruned.clear();
  for (const auto& e : j.at("entries")) {
    if (!e.is_string()) return "every entry must be a string";
    out.texts.push_back(normalize_whitespace(e.get<std::string>()));
  }
  if (j.contains("pruned")) {
    if (!j.at("pruned").is_array()) return "\"pruned\" must be an array of ids";
    for (const auto& p : j.at("pruned")) {
      if (!p.is_number_unsigned()) return "\"pruned\" must be an array of ids";
      out.pruned.push_back(p.get<EntryId>());
    }
  }
  out.rationale = j.value("rationale", "");
  return {};
}

}  // namespace

std::vector<Cluster> form_clusters(const SkillbookView& view, double threshold,
                                   const RetrievalParams& params) {
  std::vector<std::shared_ptr<const SkillbookEntry>> guidance, templates;
  Cluster globals;
  globals.global = true;
  for (const auto& e : view.entries()) {
    if (!e->active) continue;
    if (is_guidance(*e)) guidance.push_back(e);
    if (e->payload.type == PayloadType::kTemplate) templates.push_back(e);
    if (e->payload.type == PayloadType::kGlobalGuidance) globals.members.push_back(e->id);
  }

  std::vector<Cluster> out;
  std::set<EntryId> taken;
  // entries() is ascending by id; seeds go newest first.
  for (auto seed = guidance.rbegin(); seed != guidance.rend(); ++seed) {
    if (taken.count((*seed)->id)) continue;
    Cluster c;
    c.seed = (*seed)->id;
    for (const auto& e : guidance) {
      if (taken.count(e->id)) continue;
      if (e->id == c.seed || key_similarity((*seed)->key, e->key, params) >= threshold) {
        c.members.push_back(e->id);
      }
    }
    taken.insert(c.members.begin(), c.members.end());
    for (const auto& t : templates) {
      if (key_similarity((*seed)->key, t->key, params) >= threshold) c.templates.push_back(t->id);
    }
    out.push_back(std::move(c));
  }
  if (!globals.members.empty()) {
    globals.seed = globals.members.back();
    out.push_back(std::move(globals));
  }
  return out;
}

std::string check_compression(const Compression& c, const std::vector<EntryId>& member_ids,
                              const std::vector<std::string>& member_texts) {
  if (c.identity) return {};
  if (c.texts.size() > member_ids.size()) {
    return "returned " + std::to_string(c.texts.size()) + " entries for a cluster of " +
           std::to_string(member_ids.size());
  }
  if (total_chars(c.texts) > total_chars(member_texts)) {
    return "returned " + std::to_string(total_chars(c.texts)) + " characters, more than the " +
           std::to_string(total_chars(member_texts)) + " of the cluster";
  }
  for (const auto& t : c.texts) {
    if (t.empty()) return "returned an empty entry";
  }
  for (EntryId id : c.pruned) {
    if (std::find(member_ids.begin(), member_ids.end(), id) == member_ids.end()) {
      return "pruned id " + std::to_string(id) + " is not a member of the cluster";
    }
  }
  return {};
}

Compression compress_cluster(const Cluster& cluster, const SkillbookView& view, ModelClient& model,
                             const Prompts& prompts) {
  Compression out;
  if (cluster.members.empty() || (cluster.members.size() == 1 && cluster.templates.empty())) {
    return out;
  }
  std::vector<std::string> member_texts;
  for (EntryId id : cluster.members) member_texts.push_back(view.find(id)->payload.text);
  const auto seed = view.find(cluster.seed);
  const std::string key = cluster.global ? std::string(kGlobalMarker) : seed->key.action_text;

  ModelRequest req;
  req.role = ModelRole::kCompress;
  req.budget = 8000;
  req.messages.push_back({"system", prompts.system});
  req.messages.push_back(
      {"user", fill(prompts.compress, {{"members", member_block(cluster, view)},
                                       {"templates", template_block(cluster, view)},
                                       {"count", std::to_string(member_texts.size())},
                                       {"chars", std::to_string(total_chars(member_texts))},
                                       {"key", key}})});
  try {
    for (int round = 0; round < 2; ++round) {
      ++out.model_calls;
      const auto res = model.complete(req);
      Compression candidate;
      candidate.identity = false;
      std::string problem = parse_answer(res.text, candidate);
      if (problem.empty()) problem = check_compression(candidate, cluster.members, member_texts);
      if (problem.empty()) {
        candidate.model_calls = out.model_calls;
        candidate.identity = candidate.texts == member_texts && candidate.pruned.empty();
        return candidate;
      }
      req.messages.push_back({"assistant", res.text});
      req.messages.push_back(
          {"user", "Your answer was rejected: " + problem + ". Return at most " +
                       std::to_string(member_texts.size()) + " entries with at most " +
                       std::to_string(total_chars(member_texts)) +
                       " characters in total, and prune only listed ids.\nRequest: " + key});
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kReplayMismatch || e.code() == ErrorCode::kReplayExhausted) throw;
  }
  out.identity = true;
  out.fallback = true;
  return out;
}

json to_json(const ClusterReport& r) {
  return {{"generation_before", r.generation_before},
          {"generation_after", r.generation_after},
          {"clusters", r.clusters},
          {"sizes", r.sizes},
          {"deactivated", r.deactivated},
          {"pruned", r.pruned},
          {"inserted", r.inserted},
          {"fallbacks", r.fallbacks},
          {"chars_before", r.chars_before},
          {"chars_after", r.chars_after}};
}

ClusterReport run_offline(Skillbook& book, ModelClient& model, const Prompts& prompts,
                          const Config& config) {
  std::unique_lock job(book.job_lock(), std::try_to_lock);
  if (!job.owns_lock()) throw Error(ErrorCode::kBusy, "a clustering job is already running");

  const auto view = book.snapshot();
  ClusterReport report;
  report.generation_before = view.generation();
  const auto clusters = form_clusters(view, config.cluster_threshold, config.retrieval);
  report.clusters = clusters.size();

  Skillbook::Batch batch;
  for (const auto& c : clusters) {
    report.sizes.push_back(c.members.size());
    size_t before = 0;
    for (EntryId id : c.members) before += view.find(id)->payload.text.size();
    report.chars_before += before;

    const Compression comp = compress_cluster(c, view, model, prompts);
    if (comp.fallback) ++report.fallbacks;
    if (comp.identity) {
      report.chars_after += before;
      continue;
    }
    const auto seed = view.find(c.seed);
    for (const auto& text : comp.texts) {
      SkillbookEntry e;
      e.key = seed->key;
      e.payload = c.global ? Payload::global(text) : Payload::guidance(text);
      e.provenance.task_name = seed->provenance.task_name;
      e.provenance.source = Source::kClustering;
      e.provenance.iteration = seed->provenance.iteration;
      batch.inserts.push_back(std::move(e));
      report.chars_after += text.size();
    }
    batch.deactivations.insert(batch.deactivations.end(), c.members.begin(), c.members.end());
    report.deactivated.insert(report.deactivated.end(), c.members.begin(), c.members.end());
    report.pruned.insert(report.pruned.end(), comp.pruned.begin(), comp.pruned.end());
  }
  report.inserted = book.publish(std::move(batch));
  report.generation_after = book.generation();
  return report;
}

}  // namespace memo
