#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>

#include "memo/error.hpp"
#include "memo/skillbook.hpp"

namespace memo {

using nlohmann::json;

namespace detail {

struct Tombstone {
  std::uint64_t generation = 0;
  std::string created_at;
};

struct BookState {
  SkillbookHeader header;
  std::uint64_t generation = 0;
  std::vector<std::shared_ptr<const SkillbookEntry>> entries;  // ascending id
  std::map<EntryId, Tombstone> tombstones;

  const SkillbookEntry* find(EntryId id) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), id,
                               [](const auto& e, EntryId v) { return e->id < v; });
    return (it != entries.end() && (*it)->id == id) ? it->get() : nullptr;
  }
  size_t position(EntryId id) const {
    return static_cast<size_t>(
        std::lower_bound(entries.begin(), entries.end(), id,
                         [](const auto& e, EntryId v) { return e->id < v; }) -
        entries.begin());
  }
  EntryId next_id() const { return entries.empty() ? 1 : entries.back()->id + 1; }
};

}  // namespace detail

std::string_view to_string(PayloadType type) {
  switch (type) {
    case PayloadType::kGuidance: return "guidance";
    case PayloadType::kGlobalGuidance: return "global";
    case PayloadType::kTemplate: return "template";
  }
  return "unknown";
}

std::string_view to_string(Source source) {
  switch (source) {
    case Source::kHuman: return "human";
    case Source::kSuccess: return "success";
    case Source::kClustering: return "clustering";
  }
  return "unknown";
}

namespace {

PayloadType payload_type_from(const std::string& s) {
  for (auto t : {PayloadType::kGuidance, PayloadType::kGlobalGuidance, PayloadType::kTemplate}) {
    if (to_string(t) == s) return t;
  }
  throw Error(ErrorCode::kCorruptRecord, "unknown payload type '" + s + "'");
}

Source source_from(const std::string& s) {
  for (auto t : {Source::kHuman, Source::kSuccess, Source::kClustering}) {
    if (to_string(t) == s) return t;
  }
  throw Error(ErrorCode::kCorruptRecord, "unknown provenance source '" + s + "'");
}

double weighted(double la, double ca, double lo, double co, double ls, const double* cs) {
  double num = la * ca + lo * co;
  double den = la + lo;
  if (cs != nullptr && ls > 0) {
    num += ls * *cs;
    den += ls;
  }
  return num / den;
}

void check_params(const RetrievalParams& p) {
  if (!(p.lambda_act > 0) || !(p.lambda_obj > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "retrieval weights lambda_act/lambda_obj must be > 0");
  }
  if (!(p.lambda_scene >= 0)) {
    throw Error(ErrorCode::kInvalidArgument, "retrieval weight lambda_scene must be >= 0");
  }
  if (p.top_k == 0) throw Error(ErrorCode::kInvalidArgument, "top_k must be >= 1");
}

std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

json header_record(const SkillbookHeader& h) {
  return {{"kind", "header"},
          {"schema_version", h.schema_version},
          {"embedding_dimension", h.embedding_dimension},
          {"embedder_id", h.embedder_id}};
}

json tombstone_record(EntryId id, const detail::Tombstone& t) {
  return {{"kind", "tombstone"}, {"id", id}, {"generation", t.generation}, {"created_at", t.created_at}};
}

void check_entry(const SkillbookEntry& e, const SkillbookHeader& h) {
  const size_t d = h.embedding_dimension;
  if (e.key.v_act.dim() != d || e.key.v_obj.dim() != d ||
      (e.key.v_scene && e.key.v_scene->dim() != d)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "entry key dimension does not match skillbook dimension " + std::to_string(d));
  }
  switch (e.payload.type) {
    case PayloadType::kTemplate:
      if (!e.payload.tmpl) throw Error(ErrorCode::kInvalidArgument, "template entry without template");
      if (e.key.is_global) throw Error(ErrorCode::kInvalidArgument, "template entries cannot use the global key");
      break;
    case PayloadType::kGuidance:
      if (e.payload.text.empty()) throw Error(ErrorCode::kInvalidArgument, "guidance text is empty");
      if (e.key.is_global) throw Error(ErrorCode::kInvalidArgument, "local guidance cannot use the global key");
      break;
    case PayloadType::kGlobalGuidance:
      if (e.payload.text.empty()) throw Error(ErrorCode::kInvalidArgument, "global guidance text is empty");
      if (!e.key.is_global) throw Error(ErrorCode::kInvalidArgument, "global guidance needs the global key");
      break;
  }
  if (!e.key.is_global && e.key.action_text.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "non-global keys need an action");
  }
}

}  // namespace

double retrieval_score(const RetrievalQuery& q, const EmbeddingKey& key, const RetrievalParams& p) {
  const double ca = cosine(q.q_act, key.v_act);
  const double co = cosine(q.q_obj, key.v_obj);
  if (q.q_scene && key.v_scene) {
    const double cs = cosine(*q.q_scene, *key.v_scene);
    return weighted(p.lambda_act, ca, p.lambda_obj, co, p.lambda_scene, &cs);
  }
  return weighted(p.lambda_act, ca, p.lambda_obj, co, p.lambda_scene, nullptr);
}

RetrievalQuery query_from_key(const EmbeddingKey& key) {
  return {key.v_act, key.v_obj, key.v_scene, key.action_text, key.object_texts};
}

double key_similarity(const EmbeddingKey& a, const EmbeddingKey& b, const RetrievalParams& p) {
  return retrieval_score(query_from_key(a), b, p);
}

json to_json(const SkillbookStats& s) {
  return {{"guidance", {{"active", s.guidance_active}, {"inactive", s.guidance_inactive}}},
          {"global", {{"active", s.global_active}, {"inactive", s.global_inactive}}},
          {"template", {{"active", s.template_active}, {"inactive", s.template_inactive}}},
          {"guidance_chars", s.guidance_chars},
          {"global_chars", s.global_chars}};
}

// ---------------------------------------------------------------------------
// Codecs
// ---------------------------------------------------------------------------

json to_json(const Vector& v) {
  return json(std::vector<double>(v.components().begin(), v.components().end()));
}

json to_json(const Template& t) {
  json params = json::array();
  for (const auto& p : t.params) {
    params.push_back({{"name", p.name}, {"kind", to_string(p.kind)}, {"default", render(p.default_value)}});
  }
  json bindings = json::array();
  for (const auto& [slot, b] : t.bindings) {
    bindings.push_back({{"call", slot.call}, {"arg", slot.arg}, {"type", to_string(b.type)},
                        {"param", b.param}, {"axis", b.axis}});
  }
  return {{"name", t.name}, {"params", params}, {"bindings", bindings}, {"body", render(t.body)}};
}

Template template_from_json(const json& j) {
  Template t;
  t.name = j.at("name").get<std::string>();
  t.body = parse(j.at("body").get<std::string>());
  for (auto& call : t.body.calls) {
    call.pos = {};
    for (auto& arg : call.args) arg.pos = {};
  }
  for (const auto& p : j.at("params")) {
    TemplateParam param;
    param.name = p.at("name").get<std::string>();
    const auto kind = value_kind_from_string(p.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::kCorruptRecord, "unknown parameter kind");
    param.kind = *kind;
    param.default_value = parse_value(p.at("default").get<std::string>());
    param.default_value.pos = {};
    t.params.push_back(std::move(param));
  }
  for (const auto& b : j.at("bindings")) {
    Binding binding;
    const std::string type = b.at("type").get<std::string>();
    bool known = false;
    for (auto bt : {BindingType::kObjectRef, BindingType::kObjectPose,
                    BindingType::kObjectDimension, BindingType::kFree}) {
      if (to_string(bt) == type) {
        binding.type = bt;
        known = true;
      }
    }
    if (!known) throw Error(ErrorCode::kCorruptRecord, "unknown binding type '" + type + "'");
    binding.param = b.at("param").get<std::string>();
    binding.axis = b.at("axis").get<int>();
    t.bindings[{b.at("call").get<size_t>(), b.at("arg").get<size_t>()}] = binding;
  }
  return t;
}

json to_json(const SkillbookEntry& e) {
  json payload = {{"type", to_string(e.payload.type)}};
  if (e.payload.type == PayloadType::kTemplate) {
    payload["template"] = to_json(*e.payload.tmpl);
  } else {
    payload["text"] = e.payload.text;
  }
  const auto& p = e.provenance;
  json prov = {{"task_name", p.task_name},
               {"source", to_string(p.source)},
               {"iteration", p.iteration},
               {"generation", p.generation},
               {"model_fallback", p.model_fallback},
               {"failed_program", p.failed_program ? json(*p.failed_program) : json(nullptr)},
               {"created_at", p.created_at}};
  return {{"kind", "entry"},
          {"id", e.id},
          {"action_text", e.key.action_text},
          {"object_texts", e.key.object_texts},
          {"is_global", e.key.is_global},
          {"v_act", to_json(e.key.v_act)},
          {"v_obj", to_json(e.key.v_obj)},
          {"v_scene", e.key.v_scene ? to_json(*e.key.v_scene) : json(nullptr)},
          {"payload", payload},
          {"provenance", prov},
          {"created_at", e.created_at}};
}

SkillbookEntry entry_from_json(const json& j) {
  SkillbookEntry e;
  e.id = j.at("id").get<EntryId>();
  e.key.action_text = j.at("action_text").get<std::string>();
  e.key.object_texts = j.at("object_texts").get<std::vector<std::string>>();
  e.key.is_global = j.at("is_global").get<bool>();
  e.key.v_act = Vector(j.at("v_act").get<std::vector<double>>());
  e.key.v_obj = Vector(j.at("v_obj").get<std::vector<double>>());
  if (!j.at("v_scene").is_null()) e.key.v_scene = Vector(j.at("v_scene").get<std::vector<double>>());
  const auto& payload = j.at("payload");
  e.payload.type = payload_type_from(payload.at("type").get<std::string>());
  if (e.payload.type == PayloadType::kTemplate) {
    e.payload.tmpl = template_from_json(payload.at("template"));
  } else {
    e.payload.text = payload.at("text").get<std::string>();
  }
  const auto& prov = j.at("provenance");
  e.provenance.task_name = prov.at("task_name").get<std::string>();
  e.provenance.source = source_from(prov.at("source").get<std::string>());
  e.provenance.iteration = prov.at("iteration").get<int>();
  e.provenance.generation = prov.at("generation").get<std::uint64_t>();
  e.provenance.model_fallback = prov.at("model_fallback").get<bool>();
  if (!prov.at("failed_program").is_null()) {
    e.provenance.failed_program = prov.at("failed_program").get<std::string>();
  }
  e.provenance.created_at = prov.at("created_at").get<std::string>();
  e.created_at = j.at("created_at").get<std::string>();
  return e;
}

json to_json(const RetrievalResult& r) {
  json ranked = json::array();
  for (const auto& s : r.ranked) ranked.push_back({{"id", s.id}, {"score", s.score}});
  return {{"generation", r.generation}, {"ranked", ranked}, {"globals", r.globals}};
}

// ---------------------------------------------------------------------------
// Views
// ---------------------------------------------------------------------------

std::uint64_t SkillbookView::generation() const { return state_->generation; }
const SkillbookHeader& SkillbookView::header() const { return state_->header; }
size_t SkillbookView::size() const { return state_->entries.size(); }

std::vector<std::shared_ptr<const SkillbookEntry>> SkillbookView::entries() const {
  return state_->entries;
}

std::shared_ptr<const SkillbookEntry> SkillbookView::find(EntryId id) const {
  const size_t pos = state_->position(id);
  if (pos < state_->entries.size() && state_->entries[pos]->id == id) {
    return state_->entries[pos];
  }
  return nullptr;
}

RetrievalResult SkillbookView::retrieve(const RetrievalQuery& q, const RetrievalParams& params) const {
  check_params(params);
  const size_t d = state_->header.embedding_dimension;
  if (q.q_act.dim() != d || q.q_obj.dim() != d || (q.q_scene && q.q_scene->dim() != d)) {
    throw Error(ErrorCode::kDimensionMismatch, "query dimension does not match skillbook");
  }
  RetrievalResult out;
  out.generation = state_->generation;
  for (const auto& e : state_->entries) {
    if (!e->active) continue;
    if (e->key.is_global) {
      out.globals.push_back(e->id);
      continue;
    }
    const double s = retrieval_score(q, e->key, params);
    if (s >= params.min_score) out.ranked.push_back({e->id, s});
  }
  const size_t k = std::min(params.top_k, out.ranked.size());
  std::partial_sort(out.ranked.begin(), out.ranked.begin() + static_cast<std::ptrdiff_t>(k),
                    out.ranked.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
                      return a.score != b.score ? a.score > b.score : a.id < b.id;
                    });
  out.ranked.resize(k);
  std::reverse(out.globals.begin(), out.globals.end());
  if (out.globals.size() > params.max_globals) out.globals.resize(params.max_globals);
  return out;
}

SkillbookStats SkillbookView::stats() const {
  SkillbookStats s;
  for (const auto& e : state_->entries) {
    switch (e->payload.type) {
      case PayloadType::kGuidance:
        (e->active ? s.guidance_active : s.guidance_inactive)++;
        if (e->active) s.guidance_chars += e->payload.text.size();
        break;
      case PayloadType::kGlobalGuidance:
        (e->active ? s.global_active : s.global_inactive)++;
        if (e->active) s.global_chars += e->payload.text.size();
        break;
      case PayloadType::kTemplate:
        (e->active ? s.template_active : s.template_inactive)++;
        break;
    }
  }
  return s;
}

std::optional<EntryId> SkillbookView::find_duplicate(const EmbeddingKey& key,
                                                     const Payload& payload) const {
  for (const auto& e : state_->entries) {
    if (!e->active || e->payload.type != payload.type) continue;
    if (e->key.is_global != key.is_global || e->key.v_act != key.v_act ||
        e->key.v_obj != key.v_obj || e->key.v_scene != key.v_scene) {
      continue;
    }
    if (payload.type == PayloadType::kTemplate) {
      if (e->payload.tmpl && payload.tmpl && e->payload.tmpl->body == payload.tmpl->body) return e->id;
    } else if (e->payload.text == payload.text) {
      return e->id;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Skillbook
// ---------------------------------------------------------------------------

Clock logical_clock() {
  return [](std::uint64_t generation) {
    const std::time_t t = static_cast<std::time_t>(generation);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  };
}

Clock wall_clock() {
  return [](std::uint64_t) {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  };
}

Skillbook::Skillbook(SkillbookHeader header, Clock clock)
    : header_(std::move(header)), clock_(clock ? std::move(clock) : logical_clock()) {
  auto s = std::make_shared<detail::BookState>();
  s->header = header_;
  state_ = std::move(s);
}

Skillbook::~Skillbook() = default;

SkillbookView Skillbook::snapshot() const {
  std::lock_guard lock(state_mu_);
  return SkillbookView(state_);
}

void Skillbook::swap_in(std::shared_ptr<const detail::BookState> next) {
  std::lock_guard lock(state_mu_);
  state_ = std::move(next);
}

std::vector<EntryId> Skillbook::publish(Batch batch) {
  std::lock_guard writer(write_mu_);
  if (batch.inserts.empty() && batch.deactivations.empty()) return {};

  const auto base = snapshot().state_;
  auto next = std::make_shared<detail::BookState>(*base);
  next->generation = base->generation + 1;
  const std::string stamp = clock_(next->generation);

  std::vector<EntryId> ids;
  std::vector<std::shared_ptr<const SkillbookEntry>> added;
  EntryId next_id = base->next_id();
  for (auto& e : batch.inserts) {
    check_entry(e, header_);
    if (e.id == 0) e.id = next_id;
    if (next->find(e.id) != nullptr ||
        std::find(ids.begin(), ids.end(), e.id) != ids.end()) {
      throw Error(ErrorCode::kDuplicateId, "duplicate entry id " + std::to_string(e.id));
    }
    next_id = std::max(next_id, e.id + 1);
    e.active = true;
    e.provenance.generation = next->generation;
    if (e.created_at.empty()) e.created_at = stamp;
    if (e.provenance.created_at.empty()) e.provenance.created_at = e.created_at;
    ids.push_back(e.id);
    added.push_back(std::make_shared<const SkillbookEntry>(std::move(e)));
  }
  for (const auto& e : added) {
    next->entries.insert(next->entries.begin() + static_cast<std::ptrdiff_t>(next->position(e->id)), e);
  }

  std::vector<EntryId> tombstoned;
  for (EntryId id : batch.deactivations) {
    const size_t pos = next->position(id);
    if (pos >= next->entries.size() || next->entries[pos]->id != id) {
      throw Error(ErrorCode::kUnknownId, "unknown entry id " + std::to_string(id));
    }
    if (!next->entries[pos]->active) continue;
    auto copy = std::make_shared<SkillbookEntry>(*next->entries[pos]);
    copy->active = false;
    next->entries[pos] = std::move(copy);
    next->tombstones[id] = {next->generation, stamp};
    tombstoned.push_back(id);
  }

  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    for (const auto& e : added) out << dump_line(to_json(*e)) << '\n';
    for (EntryId id : tombstoned) out << dump_line(tombstone_record(id, next->tombstones[id])) << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "failed to append to " + file_->string());
  }
  swap_in(std::move(next));
  return ids;
}

EntryId Skillbook::insert(SkillbookEntry entry) {
  Batch b;
  b.inserts.push_back(std::move(entry));
  return publish(std::move(b)).front();
}

size_t Skillbook::deactivate(const std::vector<EntryId>& ids) {
  const auto before = snapshot();
  for (EntryId id : ids) {
    if (!before.find(id)) throw Error(ErrorCode::kUnknownId, "unknown entry id " + std::to_string(id));
  }
  size_t count = 0;
  for (EntryId id : ids) count += before.find(id)->active ? 1 : 0;
  Batch b;
  b.deactivations = ids;
  publish(std::move(b));
  return count;
}

void Skillbook::persist(const std::filesystem::path& path) const {
  const auto view = snapshot();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << dump_line(header_record(header_)) << '\n';
  for (const auto& e : view.state_->entries) {
    auto copy = *e;
    copy.active = true;
    out << dump_line(to_json(copy)) << '\n';
  }
  for (const auto& [id, t] : view.state_->tombstones) out << dump_line(tombstone_record(id, t)) << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "failed to write " + path.string());
}

std::unique_ptr<Skillbook> Skillbook::load(const std::filesystem::path& path,
                                           const SkillbookHeader& expected, Clock clock) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());

  auto book = std::make_unique<Skillbook>(expected, clock);
  auto state = std::make_shared<detail::BookState>();
  state->header = expected;

  std::string line;
  size_t line_no = 0;
  bool have_header = false;
  auto corrupt = [&](const std::string& what) {
    return Error(ErrorCode::kCorruptRecord,
                 path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw corrupt(std::string("malformed record: ") + e.what());
    }
    try {
      const std::string kind = j.at("kind").get<std::string>();
      if (!have_header) {
        if (kind != "header") throw corrupt("first record must be the header");
        SkillbookHeader h;
        h.schema_version = j.at("schema_version").get<int>();
        h.embedding_dimension = j.at("embedding_dimension").get<size_t>();
        h.embedder_id = j.at("embedder_id").get<std::string>();
        if (h.schema_version != kSchemaVersion) {
          throw corrupt("unsupported schema_version " + std::to_string(h.schema_version));
        }
        if (h.embedder_id != expected.embedder_id ||
            h.embedding_dimension != expected.embedding_dimension) {
          throw Error(ErrorCode::kEmbedderMismatch,
                      path.string() + ": skillbook was built with embedder '" + h.embedder_id +
                          "' (d=" + std::to_string(h.embedding_dimension) + "), expected '" +
                          expected.embedder_id + "' (d=" +
                          std::to_string(expected.embedding_dimension) + ")");
        }
        state->header = h;
        have_header = true;
      } else if (kind == "entry") {
        SkillbookEntry e = entry_from_json(j);
        check_entry(e, state->header);
        if (state->find(e.id)) throw corrupt("duplicate entry id " + std::to_string(e.id));
        e.active = true;
        state->generation = std::max(state->generation, e.provenance.generation);
        const size_t pos = state->position(e.id);
        state->entries.insert(state->entries.begin() + static_cast<std::ptrdiff_t>(pos),
                              std::make_shared<const SkillbookEntry>(std::move(e)));
      } else if (kind == "tombstone") {
        const EntryId id = j.at("id").get<EntryId>();
        const size_t pos = state->position(id);
        if (pos >= state->entries.size() || state->entries[pos]->id != id) {
          throw corrupt("tombstone for unknown id " + std::to_string(id));
        }
        auto copy = std::make_shared<SkillbookEntry>(*state->entries[pos]);
        copy->active = false;
        state->entries[pos] = std::move(copy);
        detail::Tombstone t{j.at("generation").get<std::uint64_t>(),
                            j.at("created_at").get<std::string>()};
        state->generation = std::max(state->generation, t.generation);
        state->tombstones[id] = std::move(t);
      } else {
        throw corrupt("unknown record kind '" + kind + "'");
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kCorruptRecord || e.code() == ErrorCode::kEmbedderMismatch) throw;
      throw corrupt(e.what());
    } catch (const json::exception& e) {
      throw corrupt(e.what());
    }
  }
  book->header_ = state->header;
  book->swap_in(std::move(state));
  return book;
}

std::unique_ptr<Skillbook> Skillbook::open(const std::filesystem::path& path,
                                           const SkillbookHeader& expected, Clock clock) {
  std::unique_ptr<Skillbook> book;
  if (std::filesystem::exists(path)) {
    book = load(path, expected, clock);
  } else {
    book = std::make_unique<Skillbook>(expected, clock);
  }
  book->attach(path);
  return book;
}

std::unique_ptr<Skillbook> Skillbook::clone() const {
  auto copy = std::make_unique<Skillbook>(header_, clock_);
  copy->swap_in(snapshot().state_);
  return copy;
}

void Skillbook::attach(const std::filesystem::path& path) {
  std::lock_guard writer(write_mu_);
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (fresh) persist(path);
  file_ = path;
}

}  // namespace memo
