#include <algorithm>
#include <cctype>
#include <fstream>

#include "memo/config.hpp"
#include "memo/error.hpp"
#include "memo/simenv.hpp"

namespace memo {

using nlohmann::json;

std::string_view to_string(TaskCategory c) {
  switch (c) {
    case TaskCategory::kLH: return "LH";
    case TaskCategory::kCR: return "CR";
    case TaskCategory::kSR: return "SR";
    case TaskCategory::kTR: return "TR";
  }
  return "??";
}

namespace {

Pose pose_from(const json& j) { return Pose::from_array(j.get<std::array<double, 6>>()); }

TaskCategory category_from(const std::string& s) {
  for (auto c : {TaskCategory::kLH, TaskCategory::kCR, TaskCategory::kSR, TaskCategory::kTR}) {
    if (to_string(c) == s) return c;
  }
  throw Error(ErrorCode::kCorruptRecord, "unknown task category '" + s + "'");
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

TaskSpec task_from_json(const json& j) {
  TaskSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.category = category_from(j.at("category").get<std::string>());
    spec.held_out = j.value("split", "train") == "heldout";

    World& w = spec.initial_world;
    w.table_height = j.value("table_height", 0.0);
    if (j.contains("gripper")) w.gripper.pose = pose_from(j.at("gripper").at("pose"));

    for (const auto& o : j.at("objects")) {
      ObjectBody body;
      body.label = o.at("label").get<std::string>();
      body.cls = o.value("class", body.label);
      body.pose = pose_from(o.at("pose"));
      body.dims = o.at("size").get<std::array<double, 3>>();
      body.graspable = o.value("graspable", true);
      body.container = o.value("container", false);
      body.part_of = o.value("part_of", "");
      if (w.find(body.label)) throw Error(ErrorCode::kCorruptRecord, "duplicate object '" + body.label + "'");
      w.objects.push_back(std::move(body));
    }

    for (const auto& jj : j.value("joints", json::array())) {
      Joint joint;
      const std::string type = jj.at("type").get<std::string>();
      if (type != "hinge" && type != "prismatic") {
        throw Error(ErrorCode::kCorruptRecord, "unknown joint type '" + type + "'");
      }
      joint.type = type == "hinge" ? JointType::kHinge : JointType::kPrismatic;
      joint.parent = jj.at("parent").get<std::string>();
      joint.door = jj.at("door").get<std::string>();
      joint.handle = jj.at("handle").get<std::string>();
      joint.axis = jj.at("axis").get<std::array<double, 3>>();
      joint.origin = jj.value("origin", std::array<double, 3>{0, 0, 0});
      const auto range = jj.at("range").get<std::array<double, 2>>();
      joint.lower = range[0];
      joint.upper = range[1];
      joint.position = jj.value("position", 0.0);
      for (const auto* label : {&joint.parent, &joint.door, &joint.handle}) {
        if (!w.find(*label)) throw Error(ErrorCode::kCorruptRecord, "joint references unknown object '" + *label + "'");
      }
      // Listed part poses are at position 0.
      joint.door_rest = w.find(joint.door)->pose;
      joint.handle_rest = w.find(joint.handle)->pose;
      w.find(joint.door)->pose = joint_part_pose(joint, joint.door_rest);
      w.find(joint.handle)->pose = joint_part_pose(joint, joint.handle_rest);
      w.joints.push_back(std::move(joint));
    }

    for (const auto& s : j.at("subtasks")) {
      SubtaskSpec sub;
      sub.name = s.at("name").get<std::string>();
      sub.action = s.at("action").get<std::string>();
      sub.objects = s.value("objects", std::vector<std::string>{});
      sub.goal.expr = s.at("goal");
      check_predicate(sub.goal);
      spec.subtasks.push_back(std::move(sub));
    }
    spec.goal.expr = j.at("goal");
    check_predicate(spec.goal);

    for (const auto& t : j.value("teacher", json::array())) {
      TeacherTrigger trig;
      const auto& m = t.at("match");
      trig.event = m.at("event").get<std::string>();
      trig.kind = m.value("kind", "");
      trig.subtask = m.value("subtask", "");
      trig.skill = m.value("skill", "");
      trig.feedback = t.at("feedback").get<std::string>();
      trig.max_fires = t.value("max_fires", 1);
      spec.teacher.triggers.push_back(std::move(trig));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptRecord, "task spec: " + std::string(e.what()));
  }

  World check = spec.initial_world;
  if (evaluate(spec.goal, check)) {
    throw Error(ErrorCode::kInvalidArgument, "task '" + spec.name + "' goal already holds initially");
  }
  return spec;
}

TaskSpec load_task(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read task " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kCorruptRecord, path.string() + ": " + e.what());
  }
  try {
    TaskSpec spec = task_from_json(j);
    spec.source = path;
    return spec;
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

TaskLibrary TaskLibrary::load(const std::filesystem::path& dir) {
  TaskLibrary lib;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    TaskSpec spec = load_task(f);
    if (lib.contains(spec.name)) throw Error(ErrorCode::kCorruptRecord, "duplicate task '" + spec.name + "'");
    lib.tasks_.push_back(std::move(spec));
  }
  return lib;
}

TaskLibrary TaskLibrary::load_default() { return load(asset_dir() / "tasks"); }

bool TaskLibrary::contains(std::string_view name) const {
  const std::string want = lower(name);
  return std::any_of(tasks_.begin(), tasks_.end(), [&](const TaskSpec& t) { return lower(t.name) == want; });
}

const TaskSpec& TaskLibrary::find(std::string_view name) const {
  const std::string want = lower(name);
  for (const auto& t : tasks_) {
    if (lower(t.name) == want) return t;
  }
  throw Error(ErrorCode::kUnknownTask, "unknown task '" + std::string(name) + "'");
}

std::vector<std::string> TaskLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& t : tasks_) out.push_back(t.name);
  return out;
}

}  // namespace memo
