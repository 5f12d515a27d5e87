#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memo/dsl.hpp"
#include "memo/scene.hpp"

namespace memo {

// ---------------------------------------------------------------------------
// World state
// ---------------------------------------------------------------------------

struct ObjectBody {
  std::string label;
  std::string cls;
  Pose pose;                            // box center
  std::array<double, 3> dims{0, 0, 0};  // full extents along x, y, z
  bool graspable = true;
  bool container = false;
  std::string part_of;  // parent label for doors and handles

  bool operator==(const ObjectBody&) const = default;
};

enum class JointType { kHinge, kPrismatic };

/// A door (or lid, drawer) and its handle moving about a hinge axis or along
/// a slide axis. Part poses are stored at position 0 and recomputed by
/// forward kinematics.
struct Joint {
  JointType type = JointType::kHinge;
  std::string parent;
  std::string door;
  std::string handle;
  std::array<double, 3> axis{0, 0, 1};
  std::array<double, 3> origin{0, 0, 0};
  double lower = 0;
  double upper = 0;
  double position = 0;
  Pose door_rest;
  Pose handle_rest;

  /// Open once past half of the range.
  bool is_open() const { return position - lower >= 0.5 * (upper - lower); }
  bool operator==(const Joint&) const = default;
};

struct Gripper {
  Pose pose;
  bool open = true;
  std::optional<std::string> held;
  Pose grasp_offset;  // held object's pose in the gripper frame

  bool operator==(const Gripper&) const = default;
};

struct World {
  std::vector<ObjectBody> objects;
  std::vector<Joint> joints;
  Gripper gripper;
  double table_height = 0;
  /// Gripper positions after every completed motion, starting at reset.
  std::vector<std::array<double, 3>> path;

  const ObjectBody* find(std::string_view label) const;
  ObjectBody* find(std::string_view label);
  const Joint* joint_for(std::string_view label) const;
  bool operator==(const World&) const = default;
};

nlohmann::json to_json(const World& world);

/// Forward kinematics of a joint part at the joint's current position.
Pose joint_part_pose(const Joint& joint, const Pose& rest);

/// Relations regenerated from geometry: on (bottom within 0.02 m of a top
/// surface, center over its footprint), inside (center within a container's
/// box), open/closed per joint, and what the gripper holds.
SceneGraph build_scene_graph(const World& world);

inline constexpr double kGraspTolerance = 0.03;
inline constexpr double kOnTolerance = 0.02;

// ---------------------------------------------------------------------------
// Tasks, predicates and the teacher
// ---------------------------------------------------------------------------

/// Goal expression over a world, e.g. {"all":[{"open":"toaster door"},
/// {"inside":["bread","toaster"]}]}. Operators: all, any, not, on, inside,
/// open, closed, holding, gripper_empty, above, tilted, near, swept.
struct Predicate {
  nlohmann::json expr;
};

/// Throws Error{kUnknownPredicate} for malformed expressions.
void check_predicate(const Predicate& p);
bool evaluate(const Predicate& p, const World& world);

struct TeacherTrigger {
  std::string event;    // "violation" | "subtask_failed" | "call"
  std::string kind;     // violation kind filter
  std::string subtask;  // subtask filter
  std::string skill;    // call filter
  std::string feedback;
  int max_fires = 1;
};

struct TeacherScript {
  std::vector<TeacherTrigger> triggers;
};

struct SubtaskSpec {
  std::string name;  // also the subtask description
  std::string action;
  std::vector<std::string> objects;
  Predicate goal;
};

enum class TaskCategory { kLH, kCR, kSR, kTR };
std::string_view to_string(TaskCategory c);

struct TaskSpec {
  std::string name;
  TaskCategory category = TaskCategory::kSR;
  bool held_out = false;
  World initial_world;
  std::vector<SubtaskSpec> subtasks;
  Predicate goal;
  TeacherScript teacher;
  std::filesystem::path source;
};

/// Parses a task file. Throws Error{kCorruptRecord} on schema errors and
/// Error{kInvalidArgument} if the goal already holds initially.
TaskSpec load_task(const std::filesystem::path& path);
TaskSpec task_from_json(const nlohmann::json& j);

class TaskLibrary {
 public:
  static TaskLibrary load(const std::filesystem::path& dir);
  static TaskLibrary load_default();

  /// Case-insensitive. Throws Error{kUnknownTask}.
  const TaskSpec& find(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;
  const std::vector<TaskSpec>& tasks() const { return tasks_; }

 private:
  std::vector<TaskSpec> tasks_;
};

enum class Violation { kNone, kTableCollision, kObjectCollision, kGraspOutOfReach, kNothingHeld, kJointLimit };
std::string_view to_string(Violation v);

struct StepOutcome {
  Violation violation = Violation::kNone;
  std::string detail;
  bool ok() const { return violation == Violation::kNone; }
};

struct TraceEvent {
  enum class Kind { kCall, kViolation, kSubtaskFailed, kSubtaskDone };
  Kind kind = Kind::kCall;
  std::string subtask;
  std::string skill;      // kCall, kViolation
  std::string call_text;  // rendered call
  Violation violation = Violation::kNone;
  std::string detail;
};

std::string_view to_string(TraceEvent::Kind k);
nlohmann::json to_json(const TraceEvent& e);

struct ExecutionTrace {
  std::string task;
  std::string subtask;
  int attempt = 0;
  std::vector<TraceEvent> events;
};

/// Whoever may interrupt the robot: the scripted teacher or a person at the
/// console. observe() runs after every trace event.
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual std::optional<std::string> observe(const ExecutionTrace& trace) = 0;
  /// Overrides the automatic subtask verdict when set.
  virtual std::optional<bool> verdict(const std::string& subtask, bool predicted) {
    (void)subtask;
    (void)predicted;
    return std::nullopt;
  }
  virtual std::string id() const = 0;
};

/// Deterministic stand-in for a study participant. Matches the newest trace
/// event against triggers in order; the first un-exhausted match fires.
class ScriptedTeacher final : public Teacher {
 public:
  explicit ScriptedTeacher(TeacherScript script)
      : script_(std::move(script)), fired_(script_.triggers.size(), 0) {}

  std::optional<std::string> observe(const ExecutionTrace& trace) override;
  std::string id() const override { return "scripted"; }

 private:
  TeacherScript script_;
  std::vector<int> fired_;
};

/// Never interrupts. Zero-shot evaluation runs under this teacher.
class SilentTeacher final : public Teacher {
 public:
  std::optional<std::string> observe(const ExecutionTrace&) override { return std::nullopt; }
  std::string id() const override { return "none"; }
};

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

using CheckpointId = std::uint64_t;

/// Deterministic kinematic tabletop. Skill calls either apply fully or
/// leave the world untouched and report a violation.
class SimEnv {
 public:
  explicit SimEnv(TaskSpec spec);

  const World& reset();
  CheckpointId checkpoint();
  /// Throws Error{kUnknownCheckpoint} for ids from before the last reset.
  const World& restore(CheckpointId id);

  StepOutcome step(const SkillCall& call);

  SceneGraph scene_graph() const { return build_scene_graph(world_); }
  bool check_success() const;
  /// Throws Error{kUnknownPredicate} for unknown subtask names.
  bool check_subtask(const std::string& name) const;

  const World& world() const { return world_; }
  const TaskSpec& spec() const { return spec_; }

 private:
  TaskSpec spec_;
  World world_;
  std::map<CheckpointId, World> checkpoints_;
  CheckpointId next_checkpoint_ = 1;
};

}  // namespace memo
