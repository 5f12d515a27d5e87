#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "memo/error.hpp"
#include "memo/simenv.hpp"

namespace memo {

using nlohmann::json;

namespace {

constexpr double kEps = 1e-9;
constexpr double kSweepBand = 0.06;

Eigen::Matrix3d rotation(const Pose& p) {
  return (Eigen::AngleAxisd(p.yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(p.pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(p.roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Isometry3d transform(const Pose& p) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = rotation(p);
  t.translation() = Eigen::Vector3d(p.x, p.y, p.z);
  return t;
}

Pose to_pose(const Eigen::Isometry3d& t) {
  const Eigen::Matrix3d r = t.linear();
  Pose p;
  p.x = t.translation().x();
  p.y = t.translation().y();
  p.z = t.translation().z();
  p.pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  p.roll = std::atan2(r(2, 1), r(2, 2));
  p.yaw = std::atan2(r(1, 0), r(0, 0));
  return p;
}

Eigen::Vector3d position(const Pose& p) { return {p.x, p.y, p.z}; }

struct Box {
  Eigen::Vector3d lo, hi;

  bool contains(const Eigen::Vector3d& q) const {
    return (q.array() > lo.array() + kEps).all() && (q.array() < hi.array() - kEps).all();
  }
  bool footprint_contains(double x, double y, double margin = 0) const {
    return x >= lo.x() - margin && x <= hi.x() + margin && y >= lo.y() - margin &&
           y <= hi.y() + margin;
  }
  // Slab test on the open box; touching faces does not count.
  bool segment_hits(const Eigen::Vector3d& a, const Eigen::Vector3d& b) const {
    double t0 = 0, t1 = 1;
    const Eigen::Vector3d d = b - a;
    for (int i = 0; i < 3; ++i) {
      const double lo_i = lo[i] + kEps, hi_i = hi[i] - kEps;
      if (std::abs(d[i]) < 1e-15) {
        if (a[i] <= lo_i || a[i] >= hi_i) return false;
        continue;
      }
      double ta = (lo_i - a[i]) / d[i];
      double tb = (hi_i - a[i]) / d[i];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    return true;
  }
};

// Axis-aligned bounds of the (possibly rotated) box.
Box bounds(const ObjectBody& o) {
  const Eigen::Matrix3d r = rotation(o.pose);
  Eigen::Vector3d half;
  for (int i = 0; i < 3; ++i) {
    half[i] = 0;
    for (int k = 0; k < 3; ++k) half[i] += std::abs(r(i, k)) * o.dims[k] / 2.0;
  }
  const Eigen::Vector3d c = position(o.pose);
  return {c - half, c + half};
}

bool is_handle(const World& w, const std::string& label) {
  return std::any_of(w.joints.begin(), w.joints.end(),
                     [&](const Joint& j) { return j.handle == label; });
}

// Closed containers with doors are solid; open ones and open-top ones are not.
bool hollow(const World& w, const ObjectBody& o) {
  if (!o.container) return false;
  for (const auto& j : w.joints) {
    if (j.parent == o.label && !j.is_open()) return false;
  }
  return true;
}

void update_held(World& w) {
  if (!w.gripper.held) return;
  ObjectBody* obj = w.find(*w.gripper.held);
  if (obj == nullptr || is_handle(w, obj->label)) return;
  obj->pose = to_pose(transform(w.gripper.pose) * transform(w.gripper.grasp_offset));
}

void apply_joint(World& w, Joint& j) {
  if (ObjectBody* door = w.find(j.door)) door->pose = joint_part_pose(j, j.door_rest);
  if (ObjectBody* handle = w.find(j.handle)) handle->pose = joint_part_pose(j, j.handle_rest);
}

double support_below(const World& w, const ObjectBody& obj) {
  const Box me = bounds(obj);
  const double bottom = me.lo.z();
  double best = w.table_height;
  for (const auto& other : w.objects) {
    if (other.label == obj.label || !other.part_of.empty()) continue;
    const Box b = bounds(other);
    if (!b.footprint_contains(obj.pose.x, obj.pose.y)) continue;
    double candidate;
    if (hollow(w, other) && bottom <= b.hi.z() + kEps) {
      candidate = b.lo.z();
    } else {
      candidate = b.hi.z();
    }
    if (candidate <= bottom + 1e-6) best = std::max(best, candidate);
  }
  return best;
}

StepOutcome violation(Violation v, std::string detail) { return {v, std::move(detail)}; }

StepOutcome move_gripper(World& w, const Pose& target) {
  if (w.gripper.held && is_handle(w, *w.gripper.held)) {
    return violation(Violation::kObjectCollision,
                     "the gripper is attached to the " + *w.gripper.held + "; release it first");
  }
  if (target.z < w.table_height - kEps) {
    return violation(Violation::kTableCollision, "target is below the table surface");
  }
  const Eigen::Vector3d a = position(w.gripper.pose);
  const Eigen::Vector3d b = position(target);
  const std::string held = w.gripper.held.value_or("");

  for (const auto& o : w.objects) {
    if (o.label == held || !o.part_of.empty()) continue;
    if (hollow(w, o)) continue;
    const Box box = bounds(o);
    if (!o.container && (box.contains(a) || box.contains(b))) continue;
    if (box.segment_hits(a, b) || box.contains(b)) {
      return violation(Violation::kObjectCollision, "path collides with the " + o.label);
    }
  }

  const Pose before = w.gripper.pose;
  w.gripper.pose = target;
  update_held(w);
  if (!held.empty()) {
    const Box box = bounds(*w.find(held));
    if (box.lo.z() < w.table_height - 1e-6) {
      w.gripper.pose = before;
      update_held(w);
      return violation(Violation::kTableCollision, "the held " + held + " would hit the table");
    }
  }
  w.path.push_back({target.x, target.y, target.z});
  return {};
}

StepOutcome do_release(World& w, bool strict) {
  if (!w.gripper.held) {
    if (strict) return violation(Violation::kNothingHeld, "release() with nothing in the gripper");
    w.gripper.open = true;
    return {};
  }
  const std::string label = *w.gripper.held;
  w.gripper.held.reset();
  w.gripper.open = true;
  w.gripper.grasp_offset = {};
  if (!is_handle(w, label)) {
    ObjectBody* obj = w.find(label);
    const double support = support_below(w, *obj);
    const Box box = bounds(*obj);
    obj->pose.z += support - box.lo.z();
  }
  return {};
}

const std::string& arg_label(const SkillCall& call, size_t i) {
  return std::get<ObjectRef>(call.args.at(i).data).label;
}

double arg_number(const SkillCall& call, size_t i) {
  return std::get<Number>(call.args.at(i).data).value;
}

StepOutcome apply(World& w, const SkillCall& call) {
  const std::string& skill = call.skill_name;
  if (skill == "move_to") {
    return move_gripper(w, std::get<Pose>(call.args.at(0).data));
  }
  if (skill == "move_delta") {
    Pose target = w.gripper.pose;
    target.x += arg_number(call, 0);
    target.y += arg_number(call, 1);
    target.z += arg_number(call, 2);
    return move_gripper(w, target);
  }
  if (skill == "grasp") {
    const std::string& label = arg_label(call, 0);
    const ObjectBody* obj = w.find(label);
    if (obj == nullptr) return violation(Violation::kGraspOutOfReach, "there is no " + label);
    if (w.gripper.held) {
      return violation(Violation::kGraspOutOfReach, "already holding the " + *w.gripper.held);
    }
    if (!obj->graspable) return violation(Violation::kGraspOutOfReach, "the " + label + " cannot be grasped");
    const double dist = (position(obj->pose) - position(w.gripper.pose)).norm();
    if (dist > kGraspTolerance) {
      return violation(Violation::kGraspOutOfReach,
                       "the " + label + " is " + std::to_string(dist) + " m from the gripper");
    }
    w.gripper.held = label;
    w.gripper.open = false;
    w.gripper.grasp_offset = to_pose(transform(w.gripper.pose).inverse() * transform(obj->pose));
    return {};
  }
  if (skill == "release") return do_release(w, true);
  if (skill == "open_gripper") return do_release(w, false);
  if (skill == "close_gripper") {
    w.gripper.open = false;
    return {};
  }
  if (skill == "rotate_joint") {
    const std::string& label = arg_label(call, 0);
    const double amount = arg_number(call, 1);
    Joint* joint = nullptr;
    for (auto& j : w.joints) {
      if (j.door == label || j.handle == label || j.parent == label) joint = &j;
    }
    if (joint == nullptr) return violation(Violation::kNothingHeld, "the " + label + " has no joint");
    if (w.gripper.held != joint->handle) {
      return violation(Violation::kNothingHeld, "rotate_joint needs the " + joint->handle + " in the gripper");
    }
    const double next = joint->position + amount;
    if (next < joint->lower - kEps || next > joint->upper + kEps) {
      return violation(Violation::kJointLimit, "the " + joint->door + " cannot move past its limit");
    }
    const Eigen::Isometry3d offset = transform(w.gripper.grasp_offset);
    joint->position = next;
    apply_joint(w, *joint);
    w.gripper.pose = to_pose(transform(w.find(joint->handle)->pose) * offset.inverse());
    w.path.push_back({w.gripper.pose.x, w.gripper.pose.y, w.gripper.pose.z});
    return {};
  }
  if (skill == "set_yaw") {
    if (w.gripper.held && is_handle(w, *w.gripper.held)) {
      return violation(Violation::kObjectCollision, "the gripper is attached to the " + *w.gripper.held);
    }
    w.gripper.pose.yaw = arg_number(call, 0);
    update_held(w);
    return {};
  }
  throw Error(ErrorCode::kUnknownSkill, "simulator has no skill '" + skill + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// World helpers
// ---------------------------------------------------------------------------

const ObjectBody* World::find(std::string_view label) const {
  for (const auto& o : objects) {
    if (o.label == label) return &o;
  }
  return nullptr;
}

ObjectBody* World::find(std::string_view label) {
  for (auto& o : objects) {
    if (o.label == label) return &o;
  }
  return nullptr;
}

const Joint* World::joint_for(std::string_view label) const {
  for (const auto& j : joints) {
    if (j.door == label || j.handle == label || j.parent == label) return &j;
  }
  return nullptr;
}

Pose joint_part_pose(const Joint& joint, const Pose& rest) {
  const Eigen::Vector3d axis = Eigen::Vector3d(joint.axis[0], joint.axis[1], joint.axis[2]).normalized();
  Eigen::Isometry3d motion = Eigen::Isometry3d::Identity();
  if (joint.type == JointType::kHinge) {
    const Eigen::Vector3d origin(joint.origin[0], joint.origin[1], joint.origin[2]);
    motion.translate(origin);
    motion.rotate(Eigen::AngleAxisd(joint.position, axis));
    motion.translate(-origin);
  } else {
    motion.translate(axis * joint.position);
  }
  return to_pose(motion * transform(rest));
}

json to_json(const World& w) {
  auto pose = [](const Pose& p) { return json(p.as_array()); };
  json objects = json::array();
  for (const auto& o : w.objects) {
    objects.push_back({{"label", o.label}, {"class", o.cls}, {"pose", pose(o.pose)}, {"size", o.dims},
                       {"graspable", o.graspable}, {"container", o.container}, {"part_of", o.part_of}});
  }
  json joints = json::array();
  for (const auto& j : w.joints) {
    joints.push_back({{"type", j.type == JointType::kHinge ? "hinge" : "prismatic"},
                      {"parent", j.parent}, {"door", j.door}, {"handle", j.handle},
                      {"position", j.position}, {"range", {j.lower, j.upper}}, {"open", j.is_open()}});
  }
  return {{"objects", objects},
          {"joints", joints},
          {"gripper", {{"pose", pose(w.gripper.pose)}, {"open", w.gripper.open},
                       {"held", w.gripper.held ? json(*w.gripper.held) : json(nullptr)}}},
          {"table_height", w.table_height}};
}

SceneGraph build_scene_graph(const World& w) {
  SceneGraph g;
  g.gripper = w.gripper.pose;
  g.nodes.push_back({"table", "table", Pose{0, 0, w.table_height, 0, 0, 0}, {0, 0, 0}});
  for (const auto& o : w.objects) g.nodes.push_back({o.label, o.cls, o.pose, o.dims});

  for (const auto& a : w.objects) {
    if (!a.part_of.empty() || a.label == w.gripper.held.value_or("")) continue;
    const Box ab = bounds(a);
    const Eigen::Vector3d center = position(a.pose);
    bool inside_any = false;
    for (const auto& b : w.objects) {
      if (b.label == a.label || !b.container) continue;
      if (bounds(b).contains(center)) {
        g.edges.push_back({a.label, "is inside", b.label});
        inside_any = true;
      }
    }
    const ObjectBody* support = nullptr;
    for (const auto& b : w.objects) {
      if (b.label == a.label || !b.part_of.empty()) continue;
      const Box bb = bounds(b);
      if (std::abs(ab.lo.z() - bb.hi.z()) <= kOnTolerance && bb.footprint_contains(a.pose.x, a.pose.y) &&
          !bb.contains(center)) {
        if (support == nullptr || bounds(*support).hi.z() < bb.hi.z()) support = &b;
      }
    }
    if (support != nullptr) {
      g.edges.push_back({a.label, "is on", support->label});
    } else if (!inside_any && std::abs(ab.lo.z() - w.table_height) <= kOnTolerance) {
      g.edges.push_back({a.label, "is on", "table"});
    }
  }
  for (const auto& j : w.joints) {
    g.edges.push_back({j.door, j.is_open() ? "is open" : "is closed", ""});
  }
  if (w.gripper.held) g.edges.push_back({"gripper", "is holding", *w.gripper.held});
  return g;
}

// ---------------------------------------------------------------------------
// Predicates
// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void bad_predicate(const json& expr, const std::string& why) {
  throw Error(ErrorCode::kUnknownPredicate, why + ": " + expr.dump());
}

const ObjectBody& need(const World& w, const std::string& label) {
  const ObjectBody* o = w.find(label);
  if (o == nullptr) throw Error(ErrorCode::kUnknownPredicate, "predicate names unknown object '" + label + "'");
  return *o;
}

bool on(const World& w, const std::string& a_label, const std::string& b_label) {
  const ObjectBody& a = need(w, a_label);
  if (w.gripper.held == a_label) return false;
  const Box ab = bounds(a);
  if (b_label == "table") return std::abs(ab.lo.z() - w.table_height) <= kOnTolerance;
  const Box bb = bounds(need(w, b_label));
  return std::abs(ab.lo.z() - bb.hi.z()) <= kOnTolerance && bb.footprint_contains(a.pose.x, a.pose.y);
}

bool eval(const json& e, const World& w) {
  if (!e.is_object() || e.size() != 1) bad_predicate(e, "predicate must be a one-key object");
  const auto& [op, arg] = *e.items().begin();
  if (op == "all") {
    return std::all_of(arg.begin(), arg.end(), [&](const json& x) { return eval(x, w); });
  }
  if (op == "any") {
    return std::any_of(arg.begin(), arg.end(), [&](const json& x) { return eval(x, w); });
  }
  if (op == "not") return !eval(arg, w);
  if (op == "on") return on(w, arg.at(0).get<std::string>(), arg.at(1).get<std::string>());
  if (op == "inside") {
    const ObjectBody& a = need(w, arg.at(0).get<std::string>());
    return bounds(need(w, arg.at(1).get<std::string>())).contains(position(a.pose));
  }
  if (op == "open" || op == "closed") {
    const Joint* j = w.joint_for(arg.get<std::string>());
    if (j == nullptr) bad_predicate(e, "no joint for label");
    return (op == "open") == j->is_open();
  }
  if (op == "holding") return w.gripper.held == arg.get<std::string>();
  if (op == "gripper_empty") return !w.gripper.held.has_value();
  if (op == "above") {
    const Box a = bounds(need(w, arg.at(0).get<std::string>()));
    const ObjectBody& b_obj = need(w, arg.at(1).get<std::string>());
    const Box b = bounds(b_obj);
    const ObjectBody& a_obj = need(w, arg.at(0).get<std::string>());
    return b.footprint_contains(a_obj.pose.x, a_obj.pose.y, 0.02) && a.lo.z() >= b.hi.z() - kOnTolerance;
  }
  if (op == "tilted") {
    const ObjectBody& a = need(w, arg.at(0).get<std::string>());
    const double min_angle = arg.at(1).get<double>();
    const Eigen::Vector3d up = rotation(a.pose).col(2);
    return std::acos(std::clamp(up.z(), -1.0, 1.0)) >= min_angle;
  }
  if (op == "near") {
    const ObjectBody& a = need(w, arg.at(0).get<std::string>());
    const auto p = arg.at(1).get<std::array<double, 3>>();
    return (position(a.pose) - Eigen::Vector3d(p[0], p[1], p[2])).norm() <= arg.at(2).get<double>();
  }
  if (op == "swept") {
    const Box b = bounds(need(w, arg.at(0).get<std::string>()));
    const int passes = arg.at(1).get<int>();
    auto over = [&](const std::array<double, 3>& p) {
      return b.footprint_contains(p[0], p[1]) && p[2] >= b.hi.z() - kEps && p[2] <= b.hi.z() + kSweepBand;
    };
    int count = 0;
    for (size_t i = 1; i < w.path.size(); ++i) {
      if (over(w.path[i - 1]) && over(w.path[i])) ++count;
    }
    return count >= passes;
  }
  bad_predicate(e, "unknown operator '" + op + "'");
}

void check_expr(const json& e) {
  if (!e.is_object() || e.size() != 1) bad_predicate(e, "predicate must be a one-key object");
  const auto& [op, arg] = *e.items().begin();
  if (op == "all" || op == "any") {
    if (!arg.is_array()) bad_predicate(e, op + " expects a list");
    for (const auto& x : arg) check_expr(x);
  } else if (op == "not") {
    check_expr(arg);
  } else if (op == "on" || op == "inside" || op == "above") {
    if (!arg.is_array() || arg.size() != 2) bad_predicate(e, op + " expects two labels");
  } else if (op == "open" || op == "closed" || op == "holding") {
    if (!arg.is_string()) bad_predicate(e, op + " expects a label");
  } else if (op == "tilted" || op == "swept") {
    if (!arg.is_array() || arg.size() != 2) bad_predicate(e, op + " expects [label, value]");
  } else if (op == "near") {
    if (!arg.is_array() || arg.size() != 3) bad_predicate(e, "near expects [label, [x,y,z], tol]");
  } else if (op != "gripper_empty") {
    bad_predicate(e, "unknown operator '" + op + "'");
  }
}

}  // namespace

void check_predicate(const Predicate& p) { check_expr(p.expr); }

bool evaluate(const Predicate& p, const World& world) {
  try {
    return eval(p.expr, world);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kUnknownPredicate, std::string("malformed predicate: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Teacher
// ---------------------------------------------------------------------------

std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::kNone: return "none";
    case Violation::kTableCollision: return "table_collision";
    case Violation::kObjectCollision: return "object_collision";
    case Violation::kGraspOutOfReach: return "grasp_out_of_reach";
    case Violation::kNothingHeld: return "nothing_held";
    case Violation::kJointLimit: return "joint_limit";
  }
  return "unknown";
}

std::string_view to_string(TraceEvent::Kind k) {
  switch (k) {
    case TraceEvent::Kind::kCall: return "call";
    case TraceEvent::Kind::kViolation: return "violation";
    case TraceEvent::Kind::kSubtaskFailed: return "subtask_failed";
    case TraceEvent::Kind::kSubtaskDone: return "subtask_done";
  }
  return "unknown";
}

json to_json(const TraceEvent& e) {
  json j = {{"event", to_string(e.kind)}, {"subtask", e.subtask}};
  if (!e.skill.empty()) j["skill"] = e.skill;
  if (!e.call_text.empty()) j["call"] = e.call_text;
  if (e.violation != Violation::kNone) j["kind"] = to_string(e.violation);
  if (!e.detail.empty()) j["detail"] = e.detail;
  return j;
}

std::optional<std::string> ScriptedTeacher::observe(const ExecutionTrace& trace) {
  if (trace.events.empty()) return std::nullopt;
  const TraceEvent& last = trace.events.back();
  for (size_t i = 0; i < script_.triggers.size(); ++i) {
    const TeacherTrigger& t = script_.triggers[i];
    if (fired_[i] >= t.max_fires) continue;
    if (t.event != to_string(last.kind)) continue;
    if (!t.subtask.empty() && t.subtask != last.subtask) continue;
    if (!t.kind.empty() && t.kind != to_string(last.violation)) continue;
    if (!t.skill.empty() && t.skill != last.skill) continue;
    ++fired_[i];
    return t.feedback;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

SimEnv::SimEnv(TaskSpec spec) : spec_(std::move(spec)) { reset(); }

const World& SimEnv::reset() {
  world_ = spec_.initial_world;
  world_.path = {{world_.gripper.pose.x, world_.gripper.pose.y, world_.gripper.pose.z}};
  checkpoints_.clear();
  return world_;
}

CheckpointId SimEnv::checkpoint() {
  const CheckpointId id = next_checkpoint_++;
  checkpoints_.emplace(id, world_);
  return id;
}

const World& SimEnv::restore(CheckpointId id) {
  auto it = checkpoints_.find(id);
  if (it == checkpoints_.end()) {
    throw Error(ErrorCode::kUnknownCheckpoint, "unknown checkpoint " + std::to_string(id));
  }
  world_ = it->second;
  return world_;
}

StepOutcome SimEnv::step(const SkillCall& call) {
  SkillProgram one;
  one.calls.push_back(call);
  const auto errors = validate(one, SkillRegistry::standard());
  if (!errors.empty()) throw Error(errors.front().code, errors.front().message);
  World next = world_;
  StepOutcome out = apply(next, call);
  if (out.ok()) world_ = std::move(next);
  return out;
}

bool SimEnv::check_success() const { return evaluate(spec_.goal, world_); }

bool SimEnv::check_subtask(const std::string& name) const {
  for (const auto& s : spec_.subtasks) {
    if (s.name == name) return evaluate(s.goal, world_);
  }
  throw Error(ErrorCode::kUnknownPredicate, "task '" + spec_.name + "' has no subtask '" + name + "'");
}

}  // namespace memo
