#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "memo/simenv.hpp"
#include "test_support.hpp"

namespace memo {
namespace {

using testing::Rng;

TaskSpec task(const std::string& file) { return load_task(testing::asset_path("tasks/" + file)); }

SkillCall call(const std::string& text) { return parse(text).calls.at(0); }

// Plain row-major ZYX rotation, written independently of the simulator.
using Mat = std::array<std::array<double, 3>, 3>;

Mat rpy_matrix(const Pose& p) {
  const double cr = std::cos(p.roll), sr = std::sin(p.roll);
  const double cp = std::cos(p.pitch), sp = std::sin(p.pitch);
  const double cy = std::cos(p.yaw), sy = std::sin(p.yaw);
  return {{{cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr},
           {sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr},
           {-sp, cp * sr, cp * cr}}};
}

Mat mul(const Mat& a, const Mat& b) {
  Mat c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

void expect_rotation_near(const Mat& a, const Mat& b, double tol) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(a[i][j], b[i][j], tol) << i << "," << j;
}

TEST(SimEnv, ResetGoalIsFalse) {
  const auto library = TaskLibrary::load_default();
  for (const auto& t : library.tasks()) {
    SimEnv env(t);
    env.reset();
    EXPECT_FALSE(env.check_success()) << t.name;
  }
}

TEST(SimEnv, CheckpointRestore) {
  SimEnv env(task("put_the_banana_on_the_plate.json"));
  const World start = env.reset();
  const CheckpointId cp = env.checkpoint();
  ASSERT_TRUE(env.step(call("move_to(pose(0.3,0.1,0.4,0,0,0))")).ok());
  EXPECT_NE(env.world(), start);
  EXPECT_EQ(env.restore(cp), start);
}

TEST(SimEnv, StaleCheckpointAfterReset) {
  SimEnv env(task("put_the_banana_on_the_plate.json"));
  env.reset();
  const CheckpointId cp = env.checkpoint();
  env.reset();
  try {
    env.restore(cp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownCheckpoint);
  }
}

TEST(Step, BelowTableIsTableCollision) {
  SimEnv env(task("put_the_banana_on_the_plate.json"));
  const World before = env.reset();
  const auto out = env.step(call("move_to(pose(0.3,0.1,-0.05,0,0,0))"));
  EXPECT_EQ(out.violation, Violation::kTableCollision);
  EXPECT_EQ(env.world(), before);
}

TEST(Step, GraspedBananaTracksGripper) {
  SimEnv env(task("put_the_banana_on_the_plate.json"));
  env.reset();
  const ObjectBody banana = *env.world().find("banana");
  ASSERT_TRUE(env.step(call("move_to(pose(" + std::to_string(banana.pose.x) + "," +
                            std::to_string(banana.pose.y) + ",0.4,0,0,0))")).ok());
  SkillCall down{"move_to", {Value::pose({banana.pose.x, banana.pose.y, banana.pose.z, 0, 0, 0})}, {}};
  ASSERT_TRUE(env.step(down).ok());
  ASSERT_TRUE(env.step(call("grasp(obj(\"banana\"))")).ok());
  EXPECT_EQ(env.world().gripper.held, "banana");
  ASSERT_TRUE(env.step(call("move_delta(0,0,0.2)")).ok());
  EXPECT_NEAR(env.world().find("banana")->pose.z, banana.pose.z + 0.2, 1e-12);
  const auto g = env.scene_graph();
  bool holding = false;
  for (const auto& e : g.edges) holding |= e.subject == "gripper" && e.relation == "is holding" && e.object == "banana";
  EXPECT_TRUE(holding);
}

TEST(Step, GraspOutOfReach) {
  SimEnv env(task("put_the_banana_on_the_plate.json"));
  const World before = env.reset();
  EXPECT_EQ(env.step(call("grasp(obj(\"banana\"))")).violation, Violation::kGraspOutOfReach);
  EXPECT_EQ(env.world(), before);
  EXPECT_EQ(env.step(call("release()")).violation, Violation::kNothingHeld);
}

// Hinge oracle for the toaster: axis -z through (0.475, 0.4), handle at rest
// at (0.435, 0.15, 0.1) with yaw 0.
Pose toaster_handle_at(double angle) {
  const double ox = 0.475, oy = 0.4;
  const double rx = 0.435 - ox, ry = 0.15 - oy;
  const double c = std::cos(-angle), s = std::sin(-angle);
  return {ox + c * rx - s * ry, oy + s * rx + c * ry, 0.1, 0, 0, -angle};
}

TEST(Step, RotateJointFollowsHingeKinematics) {
  SimEnv env(task("make_toast.json"));
  env.reset();
  ASSERT_TRUE(env.step(call("move_to(pose(0.435,0.15,0.1,0,0,0))")).ok());
  ASSERT_TRUE(env.step(call("grasp(obj(\"toaster handle\"))")).ok());
  ASSERT_TRUE(env.step(call("rotate_joint(obj(\"toaster door\"),0.7)")).ok());
  ASSERT_TRUE(env.step(call("rotate_joint(obj(\"toaster door\"),0.5)")).ok());  // relative
  const Pose want = toaster_handle_at(1.2);
  const Pose got = env.world().find("toaster handle")->pose;
  EXPECT_NEAR(got.x, want.x, 1e-9);
  EXPECT_NEAR(got.y, want.y, 1e-9);
  EXPECT_NEAR(got.z, want.z, 1e-9);
  EXPECT_NEAR(got.yaw, want.yaw, 1e-9);
  EXPECT_NEAR(env.world().joint_for("toaster door")->position, 1.2, 1e-12);
  // Gripper stays on the handle.
  EXPECT_NEAR(env.world().gripper.pose.x, want.x, 1e-9);
  EXPECT_NEAR(env.world().gripper.pose.y, want.y, 1e-9);

  bool open = false;
  for (const auto& e : env.scene_graph().edges) open |= edge_text(e) == "the toaster door is open";
  EXPECT_TRUE(open);
}

TEST(Step, JointLimitLeavesWorldUnchanged) {
  SimEnv env(task("make_toast.json"));
  env.reset();
  ASSERT_TRUE(env.step(call("move_to(pose(0.435,0.15,0.1,0,0,0))")).ok());
  ASSERT_TRUE(env.step(call("grasp(obj(\"toaster handle\"))")).ok());
  const World before = env.world();
  EXPECT_EQ(env.step(call("rotate_joint(obj(\"toaster door\"),2.0)")).violation, Violation::kJointLimit);
  EXPECT_EQ(env.world(), before);
  EXPECT_EQ(env.step(call("rotate_joint(obj(\"toaster door\"),-0.1)")).violation, Violation::kJointLimit);
  EXPECT_EQ(env.world(), before);
}

TEST(Step, RotateJointNeedsHandleGrasp) {
  SimEnv env(task("make_toast.json"));
  const World before = env.reset();
  EXPECT_FALSE(env.step(call("rotate_joint(obj(\"toaster door\"),1.0)")).ok());
  EXPECT_EQ(env.world(), before);
}

TEST(SceneGraph, ClosedDoorEdgeText) {
  SimEnv env(task("make_toast.json"));
  env.reset();
  bool closed = false;
  for (const auto& e : env.scene_graph().edges) closed |= edge_text(e) == "the toaster door is closed";
  EXPECT_TRUE(closed);
}

TEST(SceneGraph, CubeOnPlate) {
  World w;
  w.objects.push_back({"plate", "plate", {0.5, 0, 0.01, 0, 0, 0}, {0.2, 0.2, 0.02}, false, false, ""});
  w.objects.push_back({"cube", "cube", {0.5, 0, 0.04, 0, 0, 0}, {0.04, 0.04, 0.04}, true, false, ""});
  bool on = false;
  for (const auto& e : build_scene_graph(w).edges) on |= e.subject == "cube" && e.relation == "is on" && e.object == "plate";
  EXPECT_TRUE(on);
}

TEST(SceneGraph, OneNodePerBodyAndPart) {
  SimEnv env(task("make_toast.json"));
  env.reset();
  const auto g = env.scene_graph();
  for (const auto& o : env.world().objects) EXPECT_NE(g.find(o.label), nullptr) << o.label;
  EXPECT_NE(g.find("toaster handle"), nullptr);
}

TEST(Predicates, BananaOnPlate) {
  SimEnv env(task("put_the_banana_on_the_plate.json"));
  env.reset();
  EXPECT_FALSE(env.check_success());
  World w = env.world();
  ObjectBody* banana = w.find("banana");
  const ObjectBody* plate = w.find("plate");
  banana->pose.x = plate->pose.x;
  banana->pose.y = plate->pose.y;
  banana->pose.z = plate->pose.z + plate->dims[2] / 2 + banana->dims[2] / 2;
  EXPECT_TRUE(evaluate(env.spec().goal, w));
}

TEST(Predicates, UnknownSubtaskAndOperator) {
  SimEnv env(task("make_toast.json"));
  env.reset();
  try {
    env.check_subtask("dance");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownPredicate);
  }
  EXPECT_THROW(check_predicate({nlohmann::json{{"levitating", "cup"}}}), Error);
}

TEST(Teacher, FiresOnMatchingViolation) {
  TeacherScript script;
  script.triggers.push_back({"violation", "table_collision", "", "", "you hit the table while you were moving", 1});
  ScriptedTeacher teacher(script);
  ExecutionTrace trace;
  trace.events.push_back({TraceEvent::Kind::kCall, "s", "move_to", "move_to(...)", Violation::kNone, ""});
  EXPECT_EQ(teacher.observe(trace), std::nullopt);
  trace.events.push_back({TraceEvent::Kind::kViolation, "s", "move_to", "move_to(...)", Violation::kTableCollision, ""});
  EXPECT_EQ(teacher.observe(trace), "you hit the table while you were moving");
  // max_fires = 1, across attempts too
  trace.attempt = 2;
  EXPECT_EQ(teacher.observe(trace), std::nullopt);
}

TEST(Teacher, SilentOnSuccessTrace) {
  ScriptedTeacher teacher(task("make_toast.json").teacher);
  ExecutionTrace trace;
  trace.events.push_back({TraceEvent::Kind::kSubtaskDone, "open the toaster", "", "", Violation::kNone, ""});
  EXPECT_EQ(teacher.observe(trace), std::nullopt);
}

TEST(Teacher, FiltersBySubtaskAndKind) {
  TeacherScript script;
  script.triggers.push_back({"subtask_failed", "", "open the toaster", "", "wrong way", 2});
  ScriptedTeacher teacher(script);
  ExecutionTrace trace;
  trace.events.push_back({TraceEvent::Kind::kSubtaskFailed, "pick up the bread", "", "", Violation::kNone, ""});
  EXPECT_EQ(teacher.observe(trace), std::nullopt);
  trace.events.back().subtask = "open the toaster";
  EXPECT_EQ(teacher.observe(trace), "wrong way");
  EXPECT_EQ(teacher.observe(trace), "wrong way");
  EXPECT_EQ(teacher.observe(trace), std::nullopt);
}

// Random call sequences on every task: violations never change the world,
// held objects stay rigid, and replays are bitwise identical.
TEST(SimEnvProperty, AtomicRigidDeterministic) {
  Rng rng(17);
  const auto library = TaskLibrary::load_default();
  for (const auto& t : library.tasks()) {
    SimEnv env(t);
    env.reset();
    const SceneGraph scene = env.scene_graph();
    std::vector<SkillCall> calls;
    for (int i = 0; i < 12; ++i) {
      for (auto& c : testing::random_program(rng, &scene).calls) calls.push_back(std::move(c));
    }
    for (const auto& c : calls) {
      const World before = env.world();
      const auto out = env.step(c);
      if (!out.ok()) ASSERT_EQ(env.world(), before) << t.name << ": " << render(c);
      const World& w = env.world();
      if (w.gripper.held) {
        const ObjectBody* held = w.find(*w.gripper.held);
        const Mat rg = rpy_matrix(w.gripper.pose);
        const Pose& off = w.gripper.grasp_offset;
        for (int i = 0; i < 3; ++i) {
          const std::array<double, 3> g{w.gripper.pose.x, w.gripper.pose.y, w.gripper.pose.z};
          const std::array<double, 3> h{held->pose.x, held->pose.y, held->pose.z};
          const double want = g[i] + rg[i][0] * off.x + rg[i][1] * off.y + rg[i][2] * off.z;
          ASSERT_NEAR(h[i], want, 1e-9) << t.name;
        }
        expect_rotation_near(rpy_matrix(held->pose), mul(rg, rpy_matrix(off)), 1e-9);
      }
      for (const auto& j : w.joints) {
        ASSERT_GE(j.position, j.lower - 1e-12);
        ASSERT_LE(j.position, j.upper + 1e-12);
      }
    }
    SimEnv again(t);
    again.reset();
    for (const auto& c : calls) again.step(c);
    EXPECT_EQ(to_json(again.world()).dump(), to_json(env.world()).dump()) << t.name;
  }
}

}  // namespace
}  // namespace memo
