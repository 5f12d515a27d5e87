#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace memo {

/// Position in meters and roll/pitch/yaw in radians, world frame.
struct Pose {
  double x = 0, y = 0, z = 0;
  double roll = 0, pitch = 0, yaw = 0;

  std::array<double, 6> as_array() const { return {x, y, z, roll, pitch, yaw}; }
  static Pose from_array(const std::array<double, 6>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5]};
  }
  bool operator==(const Pose&) const = default;
};

/// True when every component of `a` is within `tol` of `b`.
bool poses_match(const Pose& a, const Pose& b, double tol);

struct SceneNode {
  std::string label;
  std::string cls;
  Pose pose;
  std::array<double, 3> dimensions{0, 0, 0};

  bool operator==(const SceneNode&) const = default;
};

struct SceneEdge {
  std::string subject;
  std::string relation;
  std::string object;  // empty for unary relations ("is closed")

  bool operator==(const SceneEdge&) const = default;
};

/// Natural-language rendering of an edge, e.g. "the toaster door is closed".
std::string edge_text(const SceneEdge& edge);

/// Labeled nodes with poses plus relation edges over one observation.
struct SceneGraph {
  std::vector<SceneNode> nodes;
  std::vector<SceneEdge> edges;
  Pose gripper;

  const SceneNode* find(std::string_view label) const;
  std::vector<std::string> labels() const;
  /// Multi-line text for prompts.
  std::string describe() const;
};

}  // namespace memo
