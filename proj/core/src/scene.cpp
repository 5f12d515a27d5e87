#include "memo/scene.hpp"

#include <cmath>
#include <sstream>

namespace memo {

bool poses_match(const Pose& a, const Pose& b, double tol) {
  const auto pa = a.as_array();
  const auto pb = b.as_array();
  for (size_t i = 0; i < pa.size(); ++i) {
    if (std::abs(pa[i] - pb[i]) > tol) return false;
  }
  return true;
}

std::string edge_text(const SceneEdge& edge) {
  std::string out;
  if (edge.subject != "gripper") out += "the ";
  out += edge.subject + " " + edge.relation;
  if (!edge.object.empty()) {
    out += (edge.object == "gripper" ? " " : " the ") + edge.object;
  }
  return out;
}

const SceneNode* SceneGraph::find(std::string_view label) const {
  for (const auto& node : nodes) {
    if (node.label == label) return &node;
  }
  return nullptr;
}

std::vector<std::string> SceneGraph::labels() const {
  std::vector<std::string> out;
  out.reserve(nodes.size());
  for (const auto& node : nodes) out.push_back(node.label);
  return out;
}

namespace {

void put_number(std::ostringstream& os, double v) {
  // Scene text is for prompts; three decimals keep it readable.
  const double rounded = std::round(v * 1000.0) / 1000.0;
  os << (rounded == 0.0 ? 0.0 : rounded);
}

}  // namespace

std::string SceneGraph::describe() const {
  std::ostringstream os;
  os << "Objects:\n";
  for (const auto& n : nodes) {
    os << "- " << n.label << " (" << n.cls << ") at pose(";
    const auto p = n.pose.as_array();
    for (size_t i = 0; i < p.size(); ++i) {
      if (i) os << ",";
      put_number(os, p[i]);
    }
    os << ") size(";
    for (size_t i = 0; i < 3; ++i) {
      if (i) os << ",";
      put_number(os, n.dimensions[i]);
    }
    os << ")\n";
  }
  os << "Relations:\n";
  for (const auto& e : edges) os << "- " << edge_text(e) << "\n";
  return os.str();
}

}  // namespace memo
