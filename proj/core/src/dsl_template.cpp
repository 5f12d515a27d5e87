#include <cctype>
#include <cmath>
#include <set>

#include "memo/dsl.hpp"

namespace memo {

std::string_view to_string(BindingType type) {
  switch (type) {
    case BindingType::kObjectRef: return "object_ref";
    case BindingType::kObjectPose: return "object_pose";
    case BindingType::kObjectDimension: return "object_dimension";
    case BindingType::kFree: return "free";
  }
  return "unknown";
}

const TemplateParam* Template::find_param(std::string_view param_name) const {
  for (const auto& p : params) {
    if (p.name == param_name) return &p;
  }
  return nullptr;
}

std::map<std::string, Value> Template::defaults() const {
  std::map<std::string, Value> out;
  for (const auto& p : params) out.emplace(p.name, p.default_value);
  return out;
}

namespace {

std::string sanitize(std::string_view label) {
  std::string out;
  bool pending_sep = false;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      if (pending_sep && !out.empty()) out += '_';
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      pending_sep = false;
    } else {
      pending_sep = true;
    }
  }
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out.front()))) {
    out = "obj_" + out;
  }
  return out;
}

class Lifter {
 public:
  Lifter(const SceneGraph& scene, Template& out) : scene_(scene), t_(out) {}

  void run(const SkillProgram& program) {
    const auto& registry = SkillRegistry::standard();
    for (size_t ci = 0; ci < program.calls.size(); ++ci) {
      const SkillCall& call = program.calls[ci];
      const SkillSignature* sig = registry.find(call.skill_name);
      for (size_t ai = 0; ai < call.args.size(); ++ai) {
        const Value& v = call.args[ai];
        const std::string hint =
            (sig && ai < sig->params.size()) ? sig->params[ai].name : "arg";
        lift({ci, ai}, v, hint);
      }
    }
  }

 private:
  void lift(Slot slot, const Value& v, const std::string& hint) {
    switch (v.kind()) {
      case ValueKind::kObject: {
        const auto& label = std::get<ObjectRef>(v.data).label;
        if (scene_.find(label) != nullptr) {
          t_.bindings[slot] = {BindingType::kObjectRef, object_param(label), 0};
        } else {
          free(slot, v, hint);
        }
        return;
      }
      case ValueKind::kPose: {
        const Pose& pose = std::get<Pose>(v.data);
        const SceneNode* hit = search([&](const SceneNode& n) {
          return poses_match(n.pose, pose, kBindingTolerance);
        });
        if (hit) {
          t_.bindings[slot] = {BindingType::kObjectPose, object_param(hit->label), 0};
        } else {
          free(slot, v, hint);
        }
        return;
      }
      case ValueKind::kNumber: {
        const Number& n = std::get<Number>(v.data);
        if (n.unit != Unit::kRadian) {
          int axis = -1;
          const SceneNode* hit = search([&](const SceneNode& node) {
            for (int a = 0; a < 3; ++a) {
              const double d = node.dimensions[a];
              if (d > kBindingTolerance && std::abs(d - n.value) <= kBindingTolerance) {
                axis = a;
                return true;
              }
            }
            return false;
          });
          if (hit) {
            t_.bindings[slot] = {BindingType::kObjectDimension, object_param(hit->label), axis};
            return;
          }
        }
        free(slot, v, hint);
        return;
      }
      case ValueKind::kString:
      case ValueKind::kBool:
        return;
    }
  }

  // Objects already parameterized are preferred, then scene order.
  template <typename Pred>
  const SceneNode* search(Pred&& pred) {
    for (const auto& [label, _] : object_order_) {
      const SceneNode* node = scene_.find(label);
      if (node && pred(*node)) return node;
    }
    for (const auto& node : scene_.nodes) {
      if (pred(node)) return &node;
    }
    return nullptr;
  }

  std::string object_param(const std::string& label) {
    for (const auto& [l, name] : object_order_) {
      if (l == label) return name;
    }
    const std::string name = unique(sanitize(label));
    object_order_.emplace_back(label, name);
    t_.params.push_back({name, ValueKind::kObject, Value::object(label)});
    return name;
  }

  void free(Slot slot, const Value& v, const std::string& hint) {
    const std::string name = unique(hint);
    Value def = v;
    def.pos = {};
    t_.params.push_back({name, v.kind(), def});
    t_.bindings[slot] = {BindingType::kFree, name, 0};
  }

  std::string unique(const std::string& base) {
    std::string name = base;
    for (int k = 2; used_.count(name); ++k) name = base + "_" + std::to_string(k);
    used_.insert(name);
    return name;
  }

  const SceneGraph& scene_;
  Template& t_;
  std::vector<std::pair<std::string, std::string>> object_order_;
  std::set<std::string> used_;
};

std::string object_label(const Value& v, const std::string& param) {
  if (const auto* ref = std::get_if<ObjectRef>(&v.data)) return ref->label;
  if (const auto* s = std::get_if<std::string>(&v.data)) return *s;
  throw Error(ErrorCode::kKindMismatch,
              "parameter '" + param + "' expects an object, got " +
                  std::string(to_string(v.kind())));
}

}  // namespace

Template templatize(const SkillProgram& program, const SceneGraph& scene, std::string name) {
  Template t;
  t.name = std::move(name);
  t.body = program;
  for (auto& call : t.body.calls) {
    call.pos = {};
    for (auto& arg : call.args) arg.pos = {};
  }
  Lifter(scene, t).run(t.body);
  return t;
}

SkillProgram instantiate(const Template& tmpl, const SceneGraph& scene,
                         const std::map<std::string, Value>& args,
                         const SkillRegistry& registry) {
  std::set<std::string> scene_bound;
  for (const auto& [slot, b] : tmpl.bindings) {
    if (b.type != BindingType::kFree) scene_bound.insert(b.param);
  }

  std::map<std::string, Value> resolved;
  std::map<std::string, const SceneNode*> nodes;
  for (const auto& p : tmpl.params) {
    auto it = args.find(p.name);
    if (it == args.end()) {
      throw Error(ErrorCode::kMissingParam,
                  "template '" + tmpl.name + "' parameter '" + p.name + "' is not assigned");
    }
    if (scene_bound.count(p.name)) {
      const std::string label = object_label(it->second, p.name);
      const SceneNode* node = scene.find(label);
      if (node == nullptr) {
        throw Error(ErrorCode::kMissingObject, "object '" + label + "' is not in the scene");
      }
      nodes[p.name] = node;
      resolved[p.name] = Value::object(label);
    } else {
      Value v = it->second;
      if (p.kind == ValueKind::kObject && v.kind() == ValueKind::kString) {
        v = Value::object(std::get<std::string>(v.data));
      }
      if (v.kind() != p.kind) {
        throw Error(ErrorCode::kKindMismatch,
                    "parameter '" + p.name + "' expects " + std::string(to_string(p.kind)) +
                        ", got " + std::string(to_string(v.kind())));
      }
      resolved[p.name] = v;
    }
  }

  SkillProgram out = tmpl.body;
  for (const auto& [slot, b] : tmpl.bindings) {
    if (slot.call >= out.calls.size() || slot.arg >= out.calls[slot.call].args.size()) {
      throw Error(ErrorCode::kInvalidArgument, "template slot out of range");
    }
    Value& target = out.calls[slot.call].args[slot.arg];
    switch (b.type) {
      case BindingType::kObjectRef:
        target = resolved.at(b.param);
        break;
      case BindingType::kObjectPose:
        target = Value::pose(nodes.at(b.param)->pose);
        break;
      case BindingType::kObjectDimension: {
        const Unit unit = std::get<Number>(target.data).unit;
        target = Value::number(nodes.at(b.param)->dimensions.at(b.axis), unit);
        break;
      }
      case BindingType::kFree:
        target = resolved.at(b.param);
        break;
    }
    target.pos = {};
  }

  const auto errors = validate(out, registry);
  if (!errors.empty()) throw Error(errors.front().code, errors.front().message);
  return out;
}

std::map<std::string, Value> bind_positional(const Template& tmpl,
                                             const std::vector<Value>& args) {
  if (args.size() > tmpl.params.size()) {
    throw Error(ErrorCode::kArityMismatch,
                "template '" + tmpl.name + "' takes at most " +
                    std::to_string(tmpl.params.size()) + " argument(s)");
  }
  auto out = tmpl.defaults();
  for (size_t i = 0; i < args.size(); ++i) {
    Value v = args[i];
    v.pos = {};
    out[tmpl.params[i].name] = v;
  }
  return out;
}

SkillProgram expand_templates(const SkillProgram& program,
                              const std::vector<Template>& templates,
                              const SceneGraph& scene, const SkillRegistry& registry) {
  SkillProgram out;
  for (const auto& call : program.calls) {
    const Template* hit = nullptr;
    if (registry.find(call.skill_name) == nullptr) {
      for (const auto& t : templates) {
        if (t.name == call.skill_name) {
          hit = &t;
          break;
        }
      }
    }
    if (hit == nullptr) {
      out.calls.push_back(call);
      continue;
    }
    SkillProgram expanded = instantiate(*hit, scene, bind_positional(*hit, call.args), registry);
    for (auto& c : expanded.calls) out.calls.push_back(std::move(c));
  }
  return out;
}

std::string render_template(const Template& tmpl) {
  std::string out = "template " + tmpl.name + "(";
  for (size_t i = 0; i < tmpl.params.size(); ++i) {
    const auto& p = tmpl.params[i];
    if (i) out += ", ";
    out += p.name + ": " + std::string(to_string(p.kind)) + " = ";
    const Value& d = p.default_value;
    out += d.kind() == ValueKind::kObject ? "\"" + std::get<ObjectRef>(d.data).label + "\""
                                          : render(d);
  }
  out += ") {\n";
  for (size_t ci = 0; ci < tmpl.body.calls.size(); ++ci) {
    const SkillCall& call = tmpl.body.calls[ci];
    out += "  " + call.skill_name + "(";
    for (size_t ai = 0; ai < call.args.size(); ++ai) {
      if (ai) out += ",";
      auto it = tmpl.bindings.find({ci, ai});
      if (it == tmpl.bindings.end()) {
        out += render(call.args[ai]);
        continue;
      }
      const Binding& b = it->second;
      switch (b.type) {
        case BindingType::kObjectRef:
        case BindingType::kFree:
          out += b.param;
          break;
        case BindingType::kObjectPose:
          out += "pose_of(" + b.param + ")";
          break;
        case BindingType::kObjectDimension:
          out += "size_of(" + b.param + "," + std::to_string(b.axis) + ")";
          break;
      }
    }
    out += ci + 1 < tmpl.body.calls.size() ? ");\n" : ")\n";
  }
  out += "}";
  return out;
}

}  // namespace memo
