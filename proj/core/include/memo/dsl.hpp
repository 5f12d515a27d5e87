#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "memo/error.hpp"
#include "memo/scene.hpp"

namespace memo {

// ---------------------------------------------------------------------------
// Values and programs
// ---------------------------------------------------------------------------

enum class ValueKind { kNumber, kPose, kObject, kString, kBool };
enum class Unit { kNone, kMeter, kRadian };

std::string_view to_string(ValueKind kind);
std::optional<ValueKind> value_kind_from_string(std::string_view s);

struct Number {
  double value = 0;
  Unit unit = Unit::kNone;
  bool operator==(const Number&) const = default;
};

struct ObjectRef {
  std::string label;
  bool operator==(const ObjectRef&) const = default;
};

struct SourcePos {
  int line = 0;
  int column = 0;
};

/// One literal argument. Equality is structural and ignores `pos`.
struct Value {
  std::variant<Number, Pose, ObjectRef, std::string, bool> data;
  SourcePos pos;

  ValueKind kind() const;
  bool operator==(const Value& other) const { return data == other.data; }

  static Value number(double v, Unit unit = Unit::kNone) { return {Number{v, unit}, {}}; }
  static Value pose(const Pose& p) { return {p, {}}; }
  static Value object(std::string label) { return {ObjectRef{std::move(label)}, {}}; }
  static Value string(std::string s) { return {std::move(s), {}}; }
  static Value boolean(bool b) { return {b, {}}; }
};

struct SkillCall {
  std::string skill_name;
  std::vector<Value> args;
  SourcePos pos;

  bool operator==(const SkillCall& other) const {
    return skill_name == other.skill_name && args == other.args;
  }
};

/// An ordered, non-empty sequence of skill calls.
struct SkillProgram {
  std::vector<SkillCall> calls;

  /// Canonical text form; identical to render(*this).
  std::string source_text() const;
  bool operator==(const SkillProgram& other) const { return calls == other.calls; }
};

/// Parses DSL source. Throws Error{kSyntax} with "line:column" in the message.
/// Unknown skill names are accepted here and reported by validate().
SkillProgram parse(std::string_view text);

/// Parses a single literal such as `pose(0,0,0,0,0,0)` or `obj("cup")`.
Value parse_value(std::string_view text);

/// Canonical rendering: calls joined by ";\n", arguments by ",", numbers in
/// shortest round-trip form.
std::string render(const SkillProgram& program);
std::string render(const SkillCall& call);
std::string render(const Value& value);

// ---------------------------------------------------------------------------
// Registry and validation
// ---------------------------------------------------------------------------

struct ParamSpec {
  std::string name;
  ValueKind kind = ValueKind::kNumber;
  Unit unit = Unit::kNone;
};

struct SkillSignature {
  std::string name;
  std::vector<ParamSpec> params;
  std::string description;
};

class SkillRegistry {
 public:
  /// Throws Error{kInvalidArgument} on duplicate names or empty descriptions.
  void add(SkillSignature signature);
  const SkillSignature* find(std::string_view name) const;
  const std::vector<SkillSignature>& signatures() const { return signatures_; }

  /// move_to, move_delta, grasp, release, open_gripper, close_gripper,
  /// rotate_joint, set_yaw.
  static const SkillRegistry& standard();

 private:
  std::vector<SkillSignature> signatures_;
};

/// "move_to(target: pose) - description" lines for prompts.
std::string describe(const SkillRegistry& registry);

struct ValidationError {
  size_t call_index = 0;
  ErrorCode code = ErrorCode::kUnknownSkill;
  std::string message;
};

/// Empty result means the program is valid against the registry.
std::vector<ValidationError> validate(const SkillProgram& program,
                                      const SkillRegistry& registry);

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

/// Literal position inside a program: call index and argument index.
struct Slot {
  size_t call = 0;
  size_t arg = 0;
  auto operator<=>(const Slot&) const = default;
};

enum class BindingType {
  kObjectRef,        // the object parameter's label
  kObjectPose,       // pose of the object parameter in the scene
  kObjectDimension,  // one extent (axis 0..2) of the object parameter
  kFree,             // the free parameter's value
};

std::string_view to_string(BindingType type);

struct Binding {
  BindingType type = BindingType::kFree;
  std::string param;
  int axis = 0;
  bool operator==(const Binding&) const = default;
};

struct TemplateParam {
  std::string name;
  ValueKind kind = ValueKind::kNumber;
  Value default_value;
  bool operator==(const TemplateParam&) const = default;
};

/// A program whose literal slots are bound to scene lookups or parameters.
/// `body` holds the originating literals; they double as parameter defaults.
struct Template {
  std::string name;
  std::vector<TemplateParam> params;
  std::map<Slot, Binding> bindings;
  SkillProgram body;

  const TemplateParam* find_param(std::string_view name) const;
  /// Assignment reproducing the originating program on the originating scene.
  std::map<std::string, Value> defaults() const;
  bool operator==(const Template&) const = default;
};

/// Literal-to-scene match tolerance in meters (and radians for orientation).
inline constexpr double kBindingTolerance = 1e-6;

/// Lifts literals into bindings. Pose literals matching a scene node pose bind
/// to that node, meter/unitless numbers matching a node extent bind to that
/// dimension, object refs naming a scene node bind to an object parameter.
/// Every other pose/number/object literal becomes a free parameter.
Template templatize(const SkillProgram& program, const SceneGraph& scene,
                    std::string name = "template");

/// Concrete program for `scene`. Every parameter must be assigned (see
/// Template::defaults()); object parameters accept ObjectRef or string values.
/// Throws Error{kMissingObject} naming the label, Error{kMissingParam}, or the
/// first validation error against `registry`.
SkillProgram instantiate(const Template& tmpl, const SceneGraph& scene,
                         const std::map<std::string, Value>& args,
                         const SkillRegistry& registry = SkillRegistry::standard());

/// Positional call form used by generated programs: `open_door(obj("x"))`.
/// Missing trailing arguments fall back to defaults.
std::map<std::string, Value> bind_positional(const Template& tmpl,
                                             const std::vector<Value>& args);

/// Replaces calls naming one of `templates` by their instantiation.
SkillProgram expand_templates(const SkillProgram& program,
                              const std::vector<Template>& templates,
                              const SceneGraph& scene,
                              const SkillRegistry& registry = SkillRegistry::standard());

/// Human-readable template source for prompts:
///   template open_door(handle: object = "toaster handle") { ... }
std::string render_template(const Template& tmpl);

}  // namespace memo
