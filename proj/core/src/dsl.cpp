#include <cctype>
#include <charconv>
#include <sstream>

#include "memo/dsl.hpp"

namespace memo {

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::kNumber: return "number";
    case ValueKind::kPose: return "pose";
    case ValueKind::kObject: return "object";
    case ValueKind::kString: return "string";
    case ValueKind::kBool: return "bool";
  }
  return "unknown";
}

std::optional<ValueKind> value_kind_from_string(std::string_view s) {
  for (auto k : {ValueKind::kNumber, ValueKind::kPose, ValueKind::kObject,
                 ValueKind::kString, ValueKind::kBool}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

ValueKind Value::kind() const {
  return static_cast<ValueKind>(data.index());
}

std::string SkillProgram::source_text() const { return render(*this); }

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  SkillProgram program() {
    SkillProgram out;
    skip_space();
    if (at_end()) fail("empty program");
    bool separated = true;
    while (true) {
      skip_space();
      if (at_end()) break;
      if (!separated) fail("expected ';' or newline between calls");
      out.calls.push_back(call());
      separated = skip_separators();
    }
    if (out.calls.empty()) fail("empty program");
    return out;
  }

  Value single_value() {
    skip_space();
    if (at_end()) fail("empty value");
    Value v = value();
    skip_space();
    if (!at_end()) fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::kSyntax, std::to_string(line_) + ":" +
                                        std::to_string(column_) + ": " + what);
  }

  bool at_end() const { return i_ >= text_.size(); }
  char peek(size_t ahead = 0) const {
    return i_ + ahead < text_.size() ? text_[i_ + ahead] : '\0';
  }
  char advance() {
    const char c = text_[i_++];
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    return c;
  }
  SourcePos here() const { return {line_, column_}; }

  // Skips blanks and comments; returns true if a newline was crossed.
  bool skip_space() {
    bool newline = false;
    while (!at_end()) {
      const char c = peek();
      if (c == '#') {
        while (!at_end() && peek() != '\n') advance();
      } else if (c == '\n') {
        newline = true;
        advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
    return newline;
  }

  bool skip_separators() {
    bool separated = skip_space();
    while (!at_end() && peek() == ';') {
      advance();
      separated = true;
      skip_space();
    }
    return separated;
  }

  void expect(char c) {
    skip_inline_space();
    if (at_end() || peek() != c) fail(std::string("expected '") + c + "'");
    advance();
  }

  void skip_inline_space() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\r' ||
                         peek() == '\n')) {
      advance();
    }
  }

  static bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  }

  std::string identifier() {
    if (at_end() || !ident_start(peek())) fail("expected identifier");
    std::string out;
    while (!at_end() && ident_char(peek())) out += advance();
    return out;
  }

  SkillCall call() {
    SkillCall c;
    c.pos = here();
    c.skill_name = identifier();
    expect('(');
    skip_inline_space();
    if (peek() == ')') {
      advance();
      return c;
    }
    while (true) {
      skip_inline_space();
      c.args.push_back(value());
      skip_inline_space();
      if (peek() == ',') {
        advance();
        continue;
      }
      if (peek() == ')') {
        advance();
        break;
      }
      fail("expected ',' or ')' in argument list");
    }
    return c;
  }

  Value value() {
    const SourcePos pos = here();
    const char c = peek();
    Value v;
    if (c == '"') {
      v.data = string_literal();
    } else if (c == '-' || c == '+' || c == '.' ||
               std::isdigit(static_cast<unsigned char>(c))) {
      v.data = number_with_unit();
    } else if (ident_start(c)) {
      const std::string word = identifier();
      if (word == "true" || word == "false") {
        v.data = (word == "true");
      } else if (word == "pose") {
        expect('(');
        std::array<double, 6> comps{};
        for (size_t k = 0; k < comps.size(); ++k) {
          skip_inline_space();
          comps[k] = raw_number();
          if (k + 1 < comps.size()) expect(',');
        }
        expect(')');
        v.data = Pose::from_array(comps);
      } else if (word == "obj") {
        expect('(');
        skip_inline_space();
        if (peek() != '"') fail("obj() expects a quoted label");
        v.data = ObjectRef{string_literal()};
        expect(')');
      } else {
        fail("unexpected identifier '" + word + "' in argument");
      }
    } else {
      fail(at_end() ? "unexpected end of input" : "unexpected character '" + std::string(1, c) + "'");
    }
    v.pos = pos;
    return v;
  }

  std::string string_literal() {
    advance();  // opening quote
    std::string out;
    while (true) {
      if (at_end()) fail("unterminated string");
      const char c = advance();
      if (c == '"') break;
      if (c == '\\') {
        if (at_end()) fail("unterminated escape");
        const char e = advance();
        if (e == 'n') {
          out += '\n';
        } else if (e == '"' || e == '\\') {
          out += e;
        } else {
          fail("unknown escape");
        }
      } else if (c == '\n') {
        fail("newline in string");
      } else {
        out += c;
      }
    }
    return out;
  }

  double raw_number() {
    const size_t start = i_;
    if (peek() == '-' || peek() == '+') advance();
    bool digits = false;
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      advance();
      digits = true;
    }
    if (peek() == '.') {
      advance();
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        advance();
        digits = true;
      }
    }
    if (!digits) fail("malformed number");
    if (peek() == 'e' || peek() == 'E') {
      advance();
      if (peek() == '-' || peek() == '+') advance();
      if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("malformed exponent");
      while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
    }
    std::string_view token = text_.substr(start, i_ - start);
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double out = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
    if (ec != std::errc() || ptr != token.data() + token.size()) fail("malformed number");
    return out;
  }

  Number number_with_unit() {
    Number n{raw_number(), Unit::kNone};
    if (peek() == 'r' && peek(1) == 'a' && peek(2) == 'd' && !ident_char(peek(3))) {
      advance(), advance(), advance();
      n.unit = Unit::kRadian;
    } else if (peek() == 'm' && !ident_char(peek(1))) {
      advance();
      n.unit = Unit::kMeter;
    } else if (ident_char(peek())) {
      fail("unknown unit suffix");
    }
    return n;
  }

  std::string_view text_;
  size_t i_ = 0;
  int line_ = 1;
  int column_ = 1;
};

void append_number(std::string& out, double v) {
  if (v == 0.0) v = 0.0;  // folds -0 into 0
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

void append_string(std::string& out, const std::string& s) {
  out += '"';
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  out += '"';
}

}  // namespace

SkillProgram parse(std::string_view text) { return Parser(text).program(); }

Value parse_value(std::string_view text) { return Parser(text).single_value(); }

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

std::string render(const Value& value) {
  std::string out;
  std::visit(
      [&out](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Number>) {
          append_number(out, v.value);
          if (v.unit == Unit::kMeter) out += 'm';
          if (v.unit == Unit::kRadian) out += "rad";
        } else if constexpr (std::is_same_v<T, Pose>) {
          out += "pose(";
          const auto comps = v.as_array();
          for (size_t i = 0; i < comps.size(); ++i) {
            if (i) out += ',';
            append_number(out, comps[i]);
          }
          out += ')';
        } else if constexpr (std::is_same_v<T, ObjectRef>) {
          out += "obj(";
          append_string(out, v.label);
          out += ')';
        } else if constexpr (std::is_same_v<T, std::string>) {
          append_string(out, v);
        } else {
          out += v ? "true" : "false";
        }
      },
      value.data);
  return out;
}

std::string render(const SkillCall& call) {
  std::string out = call.skill_name + "(";
  for (size_t i = 0; i < call.args.size(); ++i) {
    if (i) out += ',';
    out += render(call.args[i]);
  }
  out += ')';
  return out;
}

std::string render(const SkillProgram& program) {
  std::string out;
  for (size_t i = 0; i < program.calls.size(); ++i) {
    if (i) out += ";\n";
    out += render(program.calls[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

void SkillRegistry::add(SkillSignature signature) {
  if (signature.name.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "skill name must be non-empty");
  }
  if (signature.description.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "skill '" + signature.name + "' needs a description");
  }
  if (find(signature.name) != nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate skill '" + signature.name + "'");
  }
  signatures_.push_back(std::move(signature));
}

const SkillSignature* SkillRegistry::find(std::string_view name) const {
  for (const auto& sig : signatures_) {
    if (sig.name == name) return &sig;
  }
  return nullptr;
}

const SkillRegistry& SkillRegistry::standard() {
  static const SkillRegistry registry = [] {
    SkillRegistry r;
    r.add({"move_to", {{"target", ValueKind::kPose}},
           "Move the end-effector in a straight line to the target pose."});
    r.add({"move_delta",
           {{"dx", ValueKind::kNumber, Unit::kMeter},
            {"dy", ValueKind::kNumber, Unit::kMeter},
            {"dz", ValueKind::kNumber, Unit::kMeter}},
           "Translate the end-effector by an offset in meters, keeping orientation."});
    r.add({"grasp", {{"target", ValueKind::kObject}},
           "Close the gripper on the named object; the gripper must be within 0.03 m of it."});
    r.add({"release", {},
           "Open the gripper and let go of the held object; it settles on the surface below."});
    r.add({"open_gripper", {}, "Open the gripper, dropping anything held."});
    r.add({"close_gripper", {}, "Close the gripper without grasping an object."});
    r.add({"rotate_joint", {{"target", ValueKind::kObject}, {"amount", ValueKind::kNumber}},
           "Move the joint of the named door or lid by an amount (radians for hinges, "
           "meters for sliders); the gripper must hold that joint's handle."});
    r.add({"set_yaw", {{"angle", ValueKind::kNumber, Unit::kRadian}},
           "Rotate the end-effector (and anything held) to an absolute yaw in radians."});
    return r;
  }();
  return registry;
}

std::string describe(const SkillRegistry& registry) {
  std::ostringstream os;
  for (const auto& sig : registry.signatures()) {
    os << "- " << sig.name << "(";
    for (size_t i = 0; i < sig.params.size(); ++i) {
      if (i) os << ", ";
      os << sig.params[i].name << ": " << to_string(sig.params[i].kind);
    }
    os << ") - " << sig.description << "\n";
  }
  return os.str();
}

std::vector<ValidationError> validate(const SkillProgram& program,
                                      const SkillRegistry& registry) {
  std::vector<ValidationError> errors;
  if (program.calls.empty()) {
    errors.push_back({0, ErrorCode::kSyntax, "program has no calls"});
  }
  for (size_t i = 0; i < program.calls.size(); ++i) {
    const SkillCall& call = program.calls[i];
    const SkillSignature* sig = registry.find(call.skill_name);
    if (sig == nullptr) {
      errors.push_back({i, ErrorCode::kUnknownSkill,
                        "call " + std::to_string(i) + ": unknown skill '" +
                            call.skill_name + "'"});
      continue;
    }
    if (call.args.size() != sig->params.size()) {
      errors.push_back({i, ErrorCode::kArityMismatch,
                        "call " + std::to_string(i) + ": " + call.skill_name +
                            " expects " + std::to_string(sig->params.size()) +
                            " argument(s), got " + std::to_string(call.args.size())});
      continue;
    }
    for (size_t a = 0; a < call.args.size(); ++a) {
      const ParamSpec& want = sig->params[a];
      const Value& got = call.args[a];
      bool ok = got.kind() == want.kind;
      if (ok && want.kind == ValueKind::kNumber && want.unit != Unit::kNone) {
        const Unit unit = std::get<Number>(got.data).unit;
        ok = unit == Unit::kNone || unit == want.unit;
      }
      if (!ok) {
        errors.push_back({i, ErrorCode::kKindMismatch,
                          "call " + std::to_string(i) + ": " + call.skill_name +
                              " argument '" + want.name + "' expects " +
                              std::string(to_string(want.kind)) + ", got " +
                              std::string(to_string(got.kind()))});
      }
    }
  }
  return errors;
}

}  // namespace memo
