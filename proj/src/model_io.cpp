#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "daeobs/model.hpp"

namespace daeobs {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{"name", "diff_states", "alg_states", "outputs", "params", "inputs_u",
                                          "inputs_v", "f", "g", "h", "x0", "w0_guess"};
  return keys;
}

[[noreturn]] void fail_at(const YAML::Node& node, const std::string& message) {
  const YAML::Mark m = node.Mark();
  throw ParseError(message, m.line + 1, m.column + 1);
}

template <class T>
T scalar_as(const YAML::Node& node, const std::string& what) {
  if (!node.IsScalar()) fail_at(node, what + " must be a scalar");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail_at(node, what + " has the wrong type");
  }
}

std::vector<std::string> string_list(const YAML::Node& root, const std::string& key, bool required) {
  const YAML::Node node = root[key];
  if (!node) {
    if (required) throw ParseError("missing required field '" + key + "'", 1, 1);
    return {};
  }
  if (node.IsNull()) return {};
  if (!node.IsSequence()) fail_at(node, "'" + key + "' must be a list");
  std::vector<std::string> out;
  for (const auto& item : node) out.push_back(scalar_as<std::string>(item, "entry of '" + key + "'"));
  return out;
}

std::vector<double> number_list(const YAML::Node& node, const std::string& key) {
  if (!node.IsSequence()) fail_at(node, "'" + key + "' must be a list of numbers");
  std::vector<double> out;
  for (const auto& item : node) out.push_back(scalar_as<double>(item, "entry of '" + key + "'"));
  return out;
}

template <class V>
std::vector<std::pair<std::string, V>> ordered_map(const YAML::Node& root, const std::string& key) {
  const YAML::Node node = root[key];
  if (!node || node.IsNull()) return {};
  if (!node.IsMap()) fail_at(node, "'" + key + "' must be a mapping");
  std::vector<std::pair<std::string, V>> out;
  for (const auto& kv : node) {
    out.emplace_back(scalar_as<std::string>(kv.first, "key of '" + key + "'"),
                     scalar_as<V>(kv.second, "value of '" + key + "'"));
  }
  return out;
}

// Locates the document node a ModelError refers to.
YAML::Node locate(const YAML::Node& root, const ModelError& e) {
  const YAML::Node field = root[e.field()];
  if (!field) return root;
  if (e.index() < 0) return field;
  if (field.IsSequence() && e.index() < static_cast<int>(field.size())) return field[static_cast<std::size_t>(e.index())];
  if (field.IsMap()) {
    int i = 0;
    for (const auto& kv : field) {
      if (i++ == e.index()) return e.expr_column() > 0 ? kv.second : kv.first;
    }
  }
  return field;
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void emit_names(YAML::Emitter& out, const char* key, const std::vector<std::string>& names) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const auto& n : names) out << n;
  out << YAML::EndSeq;
}

void emit_numbers(YAML::Emitter& out, const char* key, const std::vector<double>& values) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double v : values) out << format_number(v);
  out << YAML::EndSeq;
}

}  // namespace

DaeModel parse_model(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  if (!root.IsMap()) throw ParseError("model document must be a mapping", 1, 1);
  for (const auto& kv : root) {
    const auto key = scalar_as<std::string>(kv.first, "field name");
    if (known_keys().count(key) == 0) fail_at(kv.first, "unknown field '" + key + "'");
  }

  ModelSpec s;
  s.name = root["name"] ? scalar_as<std::string>(root["name"], "'name'") : "model";
  s.diff_states = string_list(root, "diff_states", true);
  s.alg_states = string_list(root, "alg_states", false);
  s.outputs = string_list(root, "outputs", false);
  s.params = ordered_map<double>(root, "params");
  s.inputs_u = ordered_map<std::string>(root, "inputs_u");
  s.inputs_v = ordered_map<std::string>(root, "inputs_v");
  s.f = string_list(root, "f", true);
  s.g = string_list(root, "g", false);
  s.h = string_list(root, "h", true);
  if (!root["x0"]) throw ParseError("missing required field 'x0'", 1, 1);
  s.x0 = number_list(root["x0"], "x0");
  if (root["w0_guess"] && !root["w0_guess"].IsNull()) s.w0_guess = number_list(root["w0_guess"], "w0_guess");

  try {
    return DaeModel(std::move(s));
  } catch (const ModelError& e) {
    const YAML::Node node = locate(root, e);
    const YAML::Mark m = node.Mark();
    int column = m.column + 1;
    if (e.expr_column() > 0) {
      // Quoted scalars carry the non-specific tag "!"; skip the quote.
      column += e.expr_column() - 1 + (node.Tag() == "!" ? 1 : 0);
    }
    throw ParseError(e.what(), m.line + 1, column);
  }
}

DaeModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

std::string serialize_model(const DaeModel& model) {
  const ModelSpec& s = model.spec();
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << s.name;
  emit_names(out, "diff_states", s.diff_states);
  emit_names(out, "alg_states", s.alg_states);
  emit_names(out, "outputs", s.outputs);

  out << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
  for (const auto& [name, value] : s.params) out << YAML::Key << name << YAML::Value << format_number(value);
  out << YAML::EndMap;

  const auto emit_inputs = [&](const char* key, const std::vector<std::pair<std::string, std::string>>& inputs) {
    out << YAML::Key << key << YAML::Value << YAML::BeginMap;
    for (const auto& [name, expr] : inputs) {
      out << YAML::Key << name << YAML::Value << YAML::DoubleQuoted << format_expression(*parse_expression(expr));
    }
    out << YAML::EndMap;
  };
  emit_inputs("inputs_u", s.inputs_u);
  emit_inputs("inputs_v", s.inputs_v);

  const auto emit_block = [&](const char* key, Block b, int n) {
    out << YAML::Key << key << YAML::Value << YAML::BeginSeq;
    for (int i = 0; i < n; ++i) out << YAML::DoubleQuoted << format_expression(model.expr(b, i));
    out << YAML::EndSeq;
  };
  emit_block("f", Block::f, model.n_x());
  emit_block("g", Block::g, model.n_w());
  emit_block("h", Block::h, model.n_y());

  emit_numbers(out, "x0", s.x0);
  if (s.w0_guess) emit_numbers(out, "w0_guess", *s.w0_guess);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace daeobs
