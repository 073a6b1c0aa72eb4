#include "vtbench/toml.hpp"

#include <cctype>
#include <stdexcept>

#include "vtbench/io_util.hpp"

namespace vtb {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw std::runtime_error("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Strips a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

TomlValue parse_value(const std::string& raw, int line, size_t& pos);

TomlValue parse_array(const std::string& raw, int line, size_t& pos) {
  ++pos;  // consume '['
  std::vector<TomlValue> items;
  while (true) {
    while (pos < raw.size() && std::isspace(static_cast<unsigned char>(raw[pos])))
      ++pos;
    if (pos >= raw.size()) fail(line, "unterminated array");
    if (raw[pos] == ']') {
      ++pos;
      break;
    }
    items.push_back(parse_value(raw, line, pos));
    while (pos < raw.size() && std::isspace(static_cast<unsigned char>(raw[pos])))
      ++pos;
    if (pos < raw.size() && raw[pos] == ',') ++pos;
  }
  return TomlValue::of_array(std::move(items));
}

TomlValue parse_value(const std::string& raw, int line, size_t& pos) {
  while (pos < raw.size() && std::isspace(static_cast<unsigned char>(raw[pos])))
    ++pos;
  if (pos >= raw.size()) fail(line, "missing value");
  const char c = raw[pos];
  if (c == '[') return parse_array(raw, line, pos);
  if (c == '"') {
    size_t end = raw.find('"', pos + 1);
    if (end == std::string::npos) fail(line, "unterminated string");
    TomlValue v = TomlValue::of_string(raw.substr(pos + 1, end - pos - 1));
    pos = end + 1;
    return v;
  }
  size_t end = pos;
  while (end < raw.size() && raw[end] != ',' && raw[end] != ']' &&
         !std::isspace(static_cast<unsigned char>(raw[end])))
    ++end;
  const std::string tok = raw.substr(pos, end - pos);
  pos = end;
  if (tok == "true") return TomlValue::of_bool(true);
  if (tok == "false") return TomlValue::of_bool(false);
  bool int_like = !tok.empty();
  for (size_t i = 0; i < tok.size(); ++i) {
    const char ch = tok[i];
    if (std::isdigit(static_cast<unsigned char>(ch))) continue;
    if (i == 0 && (ch == '+' || ch == '-')) continue;
    int_like = false;
    break;
  }
  try {
    if (int_like) return TomlValue::of_int(std::stoll(tok));
    size_t used = 0;
    const double d = std::stod(tok, &used);
    if (used != tok.size()) fail(line, "bad value '" + tok + "'");
    return TomlValue::of_float(d);
  } catch (const std::invalid_argument&) {
    fail(line, "bad value '" + tok + "'");
  } catch (const std::out_of_range&) {
    fail(line, "value out of range '" + tok + "'");
  }
  fail(line, "unreachable");
}

std::string serialize_value(const TomlValue& v) {
  switch (v.kind) {
    case TomlValue::Kind::Int: return std::to_string(v.i);
    case TomlValue::Kind::Float: return format_double(v.f);
    case TomlValue::Kind::Bool: return v.b ? "true" : "false";
    case TomlValue::Kind::String: return "\"" + v.s + "\"";
    case TomlValue::Kind::Array: {
      std::string out = "[";
      for (size_t i = 0; i < v.arr.size(); ++i)
        out += (i ? ", " : "") + serialize_value(v.arr[i]);
      return out + "]";
    }
  }
  return "";
}

}  // namespace

double TomlValue::as_number() const {
  if (kind == Kind::Int) return static_cast<double>(i);
  if (kind == Kind::Float) return f;
  throw std::runtime_error("value is not numeric");
}

TomlValue TomlValue::of_int(int64_t v) {
  TomlValue t;
  t.kind = Kind::Int;
  t.i = v;
  return t;
}
TomlValue TomlValue::of_float(double v) {
  TomlValue t;
  t.kind = Kind::Float;
  t.f = v;
  return t;
}
TomlValue TomlValue::of_bool(bool v) {
  TomlValue t;
  t.kind = Kind::Bool;
  t.b = v;
  return t;
}
TomlValue TomlValue::of_string(std::string v) {
  TomlValue t;
  t.kind = Kind::String;
  t.s = std::move(v);
  return t;
}
TomlValue TomlValue::of_array(std::vector<TomlValue> v) {
  TomlValue t;
  t.kind = Kind::Array;
  t.arr = std::move(v);
  return t;
}

TomlTable toml_parse(const std::string& text) {
  TomlTable table;
  std::string section;
  table[section] = {};
  int line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t nl = text.find('\n', start);
    const std::string raw =
        text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    start = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_key(section)) fail(line_no, "bad section name '" + section + "'");
      table[section];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) fail(line_no, "bad key '" + key + "'");
    if (table[section].count(key)) fail(line_no, "duplicate key '" + key + "'");
    size_t pos = 0;
    const std::string rest = trim(line.substr(eq + 1));
    TomlValue v = parse_value(rest, line_no, pos);
    while (pos < rest.size() && std::isspace(static_cast<unsigned char>(rest[pos])))
      ++pos;
    if (pos != rest.size()) fail(line_no, "trailing characters after value");
    table[section][key] = std::move(v);
  }
  return table;
}

std::string toml_serialize(const TomlTable& table) {
  std::string out;
  auto emit = [&](const TomlSection& sec) {
    for (const auto& [k, v] : sec) out += k + " = " + serialize_value(v) + "\n";
  };
  if (auto it = table.find(""); it != table.end()) emit(it->second);
  for (const auto& [name, sec] : table) {
    if (name.empty()) continue;
    out += "[" + name + "]\n";
    emit(sec);
  }
  return out;
}

}  // namespace vtb
