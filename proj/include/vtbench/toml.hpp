#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vtb {

// Minimal TOML subset: one level of [section], bare keys, values limited to
// integers, floats, booleans, double-quoted strings, and (nested) single-line
// arrays. '#' starts a comment. Enough for flat experiment configs.
struct TomlValue {
  enum class Kind { Int, Float, Bool, String, Array };
  Kind kind = Kind::Int;
  int64_t i = 0;
  double f = 0.0;
  bool b = false;
  std::string s;
  std::vector<TomlValue> arr;

  double as_number() const;  // Int or Float; throws otherwise
  static TomlValue of_int(int64_t v);
  static TomlValue of_float(double v);
  static TomlValue of_bool(bool v);
  static TomlValue of_string(std::string v);
  static TomlValue of_array(std::vector<TomlValue> v);
};

// sections[""] holds top-level keys.
using TomlSection = std::map<std::string, TomlValue>;
using TomlTable = std::map<std::string, TomlSection>;

TomlTable toml_parse(const std::string& text);  // throws with line numbers
std::string toml_serialize(const TomlTable& table);

}  // namespace vtb
