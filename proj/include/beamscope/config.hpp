#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace beamscope {

// Flat key-value tree parsed from the experiment config file. The accepted
// grammar is a small TOML subset: '#' comments, [section] headers (dotted
// names allowed), and key = value lines where value is a string in double
// quotes, true/false, an integer, a float, or a [..] array of numbers or
// strings. Keys are exposed fully dotted ("estimators.amp.lambda").
class ConfigTree {
 public:
  using Value = std::variant<bool, std::int64_t, double, std::string, std::vector<double>,
                             std::vector<std::string>>;

  static ConfigTree parse_file(const std::string& path);
  static ConfigTree parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  bool has_section(const std::string& prefix) const;

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_double_array(const std::string& key,
                                       const std::vector<double>& fallback) const;

  std::int64_t require_int(const std::string& key) const;
  double require_double(const std::string& key) const;
  std::string require_string(const std::string& key) const;
  std::vector<double> require_double_array(const std::string& key) const;

 private:
  const Value* find(const std::string& key) const;
  [[noreturn]] void missing(const std::string& key) const;

  std::map<std::string, Value> values_;
  std::string origin_;
};

}  // namespace beamscope
