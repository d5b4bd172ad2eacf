#include "beamscope/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace beamscope {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// strips a trailing comment that is not inside a double-quoted string
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

[[noreturn]] void fail(const std::string& origin, int line_no, const std::string& msg) {
  throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": " + msg);
}

bool parse_int(const std::string& s, std::int64_t& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (...) {
    return false;
  }
}

ConfigTree::Value parse_scalar(const std::string& tok, const std::string& origin, int line_no) {
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"')
    return tok.substr(1, tok.size() - 2);
  if (tok == "true") return true;
  if (tok == "false") return false;
  std::int64_t i;
  if (parse_int(tok, i)) return i;
  double d;
  if (parse_double(tok, d)) return d;
  fail(origin, line_no, "cannot parse value '" + tok + "'");
}

std::vector<std::string> split_commas(const std::string& body) {
  std::vector<std::string> parts;
  std::string cur;
  bool in_str = false;
  for (char c : body) {
    if (c == '"') in_str = !in_str;
    if (c == ',' && !in_str) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  const std::string last = trim(cur);
  if (!last.empty()) parts.push_back(last);
  return parts;
}

}  // namespace

ConfigTree ConfigTree::parse_string(const std::string& text, const std::string& origin) {
  ConfigTree tree;
  tree.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail(origin, line_no, "empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(origin, line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) fail(origin, line_no, "empty key");
    if (val.empty()) fail(origin, line_no, "empty value for '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (tree.values_.count(full)) fail(origin, line_no, "duplicate key '" + full + "'");
    if (val.front() == '[') {
      if (val.back() != ']') fail(origin, line_no, "unterminated array");
      const auto parts = split_commas(val.substr(1, val.size() - 2));
      bool all_strings = !parts.empty();
      for (const auto& p : parts)
        if (p.empty() || p.front() != '"') all_strings = false;
      if (all_strings) {
        std::vector<std::string> arr;
        for (const auto& p : parts) arr.push_back(p.substr(1, p.size() - 2));
        tree.values_[full] = std::move(arr);
      } else {
        std::vector<double> arr;
        for (const auto& p : parts) {
          const Value v = parse_scalar(p, origin, line_no);
          if (std::holds_alternative<double>(v))
            arr.push_back(std::get<double>(v));
          else if (std::holds_alternative<std::int64_t>(v))
            arr.push_back(static_cast<double>(std::get<std::int64_t>(v)));
          else
            fail(origin, line_no, "array elements must be numbers");
        }
        tree.values_[full] = std::move(arr);
      }
    } else {
      tree.values_[full] = parse_scalar(val, origin, line_no);
    }
  }
  return tree;
}

ConfigTree ConfigTree::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path);
}

bool ConfigTree::has_section(const std::string& prefix) const {
  const std::string want = prefix + ".";
  auto it = values_.lower_bound(want);
  return it != values_.end() && it->first.compare(0, want.size(), want) == 0;
}

const ConfigTree::Value* ConfigTree::find(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

void ConfigTree::missing(const std::string& key) const {
  throw std::runtime_error(origin_ + ": missing required key '" + key + "'");
}

std::int64_t ConfigTree::get_int(const std::string& key, std::int64_t fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const auto* i = std::get_if<std::int64_t>(v)) return *i;
  throw std::runtime_error(origin_ + ": key '" + key + "' is not an integer");
}

double ConfigTree::get_double(const std::string& key, double fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const auto* d = std::get_if<double>(v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(v)) return static_cast<double>(*i);
  throw std::runtime_error(origin_ + ": key '" + key + "' is not a number");
}

bool ConfigTree::get_bool(const std::string& key, bool fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const auto* b = std::get_if<bool>(v)) return *b;
  throw std::runtime_error(origin_ + ": key '" + key + "' is not a boolean");
}

std::string ConfigTree::get_string(const std::string& key, const std::string& fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const auto* s = std::get_if<std::string>(v)) return *s;
  throw std::runtime_error(origin_ + ": key '" + key + "' is not a string");
}

std::vector<double> ConfigTree::get_double_array(const std::string& key,
                                                 const std::vector<double>& fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const auto* a = std::get_if<std::vector<double>>(v)) return *a;
  throw std::runtime_error(origin_ + ": key '" + key + "' is not a numeric array");
}

std::int64_t ConfigTree::require_int(const std::string& key) const {
  if (!has(key)) missing(key);
  return get_int(key, 0);
}

double ConfigTree::require_double(const std::string& key) const {
  if (!has(key)) missing(key);
  return get_double(key, 0);
}

std::string ConfigTree::require_string(const std::string& key) const {
  if (!has(key)) missing(key);
  return get_string(key, "");
}

std::vector<double> ConfigTree::require_double_array(const std::string& key) const {
  if (!has(key)) missing(key);
  return get_double_array(key, {});
}

}  // namespace beamscope
