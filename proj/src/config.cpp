#include "dgtd/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dgtd {

namespace {

[[noreturn]] void parse_error(const std::string& name, int line, const std::string& what) {
  throw std::runtime_error(name + ":" + std::to_string(line) + ": " + what);
}

std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Removes a trailing comment, respecting quoted strings.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

Config::Value parse_scalar(const std::string& name, int line, const std::string& tok) {
  Config::Value v;
  v.line = line;
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
    v.kind = Config::Value::Kind::string;
    v.str = tok.substr(1, tok.size() - 2);
    return v;
  }
  if (tok == "true" || tok == "false") {
    v.kind = Config::Value::Kind::boolean;
    v.flag = tok == "true";
    return v;
  }
  char* end = nullptr;
  const double d = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    parse_error(name, line, "cannot parse value '" + tok + "'");
  v.kind = Config::Value::Kind::number;
  v.num = d;
  return v;
}

std::vector<std::string> split_array_items(const std::string& name, int line,
                                           const std::string& body) {
  std::vector<std::string> items;
  std::string cur;
  bool in_str = false;
  for (char c : body) {
    if (c == '"') in_str = !in_str;
    if (c == ',' && !in_str) {
      items.push_back(strip(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (in_str) parse_error(name, line, "unterminated string in array");
  const std::string last = strip(cur);
  if (!last.empty()) items.push_back(last);
  return items;
}

}  // namespace

Config Config::parse_string(const std::string& text, const std::string& name) {
  Config cfg;
  cfg.name_ = name;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = strip(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') parse_error(name, line, "unterminated section header");
      section = strip(s.substr(1, s.size() - 2));
      if (section.empty()) parse_error(name, line, "empty section name");
      cfg.sections_[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) parse_error(name, line, "expected 'key = value'");
    const std::string key = strip(s.substr(0, eq));
    const std::string val = strip(s.substr(eq + 1));
    if (key.empty()) parse_error(name, line, "empty key");
    if (val.empty()) parse_error(name, line, "missing value for '" + key + "'");
    if (section.empty()) parse_error(name, line, "'" + key + "' appears before any [section]");
    Value v;
    v.line = line;
    if (val.front() == '[') {
      if (val.back() != ']') parse_error(name, line, "unterminated array (arrays are single-line)");
      v.kind = Value::Kind::array;
      for (const auto& tok : split_array_items(name, line, val.substr(1, val.size() - 2)))
        v.items.push_back(parse_scalar(name, line, tok));
    } else {
      v = parse_scalar(name, line, val);
    }
    cfg.sections_[section][key] = std::move(v);
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

const Config::Value& Config::require(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end())
    throw std::runtime_error(name_ + ": missing section [" + section + "]");
  const auto k = s->second.find(key);
  if (k == s->second.end())
    throw std::runtime_error(name_ + ": missing key '" + key + "' in [" + section + "]");
  return k->second;
}

void Config::fail(const Value& v, const std::string& what) const {
  throw std::runtime_error(name_ + ":" + std::to_string(v.line) + ": " + what);
}

double Config::get_real(const std::string& section, const std::string& key) const {
  const Value& v = require(section, key);
  if (v.kind != Value::Kind::number) fail(v, "'" + key + "' must be a number");
  return v.num;
}

double Config::get_real(const std::string& section, const std::string& key,
                        double fallback) const {
  return has(section, key) ? get_real(section, key) : fallback;
}

long Config::get_int(const std::string& section, const std::string& key) const {
  const Value& v = require(section, key);
  if (v.kind != Value::Kind::number) fail(v, "'" + key + "' must be an integer");
  const double r = std::round(v.num);
  if (std::abs(v.num - r) > 1e-9) fail(v, "'" + key + "' must be an integer");
  return static_cast<long>(r);
}

long Config::get_int(const std::string& section, const std::string& key, long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  const Value& v = require(section, key);
  if (v.kind != Value::Kind::boolean) fail(v, "'" + key + "' must be true or false");
  return v.flag;
}

std::string Config::get_string(const std::string& section, const std::string& key) const {
  const Value& v = require(section, key);
  if (v.kind != Value::Kind::string) fail(v, "'" + key + "' must be a quoted string");
  return v.str;
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  return has(section, key) ? get_string(section, key) : fallback;
}

std::vector<double> Config::get_real_array(const std::string& section,
                                           const std::string& key) const {
  const Value& v = require(section, key);
  if (v.kind != Value::Kind::array) fail(v, "'" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& item : v.items) {
    if (item.kind != Value::Kind::number) fail(item, "'" + key + "' must contain only numbers");
    out.push_back(item.num);
  }
  return out;
}

std::vector<long> Config::get_int_array(const std::string& section,
                                        const std::string& key) const {
  const Value& v = require(section, key);
  if (v.kind != Value::Kind::array) fail(v, "'" + key + "' must be an array");
  std::vector<long> out;
  for (const auto& item : v.items) {
    if (item.kind != Value::Kind::number) fail(item, "'" + key + "' must contain only numbers");
    const double r = std::round(item.num);
    if (std::abs(item.num - r) > 1e-9) fail(item, "'" + key + "' must contain integers");
    out.push_back(static_cast<long>(r));
  }
  return out;
}

std::vector<std::string> Config::get_string_array(const std::string& section,
                                                  const std::string& key) const {
  const Value& v = require(section, key);
  if (v.kind != Value::Kind::array) fail(v, "'" + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& item : v.items) {
    if (item.kind != Value::Kind::string) fail(item, "'" + key + "' must contain quoted strings");
    out.push_back(item.str);
  }
  return out;
}

}  // namespace dgtd
