#pragma once

#include <map>
#include <string>
#include <vector>

namespace dgtd {

// Minimal reader for the TOML-style config files this project uses:
// [section] headers, key = value pairs, '#' comments.  Values are numbers,
// booleans, quoted strings, or flat arrays of those.  Errors carry
// file:line so a broken config points at the offending line.
class Config {
 public:
  struct Value {
    enum class Kind { number, boolean, string, array };
    Kind kind = Kind::number;
    double num = 0.0;
    bool flag = false;
    std::string str;
    std::vector<Value> items;
    int line = 0;
  };

  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& name = "<string>");

  bool has(const std::string& section, const std::string& key) const;

  double get_real(const std::string& section, const std::string& key) const;
  double get_real(const std::string& section, const std::string& key, double fallback) const;
  long get_int(const std::string& section, const std::string& key) const;
  long get_int(const std::string& section, const std::string& key, long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  std::vector<double> get_real_array(const std::string& section, const std::string& key) const;
  std::vector<long> get_int_array(const std::string& section, const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& section,
                                            const std::string& key) const;

  const std::string& source_name() const { return name_; }

 private:
  const Value& require(const std::string& section, const std::string& key) const;
  [[noreturn]] void fail(const Value& v, const std::string& what) const;

  std::string name_;
  std::map<std::string, std::map<std::string, Value>> sections_;
};

}  // namespace dgtd
