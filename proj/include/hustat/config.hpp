#pragma once

// Flat TOML-style configuration: [section] headers, `key = value` lines,
// `#` comments. Values are numbers, booleans, "strings" or [arrays] of those.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hustat {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in, const std::string& source = "<config>") {
    ConfigFile cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = source + ":" + std::to_string(lineno);
      line = strip_comment(line);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError(where + ": empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty()) throw ConfigError(where + ": empty key or value");
      const std::string full = section.empty() ? key : section + "." + key;
      if (cfg.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
      cfg.values_[full] = value;
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& raw() const { return values_; }

  std::optional<std::string> get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return unquote(it->second, key);
  }

  std::optional<double> get_double(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return to_double(it->second, key);
  }

  std::optional<long> get_long(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return to_integer<long>(it->second, key);
  }

  std::optional<std::uint64_t> get_u64(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return to_integer<std::uint64_t>(it->second, key);
  }

  std::optional<bool> get_bool(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ConfigError("key '" + key + "': expected true or false");
  }

  std::optional<std::vector<double>> get_doubles(const std::string& key) const {
    const auto items = array_items(key);
    if (!items) return std::nullopt;
    std::vector<double> out;
    for (const auto& s : *items) out.push_back(to_double(s, key));
    return out;
  }

  std::optional<std::vector<long>> get_longs(const std::string& key) const {
    const auto items = array_items(key);
    if (!items) return std::nullopt;
    std::vector<long> out;
    for (const auto& s : *items) out.push_back(to_integer<long>(s, key));
    return out;
  }

  /// Keys present in the file but absent from `known`.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      bool found = false;
      for (const auto& kk : known) found = found || kk == k;
      if (!found) out.push_back(k);
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::string unquote(const std::string& v, const std::string& key) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    if (v.front() == '"' || v.front() == '[') throw ConfigError("key '" + key + "': malformed string");
    return v;
  }

  static double to_double(const std::string& v, const std::string& key) {
    const std::string s = trim(v);
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(s, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError("key '" + key + "': expected a number, got '" + s + "'");
    return x;
  }

  template <class T>
  static T to_integer(const std::string& v, const std::string& key) {
    const std::string s = trim(v);
    T x{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      throw ConfigError("key '" + key + "': expected an integer, got '" + s + "'");
    return x;
  }

  std::optional<std::vector<std::string>> array_items(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    const std::string& v = it->second;
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') throw ConfigError("key '" + key + "': expected [a, b, ...]");
    std::vector<std::string> out;
    std::stringstream ss(v.substr(1, v.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace hustat
