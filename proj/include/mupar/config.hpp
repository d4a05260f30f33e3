#pragma once
// Sectioned key-value run configuration. Strict by design: anything the
// parser does not understand is an error, and schemas reject unknown keys so
// a typo never silently reverts a field to its default.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mupar {

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

class Config {
 public:
  static Config parse(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t[0] == '[') {
        if (t.back() != ']' || t.size() < 3)
          throw std::invalid_argument("config line " + std::to_string(lineno) +
                                      ": malformed section header '" + t + "'");
        section = detail::trim(t.substr(1, t.size() - 2));
        if (section.empty())
          throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty section name");
        if (cfg.find_section(section) != size_t(-1))
          throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate section '" +
                                      section + "'");
        cfg.sections_.push_back({section, {}});
        continue;
      }
      size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected 'key = value', got '" + t + "'");
      std::string key = detail::trim(t.substr(0, eq));
      std::string value = detail::trim(t.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
      if (section.empty())
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": key '" + key +
                                    "' appears before any [section]");
      auto& sec = cfg.sections_.back().second;
      for (const auto& kv : sec)
        if (kv.first == key)
          throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key '" +
                                      section + "." + key + "'");
      sec.push_back({key, value});
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  std::string serialize() const {
    std::string out;
    for (size_t i = 0; i < sections_.size(); ++i) {
      if (i) out += "\n";
      out += "[" + sections_[i].first + "]\n";
      for (const auto& kv : sections_[i].second) out += kv.first + " = " + kv.second + "\n";
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file '" + path + "'");
    out << serialize();
  }

  bool has(const std::string& section, const std::string& key) const {
    return find_value(section, key) != nullptr;
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    size_t si = find_section(section);
    if (si == size_t(-1)) {
      sections_.push_back({section, {}});
      si = sections_.size() - 1;
    }
    for (auto& kv : sections_[si].second)
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    sections_[si].second.push_back({key, value});
  }

  // "section.key=value" as accepted on the command line
  void set_dotted(const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override '" + assignment + "': expected section.key=value");
    std::string lhs = detail::trim(assignment.substr(0, eq));
    std::string value = detail::trim(assignment.substr(eq + 1));
    size_t dot = lhs.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == lhs.size())
      throw std::invalid_argument("override '" + assignment + "': expected section.key=value");
    set(lhs.substr(0, dot), lhs.substr(dot + 1), value);
  }

  const std::string& get_str(const std::string& section, const std::string& key) const {
    const std::string* v = find_value(section, key);
    if (!v) throw std::invalid_argument("config: missing key '" + section + "." + key + "'");
    return *v;
  }
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const {
    const std::string* v = find_value(section, key);
    return v ? *v : fallback;
  }

  int64_t get_int(const std::string& section, const std::string& key) const {
    return to_int(get_str(section, key), section, key);
  }
  int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const {
    const std::string* v = find_value(section, key);
    return v ? to_int(*v, section, key) : fallback;
  }

  double get_double(const std::string& section, const std::string& key) const {
    return to_double(get_str(section, key), section, key);
  }
  double get_double(const std::string& section, const std::string& key, double fallback) const {
    const std::string* v = find_value(section, key);
    return v ? to_double(*v, section, key) : fallback;
  }

  bool get_bool(const std::string& section, const std::string& key) const {
    return to_bool(get_str(section, key), section, key);
  }
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const std::string* v = find_value(section, key);
    return v ? to_bool(*v, section, key) : fallback;
  }

  std::vector<int64_t> get_int_list(const std::string& section, const std::string& key) const {
    std::vector<int64_t> out;
    for (const auto& item : split_list(get_str(section, key)))
      out.push_back(to_int(item, section, key));
    return out;
  }
  std::vector<double> get_double_list(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(get_str(section, key)))
      out.push_back(to_double(item, section, key));
    return out;
  }

  std::vector<std::string> section_names() const {
    std::vector<std::string> out;
    for (const auto& s : sections_) out.push_back(s.first);
    return out;
  }
  std::vector<std::string> keys(const std::string& section) const {
    size_t si = find_section(section);
    std::vector<std::string> out;
    if (si == size_t(-1)) return out;
    for (const auto& kv : sections_[si].second) out.push_back(kv.first);
    return out;
  }

 private:
  // insertion-ordered so parse(serialize()) is the identity
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections_;

  size_t find_section(const std::string& name) const {
    for (size_t i = 0; i < sections_.size(); ++i)
      if (sections_[i].first == name) return i;
    return size_t(-1);
  }
  const std::string* find_value(const std::string& section, const std::string& key) const {
    size_t si = find_section(section);
    if (si == size_t(-1)) return nullptr;
    for (const auto& kv : sections_[si].second)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) out.push_back(detail::trim(cur));
    return out;
  }

  static int64_t to_int(const std::string& s, const std::string& section, const std::string& key) {
    try {
      size_t pos = 0;
      long long v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: '" + section + "." + key + "' is not an integer: '" + s + "'");
    }
  }
  static double to_double(const std::string& s, const std::string& section, const std::string& key) {
    try {
      size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: '" + section + "." + key + "' is not a number: '" + s + "'");
    }
  }
  static bool to_bool(const std::string& s, const std::string& section, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("config: '" + section + "." + key + "' is not a bool: '" + s + "'");
  }
};

// Whitelist of sections and keys; unknown entries are reported with their
// full dotted path.
class ConfigSchema {
 public:
  ConfigSchema& allow(const std::string& section, const std::vector<std::string>& keys) {
    auto& set = allowed_[section];
    for (const auto& k : keys) set.insert(k);
    return *this;
  }

  void check(const Config& cfg) const {
    for (const auto& s : cfg.section_names()) {
      auto it = allowed_.find(s);
      if (it == allowed_.end())
        throw std::invalid_argument("config: unknown section '" + s + "'");
      for (const auto& k : cfg.keys(s))
        if (!it->second.count(k))
          throw std::invalid_argument("config: unknown key '" + s + "." + k + "'");
    }
  }

 private:
  std::map<std::string, std::set<std::string>> allowed_;
};

}  // namespace mupar
