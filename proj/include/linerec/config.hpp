#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

// Declarative run configuration: an INI-style text file of [section] headers
// and key = value lines. Keys are addressed as "section.key". Reads are
// tracked so a command can reject settings it never looked at (usually
// typos). The serialized form is sorted and stable, suitable for writing an
// effective config back into a run directory.

namespace linerec {

class Config {
 public:
  Config() = default;

  static Config from_string(const std::string& text, const std::string& origin = "<config>") {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']' || s.size() < 3)
          throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                      ": malformed section header '" + s + "'");
        section = trim(s.substr(1, s.size() - 2));
        if (section.empty() || section.find('.') != std::string::npos)
          throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                      ": bad section name '" + section + "'");
        continue;
      }
      const size_t eq = s.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                    ": expected key = value, got '" + s + "'");
      const std::string key = trim(s.substr(0, eq));
      const std::string val = trim(s.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (!c.values_.emplace(full, val).second)
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                                    full + "'");
    }
    return c;
  }

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    read_.insert(key);
    return it->second;
  }

  long integer(const std::string& key, long def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    read_.insert(key);
    size_t used = 0;
    long v = 0;
    try {
      v = std::stol(it->second, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != it->second.size() || it->second.empty())
      throw std::invalid_argument("config: " + key + " = '" + it->second + "' is not an integer");
    return v;
  }

  double real(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    read_.insert(key);
    size_t used = 0;
    double v = 0;
    try {
      v = std::stod(it->second, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != it->second.size() || it->second.empty())
      throw std::invalid_argument("config: " + key + " = '" + it->second + "' is not a number");
    return v;
  }

  bool flag(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    read_.insert(key);
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: " + key + " = '" + it->second + "' is not a boolean");
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, long value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, int value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, unsigned long long value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    values_[key] = buf;
  }
  void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

  // keys present in the file that no getter ever touched
  std::vector<std::string> unread() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!read_.count(k)) out.push_back(k);
    return out;
  }

  // sections sorted, keys sorted within each; sectionless keys first
  std::string serialize() const {
    std::map<std::string, std::map<std::string, std::string>> by_section;
    for (const auto& [k, v] : values_) {
      const size_t dot = k.find('.');
      if (dot == std::string::npos)
        by_section[""][k] = v;
      else
        by_section[k.substr(0, dot)][k.substr(dot + 1)] = v;
    }
    std::ostringstream out;
    bool first = true;
    for (const auto& [sec, kv] : by_section) {
      if (!sec.empty()) {
        if (!first) out << "\n";
        out << "[" << sec << "]\n";
      }
      for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
      first = false;
    }
    return out.str();
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("config: cannot write " + path);
    out << serialize();
  }

 private:
  static std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> read_;
};

}  // namespace linerec
