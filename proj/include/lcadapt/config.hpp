#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lcadapt/common.hpp"

namespace lcadapt {

// Flat "key = value" configuration with `include <path>` support (paths are
// taken relative to the including file).  Later assignments win, so an
// including file can override what it pulled in.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    Config c;
    c.load(path, 0);
    return c;
  }

  static Config from_text(const std::string& text) {
    Config c;
    std::istringstream is(text);
    c.parse(is, "<inline>", "", 0);
    return c;
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  std::string require_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end())
      throw ConfigError(strf("missing required config key \"%s\"", key.c_str()));
    return it->second;
  }

  int64_t get_int(const std::string& key, int64_t dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    return parse_int(key, it->second);
  }

  double get_double(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    return parse_double(key, it->second);
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(strf("config key \"%s\": \"%s\" is not a boolean",
                           key.c_str(), v.c_str()));
  }

  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    std::vector<double> out;
    std::string item;
    std::istringstream is(it->second);
    while (std::getline(is, item, ',')) out.push_back(parse_double(key, item));
    if (out.empty())
      throw ConfigError(strf("config key \"%s\": empty list", key.c_str()));
    return out;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_) out.push_back(k);
    return out;
  }

  // Every assignment in effect, one sorted "key = value" line each — the
  // canonical snapshot written into run directories.
  std::string resolved_text() const {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
    return out;
  }

  // Typo guard: reject keys outside the caller's schema.
  void check_known(const std::vector<std::string>& allowed) const {
    for (const auto& [k, v] : kv_) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        throw ConfigError(strf("unknown config key \"%s\"", k.c_str()));
    }
  }

 private:
  static int64_t parse_int(const std::string& key, const std::string& v) {
    try {
      size_t pos = 0;
      const int64_t r = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return r;
    } catch (const std::exception&) {
      throw ConfigError(strf("config key \"%s\": \"%s\" is not an integer",
                             key.c_str(), v.c_str()));
    }
  }

  static double parse_double(const std::string& key, std::string v) {
    strip(v);
    try {
      size_t pos = 0;
      const double r = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return r;
    } catch (const std::exception&) {
      throw ConfigError(strf("config key \"%s\": \"%s\" is not a number",
                             key.c_str(), v.c_str()));
    }
  }

  static void strip(std::string& s) {
    const char* ws = " \t\r";
    const size_t a = s.find_first_not_of(ws);
    if (a == std::string::npos) {
      s.clear();
      return;
    }
    const size_t b = s.find_last_not_of(ws);
    s = s.substr(a, b - a + 1);
  }

  void load(const std::string& path, int depth) {
    std::ifstream is(path);
    if (!is) throw ConfigError(strf("cannot open config file %s", path.c_str()));
    parse(is, path, std::filesystem::path(path).parent_path().string(), depth);
  }

  void parse(std::istream& is, const std::string& name, const std::string& dir,
             int depth) {
    if (depth > 8)
      throw ConfigError(strf("%s: config includes nested deeper than 8", name.c_str()));
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      strip(line);
      if (line.empty()) continue;
      if (line.rfind("include ", 0) == 0) {
        std::string inc = line.substr(8);
        strip(inc);
        std::filesystem::path p(inc);
        if (p.is_relative() && !dir.empty()) p = std::filesystem::path(dir) / p;
        load(p.string(), depth + 1);
        continue;
      }
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(strf("%s:%d: expected \"key = value\", got \"%s\"",
                               name.c_str(), lineno, line.c_str()));
      std::string k = line.substr(0, eq);
      std::string v = line.substr(eq + 1);
      strip(k);
      strip(v);
      if (k.empty())
        throw ConfigError(strf("%s:%d: empty key", name.c_str(), lineno));
      kv_[k] = v;
    }
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace lcadapt
