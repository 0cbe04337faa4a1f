#pragma once

// Flat `section.key = value` configuration text. `#` starts a comment; lists
// are comma separated.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "eelab/common.hpp"

namespace eelab {

struct ConfigError : Error {
  ConfigError(const std::string& key, const std::string& w) : Error("config", key + ": " + w), key(key) {}
  std::string key;
};

class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  const std::map<std::string, std::string>& entries() const { return kv_; }

  std::string str(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key, double fallback) const;
  long integer(const std::string& key, long fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<double> reals(const std::string& key, const std::vector<double>& fallback) const;

  /// Sorted `key = value` lines; the hash is FNV-1a over this text.
  std::string canonical() const;
  std::uint64_t hash() const;

  /// Throws ConfigError for the first key not in `known`.
  void check_known(const std::set<std::string>& known) const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace eelab
