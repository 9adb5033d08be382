#pragma once

#include <map>
#include <string>
#include <vector>

#include "dpwavelet/types.hpp"

namespace dpw::config {

// Flat key=value store with defaults < file < override precedence.
// '#' starts a comment; blank lines are ignored.
class KeyValueConfig {
 public:
  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }
  void load_file(const std::string& path);               // overrides current
  void apply_overrides(const std::vector<std::string>& kvs);  // "key=value"

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  long get_int(const std::string& key, long dflt) const;
  double get_double(const std::string& key, double dflt) const;

  // Fully resolved config, sorted by key; byte-stable for manifests.
  std::string echo() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dpw::config
