#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace prlstm::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat configuration: dotted keys to scalar/array values, assembled from
// defaults, then an optional named preset, then a JSON config file, then
// explicit overrides (later layers win). Unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  void apply_preset(const std::string& name);
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);  // value parsed as JSON or string

  std::string get_string(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::vector<int64_t> get_int_list(const std::string& key) const;
  bool has(const std::string& key) const;

  // Canonical JSON dump (sorted keys) and its FNV-1a 64 content hash.
  std::string resolved_json() const;
  std::string content_hash() const;

  // Writes resolved_json plus the hash to <dir>/resolved_config.json.
  void write_resolved(const std::string& dir) const;

 private:
  void assign(const std::string& key, const std::string& json_value, const std::string& origin);
  std::map<std::string, std::string> values_;  // key -> compact JSON value
};

uint64_t fnv1a64(const std::string& data);

}  // namespace prlstm::cli
