#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace protflow {

/// Flat "section.key = value" document. Lines starting with '#' (after
/// optional whitespace) and blank lines are ignored; a '#' after a value
/// starts a comment. Every key must be known; see known_config_keys().
class Config {
 public:
  Config();

  /// Throws ConfigError naming the line for syntax errors and unknown keys.
  static Config parse(std::string_view text);
  /// Throws ConfigError if the file cannot be read.
  static Config load(const std::string& path);

  /// Override from the command line; same key rules as the file.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Comma-separated chain names, empty for a single-chain run.
  std::vector<std::string> chain_names() const;

  /// Throws DataError naming the first referenced data file that does not exist.
  void check_paths() const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  nlohmann::json to_json() const;
  static Config from_json(const nlohmann::json& j);

 private:
  std::map<std::string, std::string> values_;
};

struct ConfigKey {
  std::string_view key;
  std::string_view default_value;
  std::string_view help;
};

/// Fixed keys with their defaults. Per-chain keys "chain.<name>.L_max",
/// "chain.<name>.train_path" and "chain.<name>.val_path" are also accepted.
const std::vector<ConfigKey>& known_config_keys();

}  // namespace protflow
