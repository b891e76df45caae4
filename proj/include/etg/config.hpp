#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace etg {

// Plain-text configuration: `[section]` headers, `key = value` lines, `#`
// comments. Keys are stored as "section.key"; values keep their raw text.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Sorted "key=value" lines; the manifest stores this form and its hash.
  std::string canonical() const;
  std::string hash() const;  // fnv-1a of the canonical text, hex

  // Comma-separated values of a grid key, with `a..b` integer range sugar.
  std::vector<std::string> grid_values(const std::string& key) const;

  // All keys under a section prefix ("grid." -> grid keys).
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Thrown for malformed configuration; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace etg
