#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace unfold {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ConfigValue =
    std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;

// Flat tree of dotted keys. The set of keys and their types is fixed by the
// values registered at construction; later assignments must name a known key
// and parse to its type.
//
// Text format, one entry per line:
//   # comment
//   ppo.gamma = 0.99
//   action.scales = [1.0, 0.5]
class Config {
 public:
  Config() = default;

  void declare(const std::string& key, ConfigValue default_value);
  bool contains(const std::string& key) const { return values_.count(key) != 0; }

  // Parse `text` as the registered type of `key`.
  void set(const std::string& key, const std::string& text);
  // Accepts "key=value".
  void set_assignment(const std::string& assignment);
  void merge_text(const std::string& text, const std::string& source = "<text>");
  void merge_file(const std::filesystem::path& path);

  bool get_bool(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  // Sorted, fully resolved text; merge_text(to_text()) reproduces the config.
  std::string to_text() const;
  void write(const std::filesystem::path& path) const;

  const std::map<std::string, ConfigValue>& values() const { return values_; }

 private:
  const ConfigValue& lookup(const std::string& key) const;

  std::map<std::string, ConfigValue> values_;
};

}  // namespace unfold
