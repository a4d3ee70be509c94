#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cape/fieldgen.hpp"
#include "cape/pipeline.hpp"

namespace cape {

/// Flat `key = value` configuration. Blank lines and `#` comments are
/// ignored; duplicate keys are an error. Typed getters mark keys as used so
/// that leftovers can be rejected as unknown.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  template <std::unsigned_integral T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = static_cast<T>(parse_unsigned(key));
  }
  void get(const std::string& key, double& out);
  void get(const std::string& key, std::vector<double>& out);
  void get(const std::string& key, std::vector<std::size_t>& out);

  /// Throws ConfigError listing the first key never read.
  void reject_unknown() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  const Entry& use(const std::string& key);
  std::uint64_t parse_unsigned(const std::string& key);
  [[noreturn]] void bad_value(const std::string& key, const std::string& why) const;

  std::string origin_;
  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
};

/// Reads the generator keys: height, width, channels, length_scale, gain,
/// target_rate, obs_noise, seed.
void read_field_config(ConfigFile& cfg, FieldConfig& field, bool with_target_rate = true);
/// Reads the training keys: lr, max_epochs, patience, min_delta,
/// batch_size, bins, lambda, folds, cape_epochs, filters, seed.
void read_train_config(ConfigFile& cfg, TrainConfig& train);

/// Resolved values as key/value pairs, for manifests.
std::map<std::string, std::string> describe(const FieldConfig& field);
std::map<std::string, std::string> describe(const TrainConfig& train);

}  // namespace cape
