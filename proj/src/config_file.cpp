#include "cape/config_file.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cape/csv.hpp"
#include "cape/errors.hpp"

namespace cape {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) items.push_back(trim(item));
  return items;
}

template <typename T>
bool parse_exact(const std::string& text, T& out) {
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size() && !text.empty();
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string content = trim(std::string_view(raw).substr(0, hash));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    const std::string where = origin + ":" + std::to_string(line);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(std::string_view(content).substr(0, eq));
    std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (cfg.entries_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    cfg.entries_.emplace(std::move(key), Entry{std::move(value), line});
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

const ConfigFile::Entry& ConfigFile::use(const std::string& key) {
  used_.insert(key);
  return entries_.at(key);
}

void ConfigFile::bad_value(const std::string& key, const std::string& why) const {
  const Entry& e = entries_.at(key);
  throw ConfigError(origin_ + ":" + std::to_string(e.line) + ": invalid value '" + e.value +
                    "' for '" + key + "': " + why);
}

std::uint64_t ConfigFile::parse_unsigned(const std::string& key) {
  std::uint64_t v = 0;
  if (!parse_exact(use(key).value, v)) bad_value(key, "expected a non-negative integer");
  return v;
}

void ConfigFile::get(const std::string& key, double& out) {
  if (!has(key)) return;
  double v = 0.0;
  if (!parse_exact(use(key).value, v) || !std::isfinite(v)) bad_value(key, "expected a real number");
  out = v;
}

void ConfigFile::get(const std::string& key, std::vector<double>& out) {
  if (!has(key)) return;
  std::vector<double> values;
  for (const auto& item : split_list(use(key).value)) {
    double v = 0.0;
    if (!parse_exact(item, v)) bad_value(key, "expected a comma-separated list of reals");
    values.push_back(v);
  }
  if (values.empty()) bad_value(key, "list is empty");
  out = std::move(values);
}

void ConfigFile::get(const std::string& key, std::vector<std::size_t>& out) {
  if (!has(key)) return;
  std::vector<std::size_t> values;
  for (const auto& item : split_list(use(key).value)) {
    std::size_t v = 0;
    if (!parse_exact(item, v)) bad_value(key, "expected a comma-separated list of integers");
    values.push_back(v);
  }
  if (values.empty()) bad_value(key, "list is empty");
  out = std::move(values);
}

void ConfigFile::reject_unknown() const {
  for (const auto& [key, entry] : entries_) {
    if (!used_.count(key)) {
      throw ConfigError(origin_ + ":" + std::to_string(entry.line) + ": unknown key '" + key + "'");
    }
  }
}

void read_field_config(ConfigFile& cfg, FieldConfig& field, bool with_target_rate) {
  cfg.get("height", field.height);
  cfg.get("width", field.width);
  cfg.get("channels", field.channels);
  cfg.get("length_scale", field.length_scale);
  cfg.get("gain", field.gain);
  if (with_target_rate) cfg.get("target_rate", field.target_rate);
  cfg.get("obs_noise", field.obs_noise);
  cfg.get("seed", field.seed);
}

void read_train_config(ConfigFile& cfg, TrainConfig& train) {
  cfg.get("lr", train.lr);
  cfg.get("max_epochs", train.max_epochs);
  cfg.get("patience", train.patience);
  cfg.get("min_delta", train.min_delta);
  cfg.get("batch_size", train.batch_size);
  cfg.get("bins", train.bins);
  cfg.get("lambda", train.lambda);
  cfg.get("folds", train.folds);
  cfg.get("cape_epochs", train.cape_epochs);
  cfg.get("filters", train.filters);
  cfg.get("seed", train.seed);
}

std::map<std::string, std::string> describe(const FieldConfig& f) {
  return {{"height", std::to_string(f.height)},
          {"width", std::to_string(f.width)},
          {"channels", std::to_string(f.channels)},
          {"length_scale", format_number(f.length_scale)},
          {"gain", format_number(f.gain)},
          {"target_rate", format_number(f.target_rate)},
          {"obs_noise", format_number(f.obs_noise)},
          {"seed", std::to_string(f.seed)}};
}

std::map<std::string, std::string> describe(const TrainConfig& t) {
  return {{"lr", format_number(t.lr)},
          {"max_epochs", std::to_string(t.max_epochs)},
          {"patience", std::to_string(t.patience)},
          {"min_delta", format_number(t.min_delta)},
          {"batch_size", std::to_string(t.batch_size)},
          {"bins", std::to_string(t.bins)},
          {"lambda", format_number(t.lambda)},
          {"folds", std::to_string(t.folds)},
          {"cape_epochs", std::to_string(t.cape_epochs)},
          {"filters", std::to_string(t.filters)},
          {"seed", std::to_string(t.seed)}};
}

}  // namespace cape
