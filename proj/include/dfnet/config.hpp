#ifndef DFNET_CONFIG_HPP
#define DFNET_CONFIG_HPP

#include <map>
#include <string>
#include <vector>

#include "dfnet/train.hpp"

namespace dfnet {

enum class ConfigSource { kDefault, kFile, kFlag };

struct ConfigEntry {
  std::string value;
  ConfigSource source = ConfigSource::kDefault;
};

// Flat key=value configuration with per-key provenance. The key set is
// closed: every known key exists with its default, and setting an unknown
// key is an error naming it.
class Config {
 public:
  static Config defaults();
  static const std::vector<std::string>& keys();

  // '#'-comment lines, blank lines, key=value otherwise. Later duplicates
  // win. Values keep inner spaces; surrounding whitespace is trimmed.
  void load_file(const std::string& path);
  void set_flag(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  ConfigSource source(const std::string& key) const;

  // "key = value  (origin)" lines in key order.
  std::string provenance() const;

  // Assembles and validates the training view of the key set.
  TrainConfig to_train_config() const;

 private:
  void set(const std::string& key, const std::string& value,
           ConfigSource source);
  const ConfigEntry& entry(const std::string& key) const;

  std::map<std::string, ConfigEntry> values_;
};

}  // namespace dfnet

#endif  // DFNET_CONFIG_HPP
