#include "dfnet/config.hpp"

#include <cstddef>
#include <fstream>
#include <sstream>

#include "dfnet/error.hpp"

namespace dfnet {

namespace {

const std::vector<std::pair<std::string, std::string>>& default_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"hidden", "128"},
      {"embedding", "128"},
      {"hops", "3"},
      {"dropout", "0.2"},
      {"teacher_forcing", "0.9"},
      {"grl_lambda", "1.0"},
      {"max_decode_len", "24"},
      {"batch", "16"},
      {"lr", "0.001"},
      {"epochs", "300"},
      {"patience", "10"},
      {"clip_norm", "10"},
      {"seed", "0"},
      {"precision", "f64"},
      {"gamma_global", "1"},
      {"gamma_vocab", "1"},
      {"gamma_local", "1"},
      {"gamma_basic", "1"},
      {"gamma_moe", "1"},
      {"gamma_adv", "1"},
      {"dynamic_fusion", "true"},
      {"multi_encoder", "true"},
      {"multi_decoder", "true"},
      {"adversarial", "true"},
      {"shared_path", "true"},
      {"val_frac", "0.1"},
      {"test_frac", "0.2"},
  };
  return table;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const char* source_name(ConfigSource s) {
  switch (s) {
    case ConfigSource::kDefault: return "default";
    case ConfigSource::kFile: return "file";
    case ConfigSource::kFlag: return "flag";
  }
  return "?";
}

}  // namespace

Config Config::defaults() {
  Config c;
  for (const auto& [key, value] : default_table()) {
    c.values_[key] = ConfigEntry{value, ConfigSource::kDefault};
  }
  return c;
}

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [key, value] : default_table()) v.push_back(key);
    return v;
  }();
  return names;
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) +
                       ": expected key=value, got \"" + t + "\"");
    }
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)), ConfigSource::kFile);
  }
}

void Config::set_flag(const std::string& key, const std::string& value) {
  set(key, value, ConfigSource::kFlag);
}

void Config::set(const std::string& key, const std::string& value,
                 ConfigSource source) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key: " + key);
  it->second = ConfigEntry{value, source};
}

const ConfigEntry& Config::entry(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key: " + key);
  return it->second;
}

const std::string& Config::get(const std::string& key) const {
  return entry(key).value;
}

ConfigSource Config::source(const std::string& key) const {
  return entry(key).source;
}

int Config::get_int(const std::string& key) const {
  const std::string& v = entry(key).value;
  try {
    std::size_t used = 0;
    int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + ": expected integer, got \"" + v +
                     "\"");
  }
}

double Config::get_double(const std::string& key) const {
  const std::string& v = entry(key).value;
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config key " + key + ": expected number, got \"" + v +
                     "\"");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = entry(key).value;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key " + key + ": expected true/false, got \"" + v +
                   "\"");
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string& v = entry(key).value;
  try {
    std::size_t used = 0;
    unsigned long long out = std::stoull(v, &used);
    if (used != v.size() || v[0] == '-') throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw UsageError("config key " + key +
                     ": expected unsigned integer, got \"" + v + "\"");
  }
}

std::string Config::provenance() const {
  std::ostringstream out;
  for (const auto& key : keys()) {
    const ConfigEntry& e = entry(key);
    out << key << " = " << e.value << "  (" << source_name(e.source) << ")\n";
  }
  return out.str();
}

TrainConfig Config::to_train_config() const {
  TrainConfig cfg;
  cfg.model.hidden = get_int("hidden");
  cfg.model.embedding = get_int("embedding");
  cfg.model.hops = get_int("hops");
  cfg.model.dropout = get_double("dropout");
  cfg.model.teacher_forcing = get_double("teacher_forcing");
  cfg.model.grl_lambda = get_double("grl_lambda");
  cfg.model.max_decode_len = get_int("max_decode_len");
  cfg.batch = get_int("batch");
  cfg.lr = get_double("lr");
  cfg.epochs = get_int("epochs");
  cfg.patience = get_int("patience");
  cfg.clip_norm = get_double("clip_norm");
  cfg.seed = get_u64("seed");
  cfg.precision = get("precision");
  cfg.weights.gamma_global = get_double("gamma_global");
  cfg.weights.gamma_vocab = get_double("gamma_vocab");
  cfg.weights.gamma_local = get_double("gamma_local");
  cfg.weights.gamma_basic = get_double("gamma_basic");
  cfg.weights.gamma_moe = get_double("gamma_moe");
  cfg.weights.gamma_adv = get_double("gamma_adv");
  cfg.flags.dynamic_fusion = get_bool("dynamic_fusion");
  cfg.flags.multi_encoder = get_bool("multi_encoder");
  cfg.flags.multi_decoder = get_bool("multi_decoder");
  cfg.flags.adversarial = get_bool("adversarial");
  cfg.flags.shared_path = get_bool("shared_path");

  if (cfg.model.hidden < 1 || cfg.model.embedding < 1) {
    throw UsageError("config: hidden and embedding must be >= 1");
  }
  if (cfg.model.hops < 1) throw UsageError("config: hops must be >= 1");
  if (cfg.model.dropout < 0.0 || cfg.model.dropout >= 1.0) {
    throw UsageError("config: dropout must be in [0, 1)");
  }
  if (cfg.model.teacher_forcing < 0.0 || cfg.model.teacher_forcing > 1.0) {
    throw UsageError("config: teacher_forcing must be in [0, 1]");
  }
  if (cfg.model.max_decode_len < 1) {
    throw UsageError("config: max_decode_len must be >= 1");
  }
  if (cfg.precision != "f32" && cfg.precision != "f64") {
    throw UsageError("config: precision must be f32 or f64");
  }
  double vf = get_double("val_frac");
  double tf = get_double("test_frac");
  if (vf < 0.0 || tf < 0.0 || vf + tf >= 1.0) {
    throw UsageError("config: val_frac + test_frac must stay below 1");
  }
  validate_train_config(cfg);
  return cfg;
}

}  // namespace dfnet
