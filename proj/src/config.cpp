#include "protflow/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "protflow/error.hpp"

namespace protflow {

const std::vector<ConfigKey>& known_config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"model.D", "64", "encoder embedding width"},
      {"model.L_max", "50", "maximum sequence length"},
      {"model.ratio_c", "4", "compression ratio, one of 1 2 4 8 16 32"},
      {"model.depth", "4", "residual blocks in the vector field"},
      {"model.width", "64", "hidden width of the vector field"},
      {"model.attention", "false", "self-attention in every block"},
      {"decoder.steps", "2000", ""},
      {"decoder.batch_rows", "256", "residue rows per step"},
      {"decoder.lr", "0.003", ""},
      {"decoder.lr_min", "0.0001", ""},
      {"decoder.warmup", "100", ""},
      {"decoder.weight_decay", "0.001", ""},
      {"compressor.steps", "2000", ""},
      {"compressor.batch_rows", "256", "rows per step, PAD rows included"},
      {"compressor.lr", "0.003", ""},
      {"compressor.lr_min", "0.0001", ""},
      {"compressor.warmup", "100", ""},
      {"compressor.weight_decay", "0.001", ""},
      {"compressor.clamp_k", "3", "z-score clamp"},
      {"train.steps", "2000", "vector field steps"},
      {"train.batch", "64", "sequences per step"},
      {"train.lr", "0.001", "peak learning rate"},
      {"train.lr_min", "0.0002", ""},
      {"train.warmup", "100", ""},
      {"train.clip", "1.0", "global gradient norm clip"},
      {"train.weight_decay", "0.01", ""},
      {"train.ema", "0", "EMA decay, 0 disables"},
      {"train.seed", "0", "root seed for every training stream"},
      {"solver.method", "dopri5", "euler, dopri5 or dopri5-adaptive"},
      {"solver.steps", "25", "fixed-grid steps in [1, 100]"},
      {"solver.atol", "1e-5", "adaptive only"},
      {"solver.rtol", "1e-5", "adaptive only"},
      {"solver.max_nfe", "100000", "adaptive only"},
      {"reflow.pairs", "1000", "coupling pairs M"},
      {"reflow.steps", "1000", "fine-tuning steps"},
      {"data.train_path", "", "training FASTA"},
      {"data.val_path", "", "validation FASTA, used for the length distribution"},
      {"chains.names", "", "comma-separated chain names for joint design"},
  };
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool is_chain_key(const std::string& key) {
  if (key.rfind("chain.", 0) != 0) return false;
  const auto dot = key.rfind('.');
  if (dot <= 6) return false;
  const std::string field = key.substr(dot + 1);
  return field == "L_max" || field == "train_path" || field == "val_path";
}

bool is_known(const std::string& key) {
  for (const auto& k : known_config_keys())
    if (k.key == key) return true;
  return is_chain_key(key);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, std::string_view kind) {
  throw Error(Errc::kConfigError, key + " = '" + value + "' is not " + std::string(kind));
}

}  // namespace

Config::Config() {
  for (const auto& k : known_config_keys()) values_[std::string(k.key)] = std::string(k.default_value);
}

Config Config::parse(std::string_view text) {
  Config cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::kConfigError, "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!is_known(key)) throw Error(Errc::kConfigError, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kConfigError, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!is_known(key)) throw Error(Errc::kConfigError, "unknown key '" + key + "'");
  values_[key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw Error(Errc::kConfigError, "missing key '" + key + "'");
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::size_t Config::get_size(const std::string& key) const {
  const std::int64_t v = get_int(key);
  if (v < 0) bad_value(key, get_string(key), "a nonnegative integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string v = get_string(key);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

double Config::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> Config::chain_names() const {
  std::vector<std::string> out;
  std::stringstream ss(get_string("chains.names"));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void Config::check_paths() const {
  for (const auto& [key, value] : values_) {
    const bool is_path = key.size() > 5 && key.compare(key.size() - 5, 5, "_path") == 0;
    if (!is_path || value.empty()) continue;
    if (!std::filesystem::exists(value)) throw Error(Errc::kDataError, key + ": no such file: " + value);
  }
}

nlohmann::json Config::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

Config Config::from_json(const nlohmann::json& j) {
  Config cfg;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw Error(Errc::kConfigError, "config snapshot value for '" + k + "' is not a string");
    cfg.set(k, v.get<std::string>());
  }
  return cfg;
}

}  // namespace protflow
