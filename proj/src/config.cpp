#include "hpaf/config.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hpaf/errors.hpp"

namespace hpaf {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return from_string(buf.str(), path);
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text,
                                           const std::string& origin) {
  KeyValueConfig kv;
  kv.origin_ = origin;
  std::istringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected `key = value`, got `" + line + "`");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    kv.values_[key] = value;
  }
  return kv;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  touched_[key] = true;
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  touched_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError("config field `" + key + "`: not a number: `" + it->second + "` (" +
                      origin_ + ")");
  }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  touched_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError("config field `" + key + "`: not an integer: `" + it->second +
                      "` (" + origin_ + ")");
  }
}

uint64_t KeyValueConfig::get_u64(const std::string& key, uint64_t fallback) const {
  touched_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    size_t used = 0;
    uint64_t v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError("config field `" + key + "`: not an unsigned integer: `" +
                      it->second + "` (" + origin_ + ")");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  touched_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config field `" + key + "`: not a boolean: `" + v + "` (" +
                    origin_ + ")");
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!touched_.count(k)) out.push_back(k);
  return out;
}

std::string KeyValueConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

PipelineConfig PipelineConfig::from(const KeyValueConfig& kv) {
  PipelineConfig c;
  c.seed = kv.get_u64("seed", 42);

  c.prep.low_cut_hz = kv.get_double("prep.low_cut_hz", 0.5);
  c.prep.high_cut_hz = kv.get_double("prep.high_cut_hz", 40.0);
  c.prep.target_rate_hz = kv.get_double("prep.target_rate_hz", 200.0);
  c.prep.filter_order = kv.get_int("prep.filter_order", 4);
  if (!(0.0 < c.prep.low_cut_hz && c.prep.low_cut_hz < c.prep.high_cut_hz &&
        c.prep.high_cut_hz < c.prep.target_rate_hz / 2.0))
    throw ConfigError("prep band edges must satisfy 0 < low < high < target_rate/2");

  c.windows.p_start = kv.get_int("cps.p_start", -80);
  c.windows.qrs_start = kv.get_int("cps.qrs_start", -20);
  c.windows.st_start = kv.get_int("cps.st_start", 20);
  c.windows.tu_start = kv.get_int("cps.tu_start", 80);
  c.windows.tu_end = kv.get_int("cps.tu_end", 160);
  if (!(c.windows.p_start < c.windows.qrs_start &&
        c.windows.qrs_start < c.windows.st_start &&
        c.windows.st_start < c.windows.tu_start && c.windows.tu_start < c.windows.tu_end))
    throw ConfigError("cps windows must be strictly increasing");
  c.cps_zscore = kv.get_bool("cps.zscore", true);

  c.model.embed_dim = kv.get_int("model.embed_dim", 128);
  c.model.gabor_channels = kv.get_int("model.gabor_channels", 16);
  c.model.gabor_kernel_len = kv.get_int("model.gabor_kernel_len", 31);
  c.model.msfb_width = kv.get_int("model.msfb_width", 8);
  c.model.msfb_out = kv.get_int("model.msfb_out", 16);
  c.model.stage_kernel = kv.get_int("model.stage_kernel", 5);
  c.model.downsample_stages = kv.get_int("model.downsample_stages", 2);
  c.model.leaky_slope = kv.get_double("model.leaky_slope", 0.01);
  if (c.model.gabor_kernel_len % 2 == 0)
    throw ConfigError("model.gabor_kernel_len must be odd");
  if (c.model.embed_dim < 2 || c.model.gabor_channels < 1)
    throw ConfigError("model dims must be positive (embed_dim >= 2)");

  c.train.epochs = kv.get_int("train.epochs", 40);
  c.train.batch_size = kv.get_int("train.batch_size", 32);
  c.train.momentum = kv.get_double("train.momentum", 0.9);
  c.train.base_lr = kv.get_double("train.base_lr", 1e-4);
  c.train.eta_min = kv.get_double("train.eta_min", 0.0);
  c.train.margin = kv.get_double("train.margin", 0.3);
  c.train.strict_paper_mining = kv.get_bool("train.strict_paper_mining", false);
  c.train.seed = c.seed;
  if (c.train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (c.train.batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (c.train.margin <= 0.0) throw ConfigError("train.margin must be > 0");

  c.prototypes = kv.get_int("enroll.prototypes", 3);
  if (c.prototypes < 1) throw ConfigError("enroll.prototypes must be >= 1");
  std::string dist = kv.get_string("enroll.distance", "cosine");
  if (dist == "cosine")
    c.distance = MatchDistance::cosine;
  else if (dist == "euclidean")
    c.distance = MatchDistance::euclidean;
  else
    throw ConfigError("enroll.distance must be cosine or euclidean, got `" + dist + "`");

  c.synth.subjects = kv.get_int("synth.subjects", 16);
  c.synth.sessions = kv.get_int("synth.sessions", 2);
  c.synth.duration_s = kv.get_double("synth.duration_s", 60.0);
  c.synth.sample_rate_hz = kv.get_double("synth.sample_rate_hz", 200.0);
  c.synth.noise_mv = kv.get_double("synth.noise_mv", 0.02);
  c.synth.baseline_mv = kv.get_double("synth.baseline_mv", 0.1);
  c.synth.rr_jitter_s = kv.get_double("synth.rr_jitter_s", 0.02);
  c.synth.distance_floor = kv.get_double("synth.distance_floor", 0.35);

  c.data.csv_rate_hz = kv.get_double("data.csv_rate_hz", 500.0);
  c.data.csv_column = kv.get_int("data.csv_column", 0);
  c.data.lead = kv.get_int("data.lead", 0);
  c.data.id_pattern.mode = kv.get_string("data.id_pattern", "stem");
  if (c.data.id_pattern.mode != "stem" && c.data.id_pattern.mode != "dir")
    throw ConfigError("data.id_pattern must be `stem` or `dir`");
  return c;
}

uint64_t PipelineConfig::hash(const KeyValueConfig& kv) {
  std::string text = kv.canonical_text();
  uint64_t h = 1469598103934665603ull;
  for (char ch : text) {
    h ^= uint64_t(uint8_t(ch));
    h *= 1099511628211ull;
  }
  return h;
}

void append_manifest(const std::string& dir, const std::string& command,
                     uint64_t config_hash, uint64_t seed) {
  namespace fs = std::filesystem;
  std::string where = dir.empty() ? "." : dir;
  fs::create_directories(where);
  std::ofstream f(fs::path(where) / "manifest.log", std::ios::app);
  if (!f) throw IoError("cannot append manifest in " + dir);
  auto now = std::chrono::system_clock::now();
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());
  char line[160];
  std::snprintf(line, sizeof(line), "ts=%lld version=hpaf-%s cmd=%s config=%016llx seed=%llu\n",
                static_cast<long long>(secs.count()), kVersion, command.c_str(),
                static_cast<unsigned long long>(config_hash),
                static_cast<unsigned long long>(seed));
  f << line;
}

}  // namespace hpaf
