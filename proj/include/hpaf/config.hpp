#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hpaf/cps.hpp"
#include "hpaf/encoder.hpp"
#include "hpaf/enrollment.hpp"
#include "hpaf/signal_prep.hpp"
#include "hpaf/training.hpp"
#include "hpaf/wfdb.hpp"

namespace hpaf {

/// Flat `key = value` store with `#` comments. Later assignments win, so CLI
/// overrides are plain re-assignments.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text, const std::string& origin);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Keys never read back by the pipeline (typo guard for the CLI).
  std::vector<std::string> unused_keys() const;

  /// Canonical `key = value` text of the resolved store, sorted by key.
  std::string canonical_text() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> touched_;
  std::string origin_ = "<empty>";
};

struct SynthSettings {
  int subjects = 16;
  int sessions = 2;
  double duration_s = 60.0;
  double sample_rate_hz = 200.0;
  double noise_mv = 0.02;
  double baseline_mv = 0.1;
  double rr_jitter_s = 0.02;
  double distance_floor = 0.35;
};

struct DataSettings {
  double csv_rate_hz = 500.0;  // ECGID-style exports carry no rate
  int csv_column = 0;          // 0 = raw channel, 1 = filtered channel
  int lead = 0;
  wfdb::IdPattern id_pattern;
};

/// Everything one run needs, with defaults from the published training and
/// preprocessing recipe where one exists.
struct PipelineConfig {
  uint64_t seed = 42;
  PrepConfig prep;
  PhaseWindows windows;
  bool cps_zscore = true;
  ModelConfig model;
  TrainConfig train;
  int prototypes = 3;
  MatchDistance distance = MatchDistance::cosine;
  SynthSettings synth;
  DataSettings data;

  static PipelineConfig from(const KeyValueConfig& kv);
  /// 64-bit FNV-1a over the canonical key/value text.
  static uint64_t hash(const KeyValueConfig& kv);
};

/// Appends one reproducibility line (timestamp, version, command, config
/// hash, seed) to <dir>/manifest.log.
void append_manifest(const std::string& dir, const std::string& command,
                     uint64_t config_hash, uint64_t seed);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hpaf
