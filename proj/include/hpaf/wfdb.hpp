#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hpaf/record.hpp"

namespace hpaf::wfdb {

struct SignalSpec {
  std::string file_name;
  int storage_format = 212;  // 212 or 16
  double gain = 200.0;       // ADC units per mV
  int baseline = 0;          // ADC units at 0 mV
  std::string lead_label;
};

struct RecordHeader {
  std::string record_name;
  int n_signals = 0;
  double sampling_rate = 0.0;
  int64_t n_samples = 0;  // per signal
  std::vector<SignalSpec> signals;
};

/// Parses a PhysioNet-style header: first line `name n_signals fs n_samples`,
/// one line per signal after that. Comment lines (#) are skipped.
/// Throws ParseError (with line number) or UnsupportedFormat.
RecordHeader parse_header(const std::string& text);

/// Unpacks format-212 byte triples into signed 12-bit samples.
/// Layout per triple: byte0 = low 8 bits of s0, low nibble of byte1 = high
/// 4 bits of s0, high nibble of byte1 = high 4 bits of s1, byte2 = low 8 bits
/// of s1. Throws ParseError on a truncated stream.
std::vector<int32_t> decode_format212(std::span<const uint8_t> bytes, int64_t n);

/// Little-endian signed 16-bit samples. Throws ParseError on truncation.
std::vector<int32_t> decode_format16(std::span<const uint8_t> bytes, int64_t n);

struct IdPattern {
  // "stem": subject/session split at the last underscore of the file stem.
  // "dir":  subject = parent directory name, session = file stem.
  std::string mode = "stem";
};

/// Splits a file path into (subject_id, session_id) per the pattern.
std::pair<std::string, std::string> ids_from_path(const std::string& path,
                                                  const IdPattern& pattern);

/// Loads one lead of a record as mV samples: mV = (adc - baseline) / gain.
/// Throws IoError, ParseError, UnsupportedFormat, or EmptyRecord.
EcgRecord load_record(const std::string& header_path, const std::string& signal_path,
                      int lead_index = 0, const IdPattern& pattern = {});

/// Convenience overload: signal path taken from the header's file_name,
/// resolved relative to the header's directory.
EcgRecord load_record(const std::string& header_path, int lead_index = 0,
                      const IdPattern& pattern = {});

/// Loads one column of a plain numeric CSV. The file carries no rate, so the
/// caller supplies it. Throws ParseError (row-indexed), ColumnOutOfRange,
/// IoError, or EmptyRecord.
EcgRecord load_csv(const std::string& path, int column, double sampling_rate,
                   const IdPattern& pattern = {});

}  // namespace hpaf::wfdb
