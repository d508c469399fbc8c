#include "hpaf/wfdb.hpp"

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hpaf/errors.hpp"

namespace fs = std::filesystem;

namespace hpaf::wfdb {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool parse_int(const std::string& s, int64_t& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double_prefix(const std::string& s, double& out) {
  try {
    size_t used = 0;
    out = std::stod(s, &used);
    return used > 0;
  } catch (...) {
    return false;
  }
}

// Gain field may look like "200", "200(1024)", or "200(1024)/mV".
// Returns false if the token is not a gain spec at all.
bool parse_gain_field(const std::string& tok, double& gain, int& baseline,
                      bool& has_baseline) {
  size_t slash = tok.find('/');
  std::string body = slash == std::string::npos ? tok : tok.substr(0, slash);
  size_t open = body.find('(');
  std::string gain_part = open == std::string::npos ? body : body.substr(0, open);
  double g = 0.0;
  if (!parse_double_prefix(gain_part, g)) return false;
  gain = g;
  has_baseline = false;
  if (open != std::string::npos) {
    size_t close = body.find(')', open);
    if (close == std::string::npos) return false;
    int64_t b = 0;
    if (!parse_int(body.substr(open + 1, close - open - 1), b)) return false;
    baseline = int(b);
    has_baseline = true;
  }
  return true;
}

std::vector<uint8_t> read_all_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open signal file: " + path);
  f.seekg(0, std::ios::end);
  std::streamoff len = f.tellg();
  f.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(len), 0);
  if (len > 0) f.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!f) throw IoError("failed reading signal file: " + path);
  return bytes;
}

int32_t sign_extend12(uint32_t v) {
  return (v & 0x800u) ? int32_t(v) - 4096 : int32_t(v);
}

}  // namespace

RecordHeader parse_header(const std::string& text) {
  RecordHeader hdr;
  std::istringstream ss(text);
  std::string line;
  int line_no = 0;
  bool have_first = false;
  while (std::getline(ss, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto toks = split_ws(line);
    if (!have_first) {
      if (toks.size() < 4)
        throw ParseError("header line " + std::to_string(line_no) +
                         ": expected `name n_signals fs n_samples`");
      hdr.record_name = toks[0];
      int64_t nsig = 0, nsamp = 0;
      if (!parse_int(toks[1], nsig) || nsig < 1)
        throw ParseError("header line " + std::to_string(line_no) +
                         ": bad signal count `" + toks[1] + "`");
      // fs may carry a counter-frequency suffix like "360/360(0)"; take the
      // leading number.
      double fs = 0.0;
      if (!parse_double_prefix(toks[2], fs) || fs <= 0.0)
        throw ParseError("header line " + std::to_string(line_no) +
                         ": bad sampling rate `" + toks[2] + "`");
      if (!parse_int(toks[3], nsamp) || nsamp < 0)
        throw ParseError("header line " + std::to_string(line_no) +
                         ": bad sample count `" + toks[3] + "`");
      hdr.n_signals = int(nsig);
      hdr.sampling_rate = fs;
      hdr.n_samples = nsamp;
      have_first = true;
      continue;
    }
    if (int(hdr.signals.size()) == hdr.n_signals) break;  // trailing info lines
    auto& sig = hdr.signals.emplace_back();
    if (toks.size() < 2)
      throw ParseError("header line " + std::to_string(line_no) +
                       ": expected `file format ...`");
    sig.file_name = toks[0];
    // format may carry x/:/+ modifiers (e.g. "212x2"); the leading digits are
    // the format code.
    size_t digits = 0;
    while (digits < toks[1].size() && std::isdigit(uint8_t(toks[1][digits]))) ++digits;
    int64_t fmt = 0;
    if (digits == 0 || !parse_int(toks[1].substr(0, digits), fmt))
      throw ParseError("header line " + std::to_string(line_no) +
                       ": bad format code `" + toks[1] + "`");
    if (fmt != 212 && fmt != 16)
      throw UnsupportedFormat("header line " + std::to_string(line_no) +
                              ": storage format " + std::to_string(fmt) +
                              " not supported (expected 212 or 16)");
    sig.storage_format = int(fmt);
    sig.gain = 200.0;
    sig.baseline = 0;
    bool has_baseline = false;
    if (toks.size() >= 3) {
      double gain = 0.0;
      int baseline = 0;
      if (!parse_gain_field(toks[2], gain, baseline, has_baseline))
        throw ParseError("header line " + std::to_string(line_no) +
                         ": bad gain field `" + toks[2] + "`");
      if (gain != 0.0) sig.gain = gain;
      if (has_baseline) sig.baseline = baseline;
    }
    // Positional fields: adc_res(3) adc_zero(4) init(5) checksum(6) block(7)
    // description(8+). Baseline defaults to adc_zero when not given in parens.
    if (!has_baseline && toks.size() >= 5) {
      int64_t adc_zero = 0;
      if (parse_int(toks[4], adc_zero)) sig.baseline = int(adc_zero);
    }
    if (toks.size() >= 9) {
      std::string label = toks[8];
      for (size_t i = 9; i < toks.size(); ++i) label += " " + toks[i];
      sig.lead_label = label;
    } else {
      // Short line: a trailing non-numeric token is the label.
      int64_t dummy;
      if (toks.size() >= 3 && !parse_int(toks.back(), dummy) &&
          toks.back() != toks[2]) {
        sig.lead_label = toks.back();
      } else {
        sig.lead_label = "ch" + std::to_string(hdr.signals.size() - 1);
      }
    }
  }
  if (!have_first) throw ParseError("header: no record line found");
  if (int(hdr.signals.size()) != hdr.n_signals)
    throw ParseError("header: expected " + std::to_string(hdr.n_signals) +
                     " signal lines, found " + std::to_string(hdr.signals.size()));
  return hdr;
}

std::vector<int32_t> decode_format212(std::span<const uint8_t> bytes, int64_t n) {
  if (n < 0) throw ParseError("format 212: negative sample count");
  int64_t triples = (n + 1) / 2;
  if (int64_t(bytes.size()) < triples * 3)
    throw ParseError("format 212: need " + std::to_string(triples * 3) +
                     " bytes for " + std::to_string(n) + " samples, have " +
                     std::to_string(bytes.size()));
  std::vector<int32_t> out;
  out.reserve(size_t(n));
  for (int64_t t = 0; t < triples; ++t) {
    uint32_t b0 = bytes[size_t(3 * t)];
    uint32_t b1 = bytes[size_t(3 * t + 1)];
    uint32_t b2 = bytes[size_t(3 * t + 2)];
    out.push_back(sign_extend12(((b1 & 0x0Fu) << 8) | b0));
    if (int64_t(out.size()) < n) out.push_back(sign_extend12(((b1 & 0xF0u) << 4) | b2));
  }
  return out;
}

std::vector<int32_t> decode_format16(std::span<const uint8_t> bytes, int64_t n) {
  if (n < 0) throw ParseError("format 16: negative sample count");
  if (int64_t(bytes.size()) < 2 * n)
    throw ParseError("format 16: need " + std::to_string(2 * n) + " bytes for " +
                     std::to_string(n) + " samples, have " +
                     std::to_string(bytes.size()));
  std::vector<int32_t> out;
  out.reserve(size_t(n));
  for (int64_t i = 0; i < n; ++i) {
    uint16_t raw = uint16_t(bytes[size_t(2 * i)]) |
                   (uint16_t(bytes[size_t(2 * i + 1)]) << 8);
    out.push_back(int16_t(raw));
  }
  return out;
}

std::pair<std::string, std::string> ids_from_path(const std::string& path,
                                                  const IdPattern& pattern) {
  fs::path p(path);
  std::string stem = p.stem().string();
  if (pattern.mode == "dir") {
    std::string parent = p.parent_path().filename().string();
    if (parent.empty()) parent = stem;
    return {parent, stem};
  }
  size_t us = stem.rfind('_');
  if (us == std::string::npos || us == 0 || us + 1 == stem.size()) return {stem, "1"};
  return {stem.substr(0, us), stem.substr(us + 1)};
}

EcgRecord load_record(const std::string& header_path, const std::string& signal_path,
                      int lead_index, const IdPattern& pattern) {
  std::ifstream hf(header_path);
  if (!hf) throw IoError("cannot open header file: " + header_path);
  std::stringstream buf;
  buf << hf.rdbuf();
  RecordHeader hdr = parse_header(buf.str());
  if (hdr.n_samples == 0) throw EmptyRecord("record has zero samples: " + header_path);
  if (lead_index < 0 || lead_index >= hdr.n_signals)
    throw ConfigError("lead index " + std::to_string(lead_index) +
                      " out of range for " + std::to_string(hdr.n_signals) +
                      " signals: " + header_path);
  const SignalSpec& sig = hdr.signals[size_t(lead_index)];
  // All leads of MIT-BIH/PTB-style records live interleaved in one file.
  auto bytes = read_all_bytes(signal_path);
  int64_t total = hdr.n_samples * hdr.n_signals;
  std::vector<int32_t> adc = sig.storage_format == 212
                                 ? decode_format212(bytes, total)
                                 : decode_format16(bytes, total);
  if (sig.gain == 0.0) throw ParseError("zero gain in header: " + header_path);
  EcgRecord rec;
  auto [subject, session] = ids_from_path(header_path, pattern);
  rec.subject_id = subject;
  rec.session_id = session;
  rec.sampling_rate = hdr.sampling_rate;
  rec.lead_label = sig.lead_label;
  rec.samples.reserve(size_t(hdr.n_samples));
  for (int64_t i = 0; i < hdr.n_samples; ++i) {
    int32_t v = adc[size_t(i * hdr.n_signals + lead_index)];
    rec.samples.push_back((double(v) - sig.baseline) / sig.gain);
  }
  return rec;
}

EcgRecord load_record(const std::string& header_path, int lead_index,
                      const IdPattern& pattern) {
  std::ifstream hf(header_path);
  if (!hf) throw IoError("cannot open header file: " + header_path);
  std::stringstream buf;
  buf << hf.rdbuf();
  RecordHeader hdr = parse_header(buf.str());
  if (lead_index < 0 || lead_index >= hdr.n_signals)
    throw ConfigError("lead index " + std::to_string(lead_index) +
                      " out of range for " + std::to_string(hdr.n_signals) +
                      " signals: " + header_path);
  fs::path sig_path =
      fs::path(header_path).parent_path() / hdr.signals[size_t(lead_index)].file_name;
  return load_record(header_path, sig_path.string(), lead_index, pattern);
}

EcgRecord load_csv(const std::string& path, int column, double sampling_rate,
                   const IdPattern& pattern) {
  if (sampling_rate <= 0.0)
    throw ConfigError("CSV sampling rate must be positive: " + path);
  std::ifstream f(path);
  if (!f) throw IoError("cannot open CSV file: " + path);
  EcgRecord rec;
  auto [subject, session] = ids_from_path(path, pattern);
  rec.subject_id = subject;
  rec.session_id = session;
  rec.sampling_rate = sampling_rate;
  rec.lead_label = "csv" + std::to_string(column);
  std::string line;
  int row = 0;
  while (std::getline(f, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    size_t start = 0;
    while (true) {
      size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (column < 0 || column >= int(cells.size()))
      throw ColumnOutOfRange("column " + std::to_string(column) +
                             " out of range (row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " columns): " + path);
    double v = 0.0;
    if (!parse_double_prefix(cells[size_t(column)], v))
      throw ParseError("non-numeric cell at row " + std::to_string(row) +
                       ", column " + std::to_string(column) + ": " + path);
    rec.samples.push_back(v);
  }
  if (rec.samples.empty()) throw EmptyRecord("CSV holds no samples: " + path);
  return rec;
}

}  // namespace hpaf::wfdb
