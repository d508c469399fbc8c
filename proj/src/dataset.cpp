#include "hpaf/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hpaf/errors.hpp"
#include "hpaf/signal_prep.hpp"

namespace fs = std::filesystem;

namespace hpaf {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

void append_value(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

EcgRecord preprocess(const EcgRecord& raw, const PrepConfig& cfg) {
  if (raw.samples.empty()) throw EmptyRecord("record has no samples: " + raw.subject_id);
  EcgRecord out = raw;
  out.samples = bandpass(raw.samples, raw.sampling_rate, cfg);
  out.samples = resample(out.samples, raw.sampling_rate, cfg.target_rate_hz);
  out.sampling_rate = cfg.target_rate_hz;
  return out;
}

std::vector<EcgRecord> load_records(const std::string& dir, const PipelineConfig& cfg) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<EcgRecord> out;

  fs::path manifest = fs::path(dir) / "dataset.csv";
  if (fs::exists(manifest)) {
    std::ifstream f(manifest);
    if (!f) throw IoError("cannot open manifest: " + manifest.string());
    std::string line;
    int row = 0;
    while (std::getline(f, line)) {
      ++row;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || row == 1) continue;  // header
      auto cells = split_csv_line(line);
      if (cells.size() < 4)
        throw ParseError("manifest row " + std::to_string(row) + ": expected " +
                         "file,subject_id,session_id,sampling_rate: " + manifest.string());
      EcgRecord rec = wfdb::load_csv((fs::path(dir) / cells[0]).string(), 0,
                                     std::stod(cells[3]), cfg.data.id_pattern);
      rec.subject_id = cells[1];
      rec.session_id = cells[2];
      out.push_back(std::move(rec));
    }
    return out;
  }

  std::vector<fs::path> headers, csvs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    if (ext == ".hea") headers.push_back(entry.path());
    if (ext == ".csv") csvs.push_back(entry.path());
  }
  std::sort(headers.begin(), headers.end());
  std::sort(csvs.begin(), csvs.end());

  if (!headers.empty()) {
    for (const fs::path& h : headers)
      out.push_back(wfdb::load_record(h.string(), cfg.data.lead, cfg.data.id_pattern));
    return out;
  }
  if (!csvs.empty()) {
    for (const fs::path& c : csvs)
      out.push_back(wfdb::load_csv(c.string(), cfg.data.csv_column, cfg.data.csv_rate_hz,
                                   cfg.data.id_pattern));
    return out;
  }
  throw DataError("no records found in " + dir +
                  " (expected dataset.csv, *.hea, or *.csv)");
}

SegmentedDataset segment_records(const std::vector<EcgRecord>& records,
                                 const PipelineConfig& cfg) {
  SegmentedDataset out;
  for (const EcgRecord& raw : records) {
    ++out.records;
    EcgRecord prepped = preprocess(raw, cfg.prep);
    try {
      BeatExtraction ext = extract_beats(prepped, cfg.windows, cfg.cps_zscore);
      out.skipped_beats += ext.skipped;
      for (PhaseSegments& b : ext.beats) out.beats.push_back(std::move(b));
    } catch (const SignalTooShort&) {
      ++out.short_records;
    }
  }
  return out;
}

void save_beats_csv(const std::string& path, const std::vector<PhaseSegments>& beats) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write beats file: " + path);
  f << "subject,session,r_index,p_len,qrs_len,st_len,tu_len,values\n";
  for (const PhaseSegments& b : beats) {
    std::string row = b.subject_id + "," + b.session_id + "," +
                      std::to_string(b.r_index) + "," + std::to_string(b.p.size()) +
                      "," + std::to_string(b.qrs.size()) + "," +
                      std::to_string(b.st.size()) + "," + std::to_string(b.tu.size());
    for (const auto* seg : {&b.p, &b.qrs, &b.st, &b.tu})
      for (double v : *seg) {
        row += ",";
        append_value(row, v);
      }
    row += "\n";
    f << row;
  }
  if (!f) throw IoError("failed writing beats file: " + path);
}

std::vector<PhaseSegments> load_beats_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open beats file: " + path);
  std::vector<PhaseSegments> out;
  std::string line;
  int row = 0;
  while (std::getline(f, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || row == 1) continue;
    auto cells = split_csv_line(line);
    if (cells.size() < 7)
      throw ParseError("beats file row " + std::to_string(row) + ": too few fields: " +
                       path);
    PhaseSegments b;
    b.subject_id = cells[0];
    b.session_id = cells[1];
    size_t lens[4];
    try {
      b.r_index = std::stoll(cells[2]);
      for (int i = 0; i < 4; ++i) lens[i] = size_t(std::stoul(cells[size_t(3 + i)]));
    } catch (...) {
      throw ParseError("beats file row " + std::to_string(row) + ": bad header cell: " +
                       path);
    }
    size_t total = lens[0] + lens[1] + lens[2] + lens[3];
    if (cells.size() != 7 + total)
      throw ParseError("beats file row " + std::to_string(row) + ": expected " +
                       std::to_string(7 + total) + " fields, got " +
                       std::to_string(cells.size()) + ": " + path);
    std::vector<double> values;
    values.reserve(total);
    for (size_t i = 7; i < cells.size(); ++i) {
      try {
        values.push_back(std::stod(cells[i]));
      } catch (...) {
        throw ParseError("beats file row " + std::to_string(row) +
                         ": non-numeric value cell " + std::to_string(i) + ": " + path);
      }
    }
    size_t off = 0;
    b.p.assign(values.begin(), values.begin() + long(lens[0]));
    off += lens[0];
    b.qrs.assign(values.begin() + long(off), values.begin() + long(off + lens[1]));
    off += lens[1];
    b.st.assign(values.begin() + long(off), values.begin() + long(off + lens[2]));
    off += lens[2];
    b.tu.assign(values.begin() + long(off), values.begin() + long(off + lens[3]));
    out.push_back(std::move(b));
  }
  return out;
}

void write_synth_dataset(const std::string& dir, const synth::SynthDataset& ds) {
  fs::create_directories(dir);
  std::string manifest = "file,subject_id,session_id,sampling_rate\n";
  std::string truth = "file,subject_id,session_id,r_indices\n";
  for (const synth::RenderedRecord& rr : ds.records) {
    std::string name = rr.record.subject_id + "_" + rr.record.session_id + ".csv";
    std::string body;
    body.reserve(rr.record.samples.size() * 20);
    for (double v : rr.record.samples) {
      append_value(body, v);
      body += "\n";
    }
    std::ofstream f(fs::path(dir) / name, std::ios::trunc);
    if (!f) throw IoError("cannot write record: " + (fs::path(dir) / name).string());
    f << body;

    manifest += name + "," + rr.record.subject_id + "," + rr.record.session_id + ",";
    append_value(manifest, rr.record.sampling_rate);
    manifest += "\n";

    truth += name + "," + rr.record.subject_id + "," + rr.record.session_id + ",";
    for (size_t i = 0; i < rr.r_indices.size(); ++i)
      truth += (i ? ";" : "") + std::to_string(rr.r_indices[i]);
    truth += "\n";
  }
  std::ofstream mf(fs::path(dir) / "dataset.csv", std::ios::trunc);
  if (!mf) throw IoError("cannot write dataset.csv in " + dir);
  mf << manifest;
  std::ofstream tf(fs::path(dir) / "ground_truth.csv", std::ios::trunc);
  if (!tf) throw IoError("cannot write ground_truth.csv in " + dir);
  tf << truth;
}

}  // namespace hpaf
