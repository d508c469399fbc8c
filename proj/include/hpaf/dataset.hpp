#pragma once

#include <string>
#include <vector>

#include "hpaf/config.hpp"
#include "hpaf/cps.hpp"
#include "hpaf/record.hpp"
#include "hpaf/synth.hpp"

namespace hpaf {

/// Band-pass at the native rate, then resample to the target rate.
EcgRecord preprocess(const EcgRecord& raw, const PrepConfig& cfg);

/// Loads every record under `dir`. Recognized layouts, in order:
/// a dataset.csv manifest (as written by the synth generator or `ingest`),
/// WFDB-style *.hea headers, or bare numeric *.csv files.
std::vector<EcgRecord> load_records(const std::string& dir, const PipelineConfig& cfg);

struct SegmentedDataset {
  std::vector<PhaseSegments> beats;
  int skipped_beats = 0;  // boundary beats dropped by the phase windows
  int short_records = 0;  // records below the 1 s detector minimum
  int records = 0;
};

/// Full front end: preprocess each record and extract its beats.
SegmentedDataset segment_records(const std::vector<EcgRecord>& records,
                                 const PipelineConfig& cfg);

/// Beats file: one row per beat with subject, session, R index, the four
/// segment lengths, and the segment values.
void save_beats_csv(const std::string& path, const std::vector<PhaseSegments>& beats);
std::vector<PhaseSegments> load_beats_csv(const std::string& path);

/// Writes per-record sample CSVs plus dataset.csv (file, subject, session,
/// rate) and ground_truth.csv (planted R indices).
void write_synth_dataset(const std::string& dir, const synth::SynthDataset& ds);

}  // namespace hpaf
