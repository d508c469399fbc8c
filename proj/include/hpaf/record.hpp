#pragma once

#include <string>
#include <vector>

namespace hpaf {

/// Single-lead ECG record in physical units (mV).
struct EcgRecord {
  std::string subject_id;
  std::string session_id;
  std::vector<double> samples;  // mV
  double sampling_rate = 0.0;   // Hz
  std::string lead_label;
};

}  // namespace hpaf
