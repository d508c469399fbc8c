#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hpaf/cps.hpp"
#include "hpaf/encoder.hpp"
#include "hpaf/rng.hpp"
#include "hpaf/tensor.hpp"

namespace hpaf {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 32;
  double momentum = 0.9;
  double base_lr = 1e-4;
  double eta_min = 0.0;
  double margin = 0.3;
  uint64_t seed = 42;
  /// When set, negative mining excludes only the anchor and its paired
  /// positive (the literal rule); by default same-subject entries are also
  /// excluded so a negative is never label noise.
  bool strict_paper_mining = false;
};

/// Index view over a beat list, grouped by subject.
struct SubjectIndex {
  std::vector<std::string> subjects;              // sorted
  std::map<std::string, std::vector<int>> beats;  // subject -> beat positions

  static SubjectIndex build(const std::vector<PhaseSegments>& beats);
  /// Subjects with at least `min_beats` beats.
  std::vector<std::string> eligible(int min_beats) const;
};

/// B anchor/positive beat-index pairs; anchor i and positive i share a
/// subject, and the batch spans at least two distinct subjects.
struct PairBatch {
  std::vector<int> anchors;
  std::vector<int> positives;
};

/// Draws B subjects (distinct when possible, with replacement otherwise) and
/// two distinct beats per subject. Throws DataError when fewer than two
/// subjects have two beats.
PairBatch sample_pair_batch(const SubjectIndex& index, int batch_size, Rng& rng);

/// Margin contrastive loss over 2B embeddings laid out as
/// [anchors..., positives...]. For each anchor the negative is the
/// highest-similarity pool entry excluding itself and its paired positive
/// (and, unless strict mining is on, every same-subject entry).
/// Throws ContractError when an anchor has no valid negative.
nn::Tensor contrastive_loss(const std::vector<nn::Tensor>& embeddings,
                            const std::vector<std::string>& subject_ids, double margin,
                            bool strict_paper_mining = false);

/// Index of the mined negative per anchor (exposed for the brute-force
/// equivalence tests).
std::vector<int> mine_negatives(const std::vector<std::vector<double>>& values,
                                const std::vector<std::string>& subject_ids,
                                bool strict_paper_mining);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

struct TrainResult {
  HpafModel model;
  std::vector<EpochStats> history;
};

/// Full training loop: ceil(n_beats / B) batches per epoch, SGD with
/// momentum under the cosine schedule, one checkpoint per epoch when
/// checkpoint_dir is non-empty.
TrainResult train(const std::vector<PhaseSegments>& beats, const TrainConfig& tc,
                  const ModelConfig& mc, const std::string& checkpoint_dir = "");

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace hpaf
