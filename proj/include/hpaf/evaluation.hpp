#pragma once

#include <map>
#include <string>
#include <vector>

#include "hpaf/cps.hpp"
#include "hpaf/encoder.hpp"
#include "hpaf/enrollment.hpp"
#include "hpaf/training.hpp"

namespace hpaf {

/// Verification trial scores: same-subject (genuine) vs different-subject
/// (impostor) similarities.
struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

/// Probability that a random genuine outscores a random impostor, ties
/// counted one half. Throws DataError when either list is empty.
double auc(const ScoreSet& scores);

/// Threshold sweep over the score union: FAR(t) = fraction of impostor
/// scores >= t, FRR(t) = fraction of genuine scores < t. Returns
/// (FAR+FRR)/2 at the first threshold minimizing |FAR-FRR|.
double eer(const ScoreSet& scores);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;  // false acceptance rate
  double tar = 0.0;  // true acceptance rate
};

std::vector<RocPoint> roc_curve(const ScoreSet& scores);

/// One identification query: every gallery subject's best score plus the
/// true identity.
struct RankedQuery {
  std::vector<std::pair<std::string, double>> subject_scores;
  std::string true_id;
};

struct CmcCurve {
  std::vector<double> rates;  // rates[k-1] = fraction with rank <= k
  double top1 = 0.0;
};

/// Rank by descending score with lexicographic tie-break; a true id missing
/// from the gallery counts as a miss at every rank.
CmcCurve cmc(const std::vector<RankedQuery>& queries, int gallery_size);

struct EvalReport {
  double top1_acc = 0.0;
  double auc = 0.0;
  double eer = 0.0;
  std::vector<RocPoint> roc;
  std::vector<double> cmc;
  int n_queries = 0;
  int n_genuine = 0;
  int n_impostor = 0;
  int excluded_subjects = 0;
};

using EmbeddingsBySubject = std::map<std::string, std::vector<Embedding>>;

/// Embeds beats with a trained model, grouped by subject (beat order kept).
EmbeddingsBySubject embed_by_subject(const HpafModel& model,
                                     const std::vector<PhaseSegments>& beats);

/// The matching stage alone: HAM-enroll the enrollment sets, score every
/// query against the gallery, assemble identification and verification
/// metrics.
EvalReport evaluate_matching(const EmbeddingsBySubject& enroll_embeddings,
                             const EmbeddingsBySubject& query_embeddings, int prototypes,
                             uint64_t seed,
                             MatchDistance distance = MatchDistance::cosine);

struct ProtocolOptions {
  TrainConfig train;
  ModelConfig model;
  int prototypes = 3;
  MatchDistance distance = MatchDistance::cosine;
  uint64_t seed = 42;  // subject split + enrollment clustering
};

struct ProtocolResult {
  EvalReport report;
  std::vector<EpochStats> history;
  // test-side embeddings, exposed for ablations over the enrollment stage
  EmbeddingsBySubject enroll_embeddings;
  EmbeddingsBySubject query_embeddings;
};

/// Closed set: per subject, the chronologically first half of beats trains
/// the encoder and enrolls the gallery; the second half queries. Subjects
/// with fewer than two beats are excluded and counted.
ProtocolResult run_closed_set(const std::vector<PhaseSegments>& beats,
                              const ProtocolOptions& opt);

/// Open set: subjects split 50/50 by seed; the encoder trains on the
/// training subjects only. Each test subject enrolls its first half of beats
/// and queries the rest.
ProtocolResult run_open_set(const std::vector<PhaseSegments>& beats,
                            const ProtocolOptions& opt);

/// Writes summary.csv, roc.csv, and cmc.csv into `dir`.
void write_report_csv(const std::string& dir, const EvalReport& report);

}  // namespace hpaf
