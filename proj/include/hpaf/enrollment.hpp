#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hpaf {

using Embedding = std::vector<double>;

enum class MatchDistance { cosine, euclidean };

/// Per-subject multi-prototype gallery. Each prototype is the exact mean of
/// the embeddings assigned to its cluster.
struct Gallery {
  std::map<std::string, std::vector<Embedding>> prototypes;
  int k = 3;
  uint64_t seed = 0;
  MatchDistance distance = MatchDistance::cosine;
};

struct KmeansResult {
  std::vector<int> assignments;       // point -> cluster
  std::vector<Embedding> centroids;   // exact cluster means
};

/// Lloyd's iterations from k-means++ seeding until the assignments stop
/// changing or 100 iterations pass. K is clamped to the point count; empty
/// clusters are reseeded to the farthest point.
KmeansResult kmeans(const std::vector<Embedding>& points, int k, uint64_t seed);

/// Cluster one subject's embeddings into up to K prototypes (cluster means).
/// Throws DataError on an empty embedding set.
std::vector<Embedding> enroll(const std::vector<Embedding>& embeddings, int k,
                              uint64_t seed);

/// Builds the whole gallery: one enroll() per subject, seeds split per
/// subject id for determinism.
Gallery build_gallery(const std::map<std::string, std::vector<Embedding>>& per_subject,
                      int k, uint64_t seed,
                      MatchDistance distance = MatchDistance::cosine);

struct MatchResult {
  std::string subject_id;  // owner of the globally best prototype
  double best_score = 0.0;
  /// Each subject's own best score against the query (drives ROC/CMC).
  std::vector<std::pair<std::string, double>> subject_scores;
};

/// Scores a query against every prototype of every subject. Higher scores are
/// better; under cosine the score is the similarity, under euclidean the
/// negated distance. Ties break lexicographically by subject id.
/// Throws DataError on an empty gallery.
MatchResult match(const Embedding& query, const Gallery& gallery);

/// Round-trip-exact text serialization (hexfloat values).
void save_gallery(const std::string& path, const Gallery& gallery);
Gallery load_gallery(const std::string& path);

}  // namespace hpaf
