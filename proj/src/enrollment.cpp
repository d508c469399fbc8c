#include "hpaf/enrollment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hpaf/errors.hpp"
#include "hpaf/rng.hpp"
#include "hpaf/tensor.hpp"

namespace hpaf {
namespace {

double sq_dist(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<Embedding> exact_means(const std::vector<Embedding>& points,
                                   const std::vector<int>& assign, int k) {
  size_t dim = points[0].size();
  std::vector<Embedding> means(size_t(k), Embedding(dim, 0.0));
  std::vector<int> counts(size_t(k), 0);
  for (size_t i = 0; i < points.size(); ++i) {
    int c = assign[i];
    ++counts[size_t(c)];
    for (size_t d = 0; d < dim; ++d) means[size_t(c)][d] += points[i][d];
  }
  for (int c = 0; c < k; ++c)
    if (counts[size_t(c)] > 0)
      for (size_t d = 0; d < dim; ++d) means[size_t(c)][d] /= double(counts[size_t(c)]);
  return means;
}

}  // namespace

KmeansResult kmeans(const std::vector<Embedding>& points, int k, uint64_t seed) {
  if (points.empty()) throw DataError("kmeans: no points");
  k = std::min<int>(k, int(points.size()));
  k = std::max(k, 1);
  size_t n = points.size();
  Rng rng(derive_seed(seed, "kmeans"));

  // k-means++ seeding
  std::vector<Embedding> centroids;
  centroids.push_back(points[size_t(rng.uniform_int(0, int64_t(n) - 1))]);
  std::vector<double> d2(n, 0.0);
  while (int(centroids.size()) < k) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = sq_dist(points[i], centroids[0]);
      for (size_t c = 1; c < centroids.size(); ++c)
        best = std::min(best, sq_dist(points[i], centroids[c]));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // all points coincide with existing centroids; any point will do
      centroids.push_back(points[size_t(rng.uniform_int(0, int64_t(n) - 1))]);
      continue;
    }
    double r = rng.uniform() * total;
    size_t pick = n - 1;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= r) {
        pick = i;
        break;
      }
    }
    centroids.push_back(points[pick]);
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(points[i], centroids[0]);
      for (int c = 1; c < k; ++c) {
        double d = sq_dist(points[i], centroids[size_t(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    // reseed empty clusters to the farthest point from its centroid
    std::vector<int> counts(size_t(k), 0);
    for (int a : assign) ++counts[size_t(a)];
    for (int c = 0; c < k; ++c) {
      if (counts[size_t(c)] != 0) continue;
      size_t far = 0;
      double far_d = -1.0;
      for (size_t i = 0; i < n; ++i) {
        if (counts[size_t(assign[i])] <= 1) continue;  // keep singletons intact
        double d = sq_dist(points[i], centroids[size_t(assign[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far_d >= 0.0) {
        --counts[size_t(assign[far])];
        assign[far] = c;
        ++counts[size_t(c)];
        changed = true;
      }
    }
    centroids = exact_means(points, assign, k);
    if (!changed && iter > 0) break;
  }
  return {std::move(assign), std::move(centroids)};
}

std::vector<Embedding> enroll(const std::vector<Embedding>& embeddings, int k,
                              uint64_t seed) {
  if (embeddings.empty()) throw DataError("enroll: empty embedding set");
  KmeansResult res = kmeans(embeddings, k, seed);
  return res.centroids;
}

Gallery build_gallery(const std::map<std::string, std::vector<Embedding>>& per_subject,
                      int k, uint64_t seed, MatchDistance distance) {
  Gallery g;
  g.k = k;
  g.seed = seed;
  g.distance = distance;
  for (const auto& [subject, embs] : per_subject)
    g.prototypes[subject] = enroll(embs, k, derive_seed(seed, subject));
  return g;
}

MatchResult match(const Embedding& query, const Gallery& gallery) {
  if (gallery.prototypes.empty()) throw DataError("match: empty gallery");
  MatchResult res;
  bool first = true;
  for (const auto& [subject, protos] : gallery.prototypes) {
    double best = -1e300;
    for (const Embedding& p : protos) {
      double s = gallery.distance == MatchDistance::cosine
                     ? nn::cosine_raw(query, p)
                     : -std::sqrt(sq_dist(query, p));
      best = std::max(best, s);
    }
    res.subject_scores.emplace_back(subject, best);
    // map iteration is id-ascending, so strict > keeps the lexicographically
    // smallest subject on ties
    if (first || best > res.best_score) {
      res.best_score = best;
      res.subject_id = subject;
      first = false;
    }
  }
  return res;
}

void save_gallery(const std::string& path, const Gallery& gallery) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write gallery: " + path);
  f << "hpaf-gallery 1\n";
  f << "k " << gallery.k << "\n";
  f << "seed " << gallery.seed << "\n";
  f << "distance " << (gallery.distance == MatchDistance::cosine ? "cosine" : "euclidean")
    << "\n";
  char buf[40];
  for (const auto& [subject, protos] : gallery.prototypes) {
    f << "subject " << subject << " " << protos.size() << " "
      << (protos.empty() ? 0 : protos[0].size()) << "\n";
    for (const Embedding& p : protos) {
      for (size_t i = 0; i < p.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s%a", i ? " " : "", p[i]);
        f << buf;
      }
      f << "\n";
    }
  }
  if (!f) throw IoError("failed writing gallery: " + path);
}

Gallery load_gallery(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open gallery: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "hpaf-gallery 1")
    throw ParseError("not a gallery file: " + path);
  Gallery g;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "k") {
      ss >> g.k;
    } else if (tag == "seed") {
      ss >> g.seed;
    } else if (tag == "distance") {
      std::string d;
      ss >> d;
      g.distance = d == "euclidean" ? MatchDistance::euclidean : MatchDistance::cosine;
    } else if (tag == "subject") {
      std::string subject;
      size_t count = 0, dim = 0;
      if (!(ss >> subject >> count >> dim))
        throw ParseError("gallery line " + std::to_string(line_no) +
                         ": bad subject header: " + path);
      std::vector<Embedding> protos;
      for (size_t i = 0; i < count; ++i) {
        if (!std::getline(f, line))
          throw ParseError("gallery truncated at subject " + subject + ": " + path);
        ++line_no;
        std::istringstream vs(line);
        Embedding e;
        e.reserve(dim);
        std::string tok;
        while (vs >> tok) e.push_back(std::strtod(tok.c_str(), nullptr));
        if (e.size() != dim)
          throw ParseError("gallery line " + std::to_string(line_no) + ": expected " +
                           std::to_string(dim) + " values, got " +
                           std::to_string(e.size()) + ": " + path);
        protos.push_back(std::move(e));
      }
      g.prototypes[subject] = std::move(protos);
    } else {
      throw ParseError("gallery line " + std::to_string(line_no) + ": unknown tag `" +
                       tag + "`: " + path);
    }
  }
  return g;
}

}  // namespace hpaf
