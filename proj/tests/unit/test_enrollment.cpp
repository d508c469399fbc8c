#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "hpaf/enrollment.hpp"
#include "hpaf/errors.hpp"
#include "hpaf/tensor.hpp"
#include "support.hpp"

using namespace hpaf;

namespace {

std::vector<Embedding> cloud(const Embedding& center, double radius, int n,
                             testsup::Rng& rng) {
  std::vector<Embedding> out;
  for (int i = 0; i < n; ++i) {
    Embedding e = center;
    for (double& v : e) v += rng.uniform(-radius, radius);
    out.push_back(std::move(e));
  }
  return out;
}

Embedding mean_of(const std::vector<Embedding>& points, const std::vector<int>& assign,
                  int cluster) {
  Embedding m(points[0].size(), 0.0);
  int count = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    if (assign[i] != cluster) continue;
    ++count;
    for (size_t d = 0; d < m.size(); ++d) m[d] += points[i][d];
  }
  for (double& v : m) v /= double(count);
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("enrollment");

TEST_CASE("kmeans: K=1 is the global mean") {
  testsup::Rng rng(3001);
  auto points = cloud({1.0, -2.0, 0.5}, 1.0, 17, rng);
  auto res = kmeans(points, 1, 5);
  REQUIRE(res.centroids.size() == 1);
  Embedding mean(3, 0.0);
  for (const auto& p : points)
    for (size_t d = 0; d < 3; ++d) mean[d] += p[d];
  for (double& v : mean) v /= double(points.size());
  for (size_t d = 0; d < 3; ++d)
    CHECK(res.centroids[0][d] == doctest::Approx(mean[d]).epsilon(1e-12));
}

TEST_CASE("kmeans: two planted clouds are recovered") {
  testsup::Rng rng(3002);
  Embedding c0 = {0.0, 0.0, 0.0, 0.0};
  Embedding c1 = {10.0, 0.0, 0.0, 0.0};
  auto points = cloud(c0, 0.1, 20, rng);
  auto more = cloud(c1, 0.1, 20, rng);
  points.insert(points.end(), more.begin(), more.end());
  auto res = kmeans(points, 2, 9);
  REQUIRE(res.centroids.size() == 2);
  // match centroids to true centers
  auto dist = [](const Embedding& a, const Embedding& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  int i0 = dist(res.centroids[0], c0) < dist(res.centroids[1], c0) ? 0 : 1;
  CHECK(dist(res.centroids[size_t(i0)], c0) < 0.2);
  CHECK(dist(res.centroids[size_t(1 - i0)], c1) < 0.2);
  for (size_t i = 0; i < 20; ++i) CHECK(res.assignments[i] == res.assignments[0]);
  for (size_t i = 20; i < 40; ++i) CHECK(res.assignments[i] == res.assignments[20]);
  CHECK(res.assignments[0] != res.assignments[20]);
}

TEST_CASE("kmeans: K clamps to the point count") {
  std::vector<Embedding> two = {{0.0, 0.0}, {5.0, 5.0}};
  auto res = kmeans(two, 3, 1);
  REQUIRE(res.centroids.size() == 2);
  // each point its own prototype
  bool direct = res.centroids[0] == two[0] && res.centroids[1] == two[1];
  bool swapped = res.centroids[0] == two[1] && res.centroids[1] == two[0];
  CHECK((direct || swapped));
}

TEST_CASE("kmeans: centroids are exact cluster means") {
  testsup::Rng rng(3003);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Embedding> points;
    int n = int(rng.uniform_int(5, 40));
    for (int i = 0; i < n; ++i) {
      Embedding e(4);
      for (double& v : e) v = rng.uniform(-3.0, 3.0);
      points.push_back(std::move(e));
    }
    auto res = kmeans(points, 3, uint64_t(trial));
    for (int c = 0; c < int(res.centroids.size()); ++c) {
      bool used = false;
      for (int a : res.assignments)
        if (a == c) used = true;
      if (!used) continue;
      Embedding expect = mean_of(points, res.assignments, c);
      for (size_t d = 0; d < expect.size(); ++d)
        CHECK(std::abs(res.centroids[size_t(c)][d] - expect[d]) <= 1e-12);
    }
  }
}

TEST_CASE("enroll: single beat and K=1 reductions") {
  std::vector<Embedding> one = {{0.5, -0.25, 1.0}};
  auto protos = enroll(one, 3, 7);
  REQUIRE(protos.size() == 1);
  CHECK(protos[0] == one[0]);

  testsup::Rng rng(3004);
  auto points = cloud({1.0, 1.0, 1.0}, 2.0, 9, rng);
  auto k1 = enroll(points, 1, 7);
  REQUIRE(k1.size() == 1);
  Embedding mean(3, 0.0);
  for (const auto& p : points)
    for (size_t d = 0; d < 3; ++d) mean[d] += p[d];
  for (double& v : mean) v /= 9.0;
  for (size_t d = 0; d < 3; ++d) CHECK(k1[0][d] == doctest::Approx(mean[d]));

  CHECK_THROWS_AS(enroll({}, 3, 7), DataError);
}

TEST_CASE("match: exact prototype hit scores 1") {
  Gallery g;
  g.prototypes["alice"] = {{1.0, 0.0}, {0.0, 1.0}};
  g.prototypes["bob"] = {{-1.0, 0.0}};
  Embedding q = {0.0, 1.0};
  auto res = match(q, g);
  CHECK(res.subject_id == "alice");
  CHECK(res.best_score == doctest::Approx(1.0));
  REQUIRE(res.subject_scores.size() == 2);
}

TEST_CASE("match: orthogonal query breaks ties lexicographically") {
  Gallery g;
  g.prototypes["zeta"] = {{1.0, 0.0, 0.0}};
  g.prototypes["alpha"] = {{0.0, 1.0, 0.0}};
  Embedding q = {0.0, 0.0, 1.0};  // orthogonal to both: all scores 0
  auto res = match(q, g);
  CHECK(res.subject_id == "alpha");
  CHECK(res.best_score == doctest::Approx(0.0));
}

TEST_CASE("match: agrees with an exhaustive scan oracle") {
  testsup::Rng rng(3005);
  for (int trial = 0; trial < 20; ++trial) {
    Gallery g;
    for (int s = 0; s < 3; ++s) {
      std::vector<Embedding> protos;
      for (int k = 0; k < 3; ++k) {
        Embedding e(5);
        for (double& v : e) v = rng.uniform(-1.0, 1.0);
        protos.push_back(std::move(e));
      }
      g.prototypes["s" + std::to_string(s)] = std::move(protos);
    }
    Embedding q(5);
    for (double& v : q) v = rng.uniform(-1.0, 1.0);
    auto res = match(q, g);
    // oracle: scan every prototype of every subject
    std::string best_subject;
    double best = -2.0;
    for (const auto& [subject, protos] : g.prototypes)
      for (const auto& p : protos) {
        double s = nn::cosine_raw(q, p);
        if (s > best) {
          best = s;
          best_subject = subject;
        }
      }
    CHECK(res.subject_id == best_subject);
    CHECK(res.best_score == doctest::Approx(best).epsilon(1e-12));
    // winner invariant under positive rescaling of the query
    Embedding scaled = q;
    for (double& v : scaled) v *= 42.0;
    CHECK(match(scaled, g).subject_id == res.subject_id);
  }
  Gallery empty;
  Embedding q = {1.0};
  CHECK_THROWS_AS(match(q, empty), DataError);
}

TEST_CASE("enrollment is deterministic per seed") {
  testsup::Rng rng(3006);
  auto points = cloud({0.0, 0.0, 0.0, 0.0}, 3.0, 25, rng);
  auto a = kmeans(points, 3, 42);
  auto b = kmeans(points, 3, 42);
  CHECK(a.assignments == b.assignments);
  REQUIRE(a.centroids.size() == b.centroids.size());
  for (size_t c = 0; c < a.centroids.size(); ++c) CHECK(a.centroids[c] == b.centroids[c]);
}

TEST_CASE("gallery: save/load round trip is exact") {
  testsup::Rng rng(3007);
  std::map<std::string, std::vector<Embedding>> per_subject;
  for (int s = 0; s < 3; ++s) {
    std::vector<Embedding> embs;
    for (int i = 0; i < 7; ++i) {
      Embedding e(6);
      for (double& v : e) v = rng.uniform(-2.0, 2.0);
      embs.push_back(std::move(e));
    }
    per_subject["subj" + std::to_string(s)] = std::move(embs);
  }
  Gallery g = build_gallery(per_subject, 3, 99, MatchDistance::euclidean);
  auto dir = testsup::scratch_dir("gallery");
  save_gallery(dir + "/g.txt", g);
  Gallery loaded = load_gallery(dir + "/g.txt");
  CHECK(loaded.k == g.k);
  CHECK(loaded.seed == g.seed);
  CHECK(loaded.distance == MatchDistance::euclidean);
  REQUIRE(loaded.prototypes.size() == g.prototypes.size());
  for (const auto& [subject, protos] : g.prototypes) {
    REQUIRE(loaded.prototypes.count(subject) == 1);
    const auto& lp = loaded.prototypes.at(subject);
    REQUIRE(lp.size() == protos.size());
    for (size_t i = 0; i < protos.size(); ++i)
      for (size_t d = 0; d < protos[i].size(); ++d)
        CHECK(std::memcmp(&lp[i][d], &protos[i][d], sizeof(double)) == 0);
  }
  std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
