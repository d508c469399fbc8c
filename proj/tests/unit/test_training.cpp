#include <cmath>
#include <set>

#include "doctest.h"
#include "hpaf/errors.hpp"
#include "hpaf/training.hpp"
#include "support.hpp"

using namespace hpaf;
using namespace hpaf::nn;
using testsup::random_tensor;

namespace {

PhaseSegments beat_for(const std::string& subject, testsup::Rng& rng) {
  PhaseSegments b;
  b.subject_id = subject;
  b.session_id = "1";
  auto fill = [&](std::vector<double>& seg, size_t n) {
    seg.resize(n);
    for (double& v : seg) v = rng.uniform(-1.0, 1.0);
  };
  fill(b.p, 60);
  fill(b.qrs, 40);
  fill(b.st, 60);
  fill(b.tu, 80);
  return b;
}

std::vector<PhaseSegments> tiny_dataset(int subjects, int beats_per_subject,
                                        uint64_t seed) {
  testsup::Rng rng(seed);
  std::vector<PhaseSegments> out;
  for (int s = 0; s < subjects; ++s)
    for (int b = 0; b < beats_per_subject; ++b)
      out.push_back(beat_for("subj" + std::to_string(s), rng));
  return out;
}

std::vector<Tensor> random_embeddings(int n, int d, testsup::Rng& rng) {
  std::vector<Tensor> out;
  for (int i = 0; i < n; ++i) out.push_back(random_tensor({d}, rng, -1.0, 1.0, false));
  return out;
}

// O(B^2) reference mining: scan the entire pool per anchor.
int brute_force_negative(const std::vector<std::vector<double>>& values,
                         const std::vector<std::string>& ids, size_t anchor,
                         bool strict) {
  size_t pool = values.size(), b = pool / 2;
  double best = -2.0;
  int best_j = -1;
  for (size_t j = 0; j < pool; ++j) {
    if (j == anchor || j == b + anchor) continue;
    if (!strict && ids[j] == ids[anchor]) continue;
    double s = cosine_raw(values[anchor], values[j]);
    if (s > best) {
      best = s;
      best_j = int(j);
    }
  }
  return best_j;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("pair batch: exhaustive two-subject case") {
  auto beats = tiny_dataset(2, 2, 1);
  SubjectIndex idx = SubjectIndex::build(beats);
  testsup::Rng rng(2001);
  PairBatch batch = sample_pair_batch(idx, 2, rng);
  REQUIRE(batch.anchors.size() == 2);
  std::set<std::string> subjects;
  for (size_t i = 0; i < 2; ++i) {
    const auto& a = beats[size_t(batch.anchors[i])];
    const auto& p = beats[size_t(batch.positives[i])];
    CHECK(a.subject_id == p.subject_id);
    CHECK(batch.anchors[i] != batch.positives[i]);
    subjects.insert(a.subject_id);
  }
  CHECK(subjects.size() == 2);
}

TEST_CASE("pair batch: single-subject dataset is an error") {
  auto beats = tiny_dataset(1, 8, 2);
  SubjectIndex idx = SubjectIndex::build(beats);
  testsup::Rng rng(2002);
  CHECK_THROWS_AS(sample_pair_batch(idx, 4, rng), DataError);
}

TEST_CASE("pair batch: fixed seed gives identical sequences") {
  auto beats = tiny_dataset(5, 6, 3);
  SubjectIndex idx = SubjectIndex::build(beats);
  testsup::Rng rng1(2003), rng2(2003);
  for (int i = 0; i < 10; ++i) {
    PairBatch b1 = sample_pair_batch(idx, 8, rng1);
    PairBatch b2 = sample_pair_batch(idx, 8, rng2);
    CHECK(b1.anchors == b2.anchors);
    CHECK(b1.positives == b2.positives);
  }
}

TEST_CASE("pair batch: replacement kicks in when subjects < B, still >= 2 distinct") {
  auto beats = tiny_dataset(3, 4, 4);
  SubjectIndex idx = SubjectIndex::build(beats);
  testsup::Rng rng(2004);
  for (int trial = 0; trial < 20; ++trial) {
    PairBatch batch = sample_pair_batch(idx, 8, rng);
    REQUIRE(batch.anchors.size() == 8);
    std::set<std::string> subjects;
    for (int a : batch.anchors) subjects.insert(beats[size_t(a)].subject_id);
    CHECK(subjects.size() >= 2);
  }
}

TEST_CASE("loss: closed-form anchors") {
  // s(u,uP)=1, s(u,uN)=0, m=0.3 -> hinge(0.3 - 1) = 0
  std::vector<Tensor> embs = {
      Tensor::from({2}, {1.0, 0.0}),  // anchor 0
      Tensor::from({2}, {0.0, 1.0}),  // anchor 1 (provides the orthogonal negative)
      Tensor::from({2}, {1.0, 0.0}),  // positive 0 (identical: s = 1)
      Tensor::from({2}, {0.0, 1.0}),  // positive 1
  };
  std::vector<std::string> ids = {"a", "b", "a", "b"};
  auto loss = contrastive_loss(embs, ids, 0.3);
  CHECK(loss.item() == doctest::Approx(0.0));

  // mutually orthogonal pool: s(u,uP) == s(u,uN) == 0 -> per-anchor loss is m
  std::vector<Tensor> tie = {
      Tensor::from({4}, {1.0, 0.0, 0.0, 0.0}),
      Tensor::from({4}, {0.0, 1.0, 0.0, 0.0}),
      Tensor::from({4}, {0.0, 0.0, 1.0, 0.0}),
      Tensor::from({4}, {0.0, 0.0, 0.0, 1.0}),
  };
  std::vector<std::string> tie_ids = {"a", "b", "a", "b"};
  auto tie_loss = contrastive_loss(tie, tie_ids, 0.3);
  CHECK(tie_loss.item() == doctest::Approx(0.3));
}

TEST_CASE("loss: mining matches the brute-force oracle for B <= 8") {
  testsup::Rng rng(2005);
  for (int b = 2; b <= 8; ++b) {
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<std::string> ids;
      for (int i = 0; i < b; ++i) ids.push_back("s" + std::to_string(i % std::max(2, b / 2)));
      ids.insert(ids.end(), ids.begin(), ids.end());  // positives mirror anchors
      auto embs = random_embeddings(2 * b, 6, rng);
      std::vector<std::vector<double>> values;
      for (auto& e : embs) values.emplace_back(e.values().begin(), e.values().end());
      for (bool strict : {false, true}) {
        auto mined = mine_negatives(values, ids, strict);
        for (size_t i = 0; i < size_t(b); ++i) {
          CHECK(mined[i] == brute_force_negative(values, ids, i, strict));
          CHECK(mined[i] != int(i));
          CHECK(mined[i] != int(size_t(b) + i));
          if (!strict) CHECK(ids[size_t(mined[i])] != ids[i]);
        }
      }
    }
  }
}

TEST_CASE("loss: bounds and scale invariance") {
  testsup::Rng rng(2006);
  for (int trial = 0; trial < 30; ++trial) {
    int b = 4;
    std::vector<std::string> ids = {"a", "b", "c", "d", "a", "b", "c", "d"};
    auto embs = random_embeddings(2 * b, 5, rng);
    double m = 0.3;
    double loss = contrastive_loss(embs, ids, m).item();
    CHECK(loss >= 0.0);
    CHECK(loss <= m + 2.0);
    // cosine similarity is scale-invariant
    std::vector<Tensor> scaled;
    for (auto& e : embs) scaled.push_back(scalar_mul(e, 17.5));
    double loss_scaled = contrastive_loss(scaled, ids, m).item();
    CHECK(loss_scaled == doctest::Approx(loss).epsilon(1e-12));
  }
}

TEST_CASE("loss: zero hinge contributes zero gradient") {
  // anchor/positive identical, negative orthogonal: hinge(0.3 - 1) = 0
  Tensor anchor = Tensor::param({2}, {1.0, 0.0});
  std::vector<Tensor> embs = {
      anchor,
      Tensor::from({2}, {0.0, 1.0}),
      Tensor::from({2}, {1.0, 0.0}),
      Tensor::from({2}, {0.0, 1.0}),
  };
  std::vector<std::string> ids = {"a", "b", "a", "b"};
  Tape tape;
  TapeScope scope(tape);
  auto loss = contrastive_loss(embs, ids, 0.3);
  tape.backward(loss);
  for (double g : anchor.grad()) CHECK(g == 0.0);
}

TEST_CASE("train: zero epochs returns the initialization") {
  auto beats = tiny_dataset(3, 4, 5);
  TrainConfig tc;
  tc.epochs = 0;
  tc.batch_size = 4;
  tc.seed = 77;
  ModelConfig mc = ModelConfig::tiny();
  TrainResult res = train(beats, tc, mc);
  HpafModel fresh = HpafModel::init(mc, tc.seed);
  auto a = res.model.named_params();
  auto b = fresh.named_params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    auto va = a[i].second.values();
    auto vb = b[i].second.values();
    for (size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
  }
  CHECK(res.history.empty());
}

TEST_CASE("train: lr trace follows the cosine schedule and loss is recorded") {
  auto beats = tiny_dataset(3, 3, 6);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.base_lr = 1e-3;
  tc.seed = 11;
  ModelConfig mc = ModelConfig::tiny();
  TrainResult res = train(beats, tc, mc);
  REQUIRE(res.history.size() == 3);
  OptimizerConfig oc;
  oc.base_lr = tc.base_lr;
  oc.eta_min = tc.eta_min;
  oc.t_max = tc.epochs;
  for (int e = 0; e < 3; ++e) {
    CHECK(res.history[size_t(e)].epoch == e);
    CHECK(res.history[size_t(e)].lr == doctest::Approx(lr_at(e, oc)));
    CHECK(std::isfinite(res.history[size_t(e)].mean_loss));
  }
}

TEST_CASE("train: deterministic given the seed") {
  auto beats = tiny_dataset(3, 3, 7);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.seed = 123;
  ModelConfig mc = ModelConfig::tiny();
  TrainResult r1 = train(beats, tc, mc);
  TrainResult r2 = train(beats, tc, mc);
  auto p1 = r1.model.named_params();
  auto p2 = r2.model.named_params();
  for (size_t i = 0; i < p1.size(); ++i) {
    auto v1 = p1[i].second.values();
    auto v2 = p2[i].second.values();
    for (size_t j = 0; j < v1.size(); ++j) CHECK(v1[j] == v2[j]);
  }
  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t e = 0; e < r1.history.size(); ++e)
    CHECK(r1.history[e].mean_loss == r2.history[e].mean_loss);
}

TEST_SUITE_END();
