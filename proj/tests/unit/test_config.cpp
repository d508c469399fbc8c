#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hpaf/config.hpp"
#include "hpaf/dataset.hpp"
#include "hpaf/errors.hpp"
#include "support.hpp"

using namespace hpaf;

TEST_SUITE_BEGIN("config");

TEST_CASE("defaults follow the published recipe") {
  auto kv = KeyValueConfig::from_string("", "t");
  PipelineConfig cfg = PipelineConfig::from(kv);
  CHECK(cfg.prep.low_cut_hz == 0.5);
  CHECK(cfg.prep.high_cut_hz == 40.0);
  CHECK(cfg.prep.target_rate_hz == 200.0);
  CHECK(cfg.windows.p_start == -80);
  CHECK(cfg.windows.qrs_start == -20);
  CHECK(cfg.windows.st_start == 20);
  CHECK(cfg.windows.tu_start == 80);
  CHECK(cfg.windows.tu_end == 160);
  CHECK(cfg.windows.p_len() == 60);
  CHECK(cfg.windows.qrs_len() == 40);
  CHECK(cfg.windows.st_len() == 60);
  CHECK(cfg.windows.tu_len() == 80);
  CHECK(cfg.train.epochs == 40);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.momentum == 0.9);
  CHECK(cfg.train.base_lr == 1e-4);
  CHECK(cfg.prototypes == 3);
  CHECK(cfg.data.csv_rate_hz == 500.0);
  CHECK(cfg.data.csv_column == 0);
}

TEST_CASE("parsing: comments, whitespace, overrides") {
  auto kv = KeyValueConfig::from_string(
      "# comment line\n"
      "seed = 7   # trailing comment\n"
      "  train.margin =0.45\n"
      "\n"
      "train.margin= 0.5\n",
      "t");
  PipelineConfig cfg = PipelineConfig::from(kv);
  CHECK(cfg.seed == 7);
  CHECK(cfg.train.margin == 0.5);  // later assignment wins
}

TEST_CASE("parsing: malformed lines and values raise ConfigError") {
  CHECK_THROWS_AS(KeyValueConfig::from_string("not a kv line\n", "t"), ConfigError);
  auto kv = KeyValueConfig::from_string("train.epochs = banana\n", "t");
  CHECK_THROWS_AS(PipelineConfig::from(kv), ConfigError);
  auto kv2 = KeyValueConfig::from_string("prep.low_cut_hz = 50\n", "t");
  CHECK_THROWS_AS(PipelineConfig::from(kv2), ConfigError);  // band edges invalid
  auto kv3 = KeyValueConfig::from_string("enroll.distance = manhattan\n", "t");
  CHECK_THROWS_AS(PipelineConfig::from(kv3), ConfigError);
}

TEST_CASE("config hash: stable and sensitive to values") {
  auto kv1 = KeyValueConfig::from_string("seed = 1\ntrain.margin = 0.3\n", "t");
  auto kv2 = KeyValueConfig::from_string("train.margin = 0.3\nseed = 1\n", "t");
  auto kv3 = KeyValueConfig::from_string("seed = 2\ntrain.margin = 0.3\n", "t");
  CHECK(PipelineConfig::hash(kv1) == PipelineConfig::hash(kv2));  // order-insensitive
  CHECK(PipelineConfig::hash(kv1) != PipelineConfig::hash(kv3));
}

TEST_CASE("beats csv: round trip preserves every field") {
  testsup::Rng rng(9101);
  std::vector<PhaseSegments> beats;
  for (int i = 0; i < 5; ++i) {
    PhaseSegments b;
    b.subject_id = "s" + std::to_string(i % 2);
    b.session_id = std::to_string(1 + i % 3);
    b.r_index = 100 + 37 * i;
    auto fill = [&](std::vector<double>& seg, size_t n) {
      seg.resize(n);
      for (double& v : seg) v = rng.uniform(-3.0, 3.0);
    };
    fill(b.p, 60);
    fill(b.qrs, 40);
    fill(b.st, 60);
    fill(b.tu, 80);
    beats.push_back(std::move(b));
  }
  auto dir = testsup::scratch_dir("beats");
  save_beats_csv(dir + "/beats.csv", beats);
  auto loaded = load_beats_csv(dir + "/beats.csv");
  REQUIRE(loaded.size() == beats.size());
  for (size_t i = 0; i < beats.size(); ++i) {
    CHECK(loaded[i].subject_id == beats[i].subject_id);
    CHECK(loaded[i].session_id == beats[i].session_id);
    CHECK(loaded[i].r_index == beats[i].r_index);
    CHECK(loaded[i].p == beats[i].p);
    CHECK(loaded[i].qrs == beats[i].qrs);
    CHECK(loaded[i].st == beats[i].st);
    CHECK(loaded[i].tu == beats[i].tu);
  }
  std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
