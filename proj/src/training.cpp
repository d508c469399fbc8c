#include "hpaf/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "hpaf/errors.hpp"
#include "hpaf/rng.hpp"

namespace hpaf {

using nn::Tensor;

SubjectIndex SubjectIndex::build(const std::vector<PhaseSegments>& all_beats) {
  SubjectIndex idx;
  for (size_t i = 0; i < all_beats.size(); ++i)
    idx.beats[all_beats[i].subject_id].push_back(int(i));
  for (const auto& [s, v] : idx.beats) idx.subjects.push_back(s);
  return idx;
}

std::vector<std::string> SubjectIndex::eligible(int min_beats) const {
  std::vector<std::string> out;
  for (const auto& [s, v] : beats)
    if (int(v.size()) >= min_beats) out.push_back(s);
  return out;
}

PairBatch sample_pair_batch(const SubjectIndex& index, int batch_size, Rng& rng) {
  auto pool = index.eligible(2);
  if (pool.size() < 2)
    throw DataError("pair sampling needs >= 2 subjects with >= 2 beats, have " +
                    std::to_string(pool.size()));
  std::vector<std::string> chosen;
  if (int(pool.size()) >= batch_size) {
    rng.shuffle(pool);
    chosen.assign(pool.begin(), pool.begin() + batch_size);
  } else {
    for (int i = 0; i < batch_size; ++i)
      chosen.push_back(pool[size_t(rng.uniform_int(0, int64_t(pool.size()) - 1))]);
    // mining needs at least two identities in the batch
    bool all_same = std::all_of(chosen.begin(), chosen.end(),
                                [&](const std::string& s) { return s == chosen[0]; });
    if (all_same) {
      std::string other;
      for (const auto& s : pool)
        if (s != chosen[0]) {
          other = s;
          break;
        }
      chosen.back() = other;
    }
  }
  PairBatch batch;
  for (const std::string& s : chosen) {
    const auto& beats = index.beats.at(s);
    int i = int(rng.uniform_int(0, int64_t(beats.size()) - 1));
    int j = int(rng.uniform_int(0, int64_t(beats.size()) - 2));
    if (j >= i) ++j;
    batch.anchors.push_back(beats[size_t(i)]);
    batch.positives.push_back(beats[size_t(j)]);
  }
  return batch;
}

std::vector<int> mine_negatives(const std::vector<std::vector<double>>& values,
                                const std::vector<std::string>& subject_ids,
                                bool strict_paper_mining) {
  size_t pool = values.size();
  size_t b = pool / 2;
  std::vector<int> negatives(b, -1);
  for (size_t i = 0; i < b; ++i) {
    double best = -2.0;
    int best_j = -1;
    for (size_t j = 0; j < pool; ++j) {
      if (j == i || j == b + i) continue;  // the anchor and its paired positive
      if (!strict_paper_mining && subject_ids[j] == subject_ids[i]) continue;
      double s = nn::cosine_raw(values[i], values[j]);
      if (s > best) {
        best = s;
        best_j = int(j);
      }
    }
    if (best_j < 0)
      throw ContractError("no valid negative for anchor " + std::to_string(i) +
                          " (pool is single-subject)");
    negatives[i] = best_j;
  }
  return negatives;
}

Tensor contrastive_loss(const std::vector<Tensor>& embeddings,
                        const std::vector<std::string>& subject_ids, double margin,
                        bool strict_paper_mining) {
  if (embeddings.size() < 4 || embeddings.size() % 2 != 0)
    throw ContractError("contrastive loss expects 2B embeddings with B >= 2");
  if (subject_ids.size() != embeddings.size())
    throw ContractError("contrastive loss: ids/embeddings size mismatch");
  size_t b = embeddings.size() / 2;

  // Mining runs on raw values; the selected index is a constant of the graph.
  std::vector<std::vector<double>> values;
  values.reserve(embeddings.size());
  for (const Tensor& e : embeddings)
    values.emplace_back(e.values().begin(), e.values().end());
  std::vector<int> negatives = mine_negatives(values, subject_ids, strict_paper_mining);

  Tensor acc;
  for (size_t i = 0; i < b; ++i) {
    Tensor s_pos = nn::cosine_sim(embeddings[i], embeddings[b + i]);
    Tensor s_neg = nn::cosine_sim(embeddings[i], embeddings[size_t(negatives[i])]);
    Tensor term = nn::relu(nn::add(Tensor::scalar(margin), nn::sub(s_neg, s_pos)));
    acc = i == 0 ? term : nn::add(acc, term);
  }
  return nn::scalar_mul(acc, 1.0 / double(b));
}

TrainResult train(const std::vector<PhaseSegments>& beats, const TrainConfig& tc,
                  const ModelConfig& mc, const std::string& checkpoint_dir) {
  SubjectIndex index = SubjectIndex::build(beats);
  if (index.eligible(2).size() < 2)
    throw DataError("training needs >= 2 subjects with >= 2 beats");

  TrainResult result{HpafModel::init(mc, tc.seed), {}};
  if (tc.batch_size < 2) throw ConfigError("batch size must be >= 2");

  nn::OptimizerConfig oc;
  oc.momentum = tc.momentum;
  oc.base_lr = tc.base_lr;
  oc.eta_min = tc.eta_min;
  oc.t_max = tc.epochs;
  nn::SgdOptimizer opt(result.model.params(), oc);

  Rng rng(derive_seed(tc.seed, "train"));
  int batches_per_epoch =
      int((beats.size() + size_t(tc.batch_size) - 1) / size_t(tc.batch_size));
  batches_per_epoch = std::max(batches_per_epoch, 1);

  if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    double lr = nn::lr_at(epoch, oc);
    double loss_sum = 0.0;
    for (int bi = 0; bi < batches_per_epoch; ++bi) {
      PairBatch batch = sample_pair_batch(index, tc.batch_size, rng);
      {
        nn::Tape tape;
        nn::TapeScope scope(tape);
        std::vector<Tensor> embeddings;
        std::vector<std::string> ids;
        for (int idx : batch.anchors) {
          embeddings.push_back(result.model.encode(beats[size_t(idx)]));
          ids.push_back(beats[size_t(idx)].subject_id);
        }
        for (int idx : batch.positives) {
          embeddings.push_back(result.model.encode(beats[size_t(idx)]));
          ids.push_back(beats[size_t(idx)].subject_id);
        }
        Tensor loss =
            contrastive_loss(embeddings, ids, tc.margin, tc.strict_paper_mining);
        opt.zero_grad();
        tape.backward(loss);
        loss_sum += loss.item();
      }
      opt.step(lr);
      double gabor_drift = result.model.max_gabor_sum_abs();
      if (gabor_drift >= 1e-10)
        throw ContractError("Gabor zero-mean constraint violated after step: " +
                            std::to_string(gabor_drift));
    }
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.mean_loss = loss_sum / double(batches_per_epoch);
    result.history.push_back(st);
    if (!checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
      result.model.save((std::filesystem::path(checkpoint_dir) / name).string());
    }
  }
  if (!checkpoint_dir.empty())
    result.model.save((std::filesystem::path(checkpoint_dir) / "final.ckpt").string());
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write loss history: " + path);
  f << "epoch,lr,mean_loss\n";
  char buf[80];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", e.epoch, e.lr, e.mean_loss);
    f << buf;
  }
}

}  // namespace hpaf
