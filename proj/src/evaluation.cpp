#include "hpaf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hpaf/errors.hpp"
#include "hpaf/rng.hpp"

namespace hpaf {
namespace {

std::vector<double> sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Distinct candidate thresholds plus a sentinel above the maximum (where
// FAR = 0 and FRR = 1).
std::vector<double> sweep_thresholds(const ScoreSet& s) {
  std::vector<double> t;
  t.reserve(s.genuine.size() + s.impostor.size() + 1);
  t.insert(t.end(), s.genuine.begin(), s.genuine.end());
  t.insert(t.end(), s.impostor.begin(), s.impostor.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  t.push_back(t.back() + 1.0);
  return t;
}

void check_nonempty(const ScoreSet& s, const char* op) {
  if (s.genuine.empty() || s.impostor.empty())
    throw DataError(std::string(op) + ": both genuine and impostor scores required (" +
                    std::to_string(s.genuine.size()) + " genuine, " +
                    std::to_string(s.impostor.size()) + " impostor)");
}

void append_csv_value(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

double auc(const ScoreSet& scores) {
  check_nonempty(scores, "auc");
  auto imp = sorted(scores.impostor);
  double numer = 0.0;
  for (double g : scores.genuine) {
    auto lo = std::lower_bound(imp.begin(), imp.end(), g);
    auto hi = std::upper_bound(imp.begin(), imp.end(), g);
    numer += double(lo - imp.begin()) + 0.5 * double(hi - lo);
  }
  return numer / (double(scores.genuine.size()) * double(imp.size()));
}

double eer(const ScoreSet& scores) {
  check_nonempty(scores, "eer");
  auto gen = sorted(scores.genuine);
  auto imp = sorted(scores.impostor);
  double best_gap = 2.0, best_eer = 1.0;
  for (double t : sweep_thresholds(scores)) {
    double far = double(imp.end() - std::lower_bound(imp.begin(), imp.end(), t)) /
                 double(imp.size());
    double frr = double(std::lower_bound(gen.begin(), gen.end(), t) - gen.begin()) /
                 double(gen.size());
    double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best_eer = (far + frr) / 2.0;
    }
  }
  return best_eer;
}

std::vector<RocPoint> roc_curve(const ScoreSet& scores) {
  check_nonempty(scores, "roc");
  auto gen = sorted(scores.genuine);
  auto imp = sorted(scores.impostor);
  std::vector<RocPoint> out;
  for (double t : sweep_thresholds(scores)) {
    RocPoint p;
    p.threshold = t;
    p.far = double(imp.end() - std::lower_bound(imp.begin(), imp.end(), t)) /
            double(imp.size());
    p.tar = double(gen.end() - std::lower_bound(gen.begin(), gen.end(), t)) /
            double(gen.size());
    out.push_back(p);
  }
  return out;
}

CmcCurve cmc(const std::vector<RankedQuery>& queries, int gallery_size) {
  if (queries.empty()) throw DataError("cmc: no queries");
  if (gallery_size < 1) throw DataError("cmc: empty gallery");
  std::vector<int> hits(size_t(gallery_size), 0);
  for (const RankedQuery& q : queries) {
    bool found = false;
    double true_score = 0.0;
    for (const auto& [id, score] : q.subject_scores)
      if (id == q.true_id) {
        true_score = score;
        found = true;
      }
    if (!found) continue;  // impostor query: a miss at every rank
    int rank = 1;
    for (const auto& [id, score] : q.subject_scores) {
      if (id == q.true_id) continue;
      if (score > true_score || (score == true_score && id < q.true_id)) ++rank;
    }
    if (rank <= gallery_size) ++hits[size_t(rank - 1)];
  }
  CmcCurve curve;
  curve.rates.resize(size_t(gallery_size));
  double acc = 0.0;
  for (int k = 0; k < gallery_size; ++k) {
    acc += double(hits[size_t(k)]);
    curve.rates[size_t(k)] = acc / double(queries.size());
  }
  curve.top1 = curve.rates[0];
  return curve;
}

EmbeddingsBySubject embed_by_subject(const HpafModel& model,
                                     const std::vector<PhaseSegments>& beats) {
  EmbeddingsBySubject out;
  for (const PhaseSegments& beat : beats) {
    nn::Tensor u = model.encode(beat);
    out[beat.subject_id].emplace_back(u.values().begin(), u.values().end());
  }
  return out;
}

EvalReport evaluate_matching(const EmbeddingsBySubject& enroll_embeddings,
                             const EmbeddingsBySubject& query_embeddings, int prototypes,
                             uint64_t seed, MatchDistance distance) {
  if (enroll_embeddings.empty()) throw DataError("evaluate_matching: empty gallery side");
  Gallery gallery = build_gallery(enroll_embeddings, prototypes, seed, distance);

  ScoreSet scores;
  std::vector<RankedQuery> ranked;
  int correct = 0, n_queries = 0;
  for (const auto& [subject, queries] : query_embeddings) {
    for (const Embedding& q : queries) {
      MatchResult m = match(q, gallery);
      ++n_queries;
      if (m.subject_id == subject) ++correct;
      RankedQuery rq;
      rq.subject_scores = m.subject_scores;
      rq.true_id = subject;
      ranked.push_back(rq);
      for (const auto& [id, score] : m.subject_scores) {
        if (id == subject)
          scores.genuine.push_back(score);
        else
          scores.impostor.push_back(score);
      }
    }
  }
  if (n_queries == 0) throw DataError("evaluate_matching: no queries");

  EvalReport rep;
  rep.n_queries = n_queries;
  rep.top1_acc = double(correct) / double(n_queries);
  rep.n_genuine = int(scores.genuine.size());
  rep.n_impostor = int(scores.impostor.size());
  if (!scores.genuine.empty() && !scores.impostor.empty()) {
    rep.auc = auc(scores);
    rep.eer = eer(scores);
    rep.roc = roc_curve(scores);
  }
  CmcCurve curve = cmc(ranked, int(gallery.prototypes.size()));
  rep.cmc = curve.rates;
  return rep;
}

namespace {

// Chronological split: the first ceil(n/2) beats enroll/train, the rest query.
void split_half(const std::vector<int>& idx, std::vector<int>& first,
                std::vector<int>& second) {
  size_t train_n = (idx.size() + 1) / 2;
  first.assign(idx.begin(), idx.begin() + long(train_n));
  second.assign(idx.begin() + long(train_n), idx.end());
}

}  // namespace

ProtocolResult run_closed_set(const std::vector<PhaseSegments>& beats,
                              const ProtocolOptions& opt) {
  SubjectIndex index = SubjectIndex::build(beats);
  ProtocolResult result;
  std::vector<PhaseSegments> train_beats;
  std::vector<std::pair<std::string, const PhaseSegments*>> test_beats;
  for (const std::string& subject : index.subjects) {
    const auto& idx = index.beats.at(subject);
    if (idx.size() < 2) {
      ++result.report.excluded_subjects;
      continue;
    }
    std::vector<int> first, second;
    split_half(idx, first, second);
    for (int i : first) train_beats.push_back(beats[size_t(i)]);
    for (int i : second) test_beats.emplace_back(subject, &beats[size_t(i)]);
  }
  if (train_beats.empty() || test_beats.empty())
    throw DataError("closed-set protocol: no usable subjects");

  TrainResult tr = train(train_beats, opt.train, opt.model);
  result.history = tr.history;

  result.enroll_embeddings = embed_by_subject(tr.model, train_beats);
  std::vector<PhaseSegments> queries;
  for (auto& [subject, beat] : test_beats) queries.push_back(*beat);
  result.query_embeddings = embed_by_subject(tr.model, queries);

  int excluded = result.report.excluded_subjects;
  result.report = evaluate_matching(result.enroll_embeddings, result.query_embeddings,
                                    opt.prototypes, opt.seed, opt.distance);
  result.report.excluded_subjects = excluded;
  return result;
}

ProtocolResult run_open_set(const std::vector<PhaseSegments>& beats,
                            const ProtocolOptions& opt) {
  SubjectIndex index = SubjectIndex::build(beats);
  ProtocolResult result;
  std::vector<std::string> usable;
  for (const std::string& subject : index.subjects) {
    if (index.beats.at(subject).size() < 2) {
      ++result.report.excluded_subjects;
      continue;
    }
    usable.push_back(subject);
  }
  if (usable.size() < 2) throw DataError("open-set protocol: need >= 2 usable subjects");

  // Seeded disjoint subject split, half training / half testing.
  Rng rng(derive_seed(opt.seed, "open-split"));
  rng.shuffle(usable);
  size_t n_train = (usable.size() + 1) / 2;
  std::vector<std::string> train_subjects(usable.begin(), usable.begin() + long(n_train));
  std::vector<std::string> test_subjects(usable.begin() + long(n_train), usable.end());
  if (test_subjects.empty()) throw DataError("open-set protocol: no test subjects");

  std::vector<PhaseSegments> train_beats;
  for (const std::string& s : train_subjects)
    for (int i : index.beats.at(s)) train_beats.push_back(beats[size_t(i)]);

  TrainResult tr = train(train_beats, opt.train, opt.model);
  result.history = tr.history;

  std::vector<PhaseSegments> enroll_beats, query_beats;
  for (const std::string& s : test_subjects) {
    std::vector<int> first, second;
    split_half(index.beats.at(s), first, second);
    for (int i : first) enroll_beats.push_back(beats[size_t(i)]);
    for (int i : second) query_beats.push_back(beats[size_t(i)]);
  }
  result.enroll_embeddings = embed_by_subject(tr.model, enroll_beats);
  result.query_embeddings = embed_by_subject(tr.model, query_beats);

  int excluded = result.report.excluded_subjects;
  result.report = evaluate_matching(result.enroll_embeddings, result.query_embeddings,
                                    opt.prototypes, opt.seed, opt.distance);
  result.report.excluded_subjects = excluded;
  return result;
}

void write_report_csv(const std::string& dir, const EvalReport& report) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::string out = "metric,value\n";
    out += "top1_acc,";
    append_csv_value(out, report.top1_acc);
    out += "\nauc,";
    append_csv_value(out, report.auc);
    out += "\neer,";
    append_csv_value(out, report.eer);
    out += "\nn_queries," + std::to_string(report.n_queries);
    out += "\nn_genuine," + std::to_string(report.n_genuine);
    out += "\nn_impostor," + std::to_string(report.n_impostor);
    out += "\nexcluded_subjects," + std::to_string(report.excluded_subjects);
    out += "\n";
    std::ofstream f(fs::path(dir) / "summary.csv", std::ios::trunc);
    if (!f) throw IoError("cannot write summary.csv in " + dir);
    f << out;
  }
  {
    std::string out = "threshold,far,tar\n";
    for (const RocPoint& p : report.roc) {
      append_csv_value(out, p.threshold);
      out += ",";
      append_csv_value(out, p.far);
      out += ",";
      append_csv_value(out, p.tar);
      out += "\n";
    }
    std::ofstream f(fs::path(dir) / "roc.csv", std::ios::trunc);
    if (!f) throw IoError("cannot write roc.csv in " + dir);
    f << out;
  }
  {
    std::string out = "rank,rate\n";
    for (size_t k = 0; k < report.cmc.size(); ++k) {
      out += std::to_string(k + 1) + ",";
      append_csv_value(out, report.cmc[k]);
      out += "\n";
    }
    std::ofstream f(fs::path(dir) / "cmc.csv", std::ios::trunc);
    if (!f) throw IoError("cannot write cmc.csv in " + dir);
    f << out;
  }
}

}  // namespace hpaf
