// Command-line driver for the phase-aware ECG identification pipeline.
//
// Subcommands: synth, ingest, segment, train, enroll, identify, verify,
// eval-closed, eval-open, export-plots. Exit codes: 0 success, 1 data/IO
// errors, 2 configuration errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hpaf/config.hpp"
#include "hpaf/dataset.hpp"
#include "hpaf/encoder.hpp"
#include "hpaf/enrollment.hpp"
#include "hpaf/errors.hpp"
#include "hpaf/evaluation.hpp"
#include "hpaf/synth.hpp"
#include "hpaf/training.hpp"

namespace fs = std::filesystem;
using namespace hpaf;

namespace {

struct CliContext {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value

  KeyValueConfig kv() const {
    KeyValueConfig kv = config_path.empty() ? KeyValueConfig::from_string("", "<cli>")
                                            : KeyValueConfig::from_file(config_path);
    for (const std::string& ov : overrides) {
      size_t eq = ov.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got `" + ov + "`");
      kv.set(ov.substr(0, eq), ov.substr(eq + 1));
    }
    return kv;
  }
};

std::vector<PhaseSegments> beats_from_args(const std::string& beats_path,
                                           const std::string& data_dir,
                                           const PipelineConfig& cfg, bool verbose) {
  if (!beats_path.empty()) return load_beats_csv(beats_path);
  if (data_dir.empty())
    throw ConfigError("either --beats or --data is required for this command");
  auto records = load_records(data_dir, cfg);
  SegmentedDataset seg = segment_records(records, cfg);
  if (verbose)
    std::cerr << "segmented " << seg.records << " records: " << seg.beats.size()
              << " beats, " << seg.skipped_beats << " boundary beats skipped, "
              << seg.short_records << " records too short\n";
  return seg.beats;
}

EmbeddingsBySubject embed_beats(const HpafModel& model,
                                const std::vector<PhaseSegments>& beats) {
  return embed_by_subject(model, beats);
}

void print_report(const EvalReport& rep) {
  std::printf("queries          %d\n", rep.n_queries);
  std::printf("top1_acc         %.6f\n", rep.top1_acc);
  std::printf("auc              %.6f\n", rep.auc);
  std::printf("eer              %.6f\n", rep.eer);
  std::printf("genuine trials   %d\n", rep.n_genuine);
  std::printf("impostor trials  %d\n", rep.n_impostor);
  if (rep.excluded_subjects > 0)
    std::printf("excluded         %d subject(s) with < 2 beats\n", rep.excluded_subjects);
}

// Minimal SVG polyline chart; enough to eyeball ROC and CMC exports.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<std::pair<double, double>>& points) {
  const int w = 640, h = 480, m = 60;
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n";
  svg << "<rect width='" << w << "' height='" << h << "' fill='white'/>\n";
  svg << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>"
      << title << "</text>\n";
  svg << "<line x1='" << m << "' y1='" << h - m << "' x2='" << w - m << "' y2='"
      << h - m << "' stroke='black'/>\n";
  svg << "<line x1='" << m << "' y1='" << h - m << "' x2='" << m << "' y2='" << m
      << "' stroke='black'/>\n";
  double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = 1.0;
  for (auto& [x, y] : points) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  auto sx = [&](double x) { return m + (x - xmin) / (xmax - xmin) * (w - 2 * m); };
  auto sy = [&](double y) { return h - m - (y - ymin) / (ymax - ymin) * (h - 2 * m); };
  svg << "<polyline fill='none' stroke='#1f77b4' stroke-width='2' points='";
  for (auto& [x, y] : points) svg << sx(x) << "," << sy(y) << " ";
  svg << "'/>\n";
  svg << "<text x='" << w / 2 << "' y='" << h - 16
      << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  svg << "<text x='18' y='" << h / 2 << "' font-size='13' transform='rotate(-90 18 "
      << h / 2 << ")' text-anchor='middle'>" << y_label << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    double fy = ymin + (ymax - ymin) * i / 4.0;
    svg << "<text x='" << m - 8 << "' y='" << sy(fy) + 4
        << "' text-anchor='end' font-size='11'>" << fy << "</text>\n";
    double fx = xmin + (xmax - xmin) * i / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", fx);
    svg << "<text x='" << sx(fx) << "' y='" << h - m + 18
        << "' text-anchor='middle' font-size='11'>" << buf << "</text>\n";
  }
  svg << "</svg>\n";
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write chart: " + path);
  f << svg.str();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open CSV: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t start = 0;
    while (true) {
      size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

int run(int argc, char** argv) {
  CLI::App app{"hpaf: phase-aware ECG biometric pipeline"};
  app.require_subcommand(1);
  CliContext ctx;
  app.add_option("--config", ctx.config_path, "flat key=value config file");
  app.add_option("--set", ctx.overrides, "override a config key (key=value)")
      ->take_all();

  // synth
  auto* sc_synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out;
  sc_synth->add_option("--out", synth_out, "output directory")->required();

  // ingest
  auto* sc_ingest = app.add_subcommand("ingest", "convert records to canonical CSV");
  std::string ingest_data, ingest_out;
  sc_ingest->add_option("--data", ingest_data, "input record directory")->required();
  sc_ingest->add_option("--out", ingest_out, "output directory")->required();

  // segment
  auto* sc_segment = app.add_subcommand("segment", "preprocess and extract beats");
  std::string seg_data, seg_out;
  sc_segment->add_option("--data", seg_data, "record directory")->required();
  sc_segment->add_option("--out", seg_out, "beats CSV path")->required();

  // train
  auto* sc_train = app.add_subcommand("train", "train the encoder");
  std::string train_beats, train_out;
  sc_train->add_option("--beats", train_beats, "beats CSV")->required();
  sc_train->add_option("--out", train_out, "checkpoint directory")->required();

  // enroll
  auto* sc_enroll = app.add_subcommand("enroll", "build a prototype gallery");
  std::string enr_beats, enr_ckpt, enr_out;
  sc_enroll->add_option("--beats", enr_beats, "beats CSV")->required();
  sc_enroll->add_option("--ckpt", enr_ckpt, "model checkpoint")->required();
  sc_enroll->add_option("--out", enr_out, "gallery file")->required();

  // identify
  auto* sc_identify = app.add_subcommand("identify", "closed-gallery identification");
  std::string id_beats, id_ckpt, id_gallery, id_out;
  sc_identify->add_option("--beats", id_beats, "query beats CSV")->required();
  sc_identify->add_option("--ckpt", id_ckpt, "model checkpoint")->required();
  sc_identify->add_option("--gallery", id_gallery, "gallery file")->required();
  sc_identify->add_option("--out", id_out, "per-query results CSV");

  // verify
  auto* sc_verify = app.add_subcommand("verify", "verification trials (EER/AUC)");
  std::string ver_beats, ver_ckpt, ver_gallery, ver_out;
  sc_verify->add_option("--beats", ver_beats, "query beats CSV")->required();
  sc_verify->add_option("--ckpt", ver_ckpt, "model checkpoint")->required();
  sc_verify->add_option("--gallery", ver_gallery, "gallery file")->required();
  sc_verify->add_option("--out", ver_out, "trial scores CSV");

  // eval-closed / eval-open
  auto* sc_closed = app.add_subcommand("eval-closed", "closed-set protocol");
  std::string ec_data, ec_beats, ec_out;
  sc_closed->add_option("--data", ec_data, "record directory");
  sc_closed->add_option("--beats", ec_beats, "beats CSV (skips segmentation)");
  sc_closed->add_option("--out", ec_out, "report directory")->required();

  auto* sc_open = app.add_subcommand("eval-open", "open-set protocol");
  std::string eo_data, eo_beats, eo_out;
  sc_open->add_option("--data", eo_data, "record directory");
  sc_open->add_option("--beats", eo_beats, "beats CSV (skips segmentation)");
  sc_open->add_option("--out", eo_out, "report directory")->required();

  // export-plots
  auto* sc_plots = app.add_subcommand("export-plots", "render ROC/CMC curves as SVG");
  std::string pl_report, pl_out;
  sc_plots->add_option("--report", pl_report, "report directory (roc.csv, cmc.csv)")
      ->required();
  sc_plots->add_option("--out", pl_out, "output directory (defaults to report dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  KeyValueConfig kv = ctx.kv();
  PipelineConfig cfg = PipelineConfig::from(kv);
  uint64_t cfg_hash = PipelineConfig::hash(kv);
  for (const std::string& key : kv.unused_keys())
    std::cerr << "warning: unknown config key `" << key << "` ignored\n";

  if (sc_synth->parsed()) {
    synth::SynthConfig sc;
    sc.sample_rate_hz = cfg.synth.sample_rate_hz;
    sc.noise_mv = cfg.synth.noise_mv;
    sc.baseline_mv = cfg.synth.baseline_mv;
    sc.rr_jitter_s = cfg.synth.rr_jitter_s;
    sc.distance_floor = cfg.synth.distance_floor;
    auto ds = synth::make_dataset(cfg.synth.subjects, cfg.synth.sessions,
                                  cfg.synth.duration_s, cfg.seed, sc);
    write_synth_dataset(synth_out, ds);
    append_manifest(synth_out, "synth", cfg_hash, cfg.seed);
    size_t beats = 0;
    for (auto& r : ds.records) beats += r.r_indices.size();
    std::printf("wrote %zu records (%zu planted beats) to %s\n", ds.records.size(),
                beats, synth_out.c_str());
    return 0;
  }

  if (sc_ingest->parsed()) {
    auto records = load_records(ingest_data, cfg);
    fs::create_directories(ingest_out);
    std::string manifest = "file,subject_id,session_id,sampling_rate\n";
    for (const EcgRecord& rec : records) {
      std::string name = rec.subject_id + "_" + rec.session_id + ".csv";
      std::string body;
      char buf[40];
      for (double v : rec.samples) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", v);
        body += buf;
      }
      std::ofstream f(fs::path(ingest_out) / name, std::ios::trunc);
      if (!f) throw IoError("cannot write " + (fs::path(ingest_out) / name).string());
      f << body;
      std::snprintf(buf, sizeof(buf), "%.17g", rec.sampling_rate);
      manifest += name + "," + rec.subject_id + "," + rec.session_id + "," + buf + "\n";
    }
    std::ofstream mf(fs::path(ingest_out) / "dataset.csv", std::ios::trunc);
    mf << manifest;
    append_manifest(ingest_out, "ingest", cfg_hash, cfg.seed);
    std::printf("ingested %zu records into %s\n", records.size(), ingest_out.c_str());
    return 0;
  }

  if (sc_segment->parsed()) {
    auto records = load_records(seg_data, cfg);
    SegmentedDataset seg = segment_records(records, cfg);
    save_beats_csv(seg_out, seg.beats);
    append_manifest(fs::path(seg_out).parent_path().string(), "segment", cfg_hash,
                    cfg.seed);
    std::printf("segmented %d records: %zu beats kept, %d skipped, %d too short\n",
                seg.records, seg.beats.size(), seg.skipped_beats, seg.short_records);
    return 0;
  }

  if (sc_train->parsed()) {
    auto beats = load_beats_csv(train_beats);
    TrainResult res = train(beats, cfg.train, cfg.model, train_out);
    write_history_csv((fs::path(train_out) / "loss_history.csv").string(), res.history);
    append_manifest(train_out, "train", cfg_hash, cfg.seed);
    if (!res.history.empty())
      std::printf("trained %d epochs: first mean loss %.6f, final %.6f\n",
                  int(res.history.size()), res.history.front().mean_loss,
                  res.history.back().mean_loss);
    else
      std::printf("trained 0 epochs: checkpoint equals initialization\n");
    return 0;
  }

  if (sc_enroll->parsed()) {
    auto beats = load_beats_csv(enr_beats);
    HpafModel model = HpafModel::load(enr_ckpt, cfg.model);
    Gallery g = build_gallery(embed_beats(model, beats), cfg.prototypes, cfg.seed,
                              cfg.distance);
    save_gallery(enr_out, g);
    append_manifest(fs::path(enr_out).parent_path().string(), "enroll", cfg_hash,
                    cfg.seed);
    std::printf("enrolled %zu subjects (K=%d) into %s\n", g.prototypes.size(),
                cfg.prototypes, enr_out.c_str());
    return 0;
  }

  if (sc_identify->parsed() || sc_verify->parsed()) {
    bool identify_mode = sc_identify->parsed();
    const std::string& beats_path = identify_mode ? id_beats : ver_beats;
    const std::string& ckpt = identify_mode ? id_ckpt : ver_ckpt;
    const std::string& gallery_path = identify_mode ? id_gallery : ver_gallery;
    const std::string& out_path = identify_mode ? id_out : ver_out;

    auto beats = load_beats_csv(beats_path);
    HpafModel model = HpafModel::load(ckpt, cfg.model);
    Gallery gallery = load_gallery(gallery_path);
    EmbeddingsBySubject queries = embed_beats(model, beats);

    ScoreSet scores;
    int correct = 0, total = 0;
    std::string rows = identify_mode ? "true_subject,predicted,score\n"
                                     : "trial,true_subject,gallery_subject,score\n";
    char buf[40];
    for (const auto& [subject, embs] : queries) {
      for (const Embedding& q : embs) {
        MatchResult m = match(q, gallery);
        ++total;
        if (m.subject_id == subject) ++correct;
        if (identify_mode) {
          std::snprintf(buf, sizeof(buf), "%.17g", m.best_score);
          rows += subject + "," + m.subject_id + "," + buf + "\n";
        }
        for (const auto& [id, score] : m.subject_scores) {
          bool genuine = id == subject;
          (genuine ? scores.genuine : scores.impostor).push_back(score);
          if (!identify_mode) {
            std::snprintf(buf, sizeof(buf), "%.17g", score);
            rows += std::string(genuine ? "genuine" : "impostor") + "," + subject + "," +
                    id + "," + buf + "\n";
          }
        }
      }
    }
    if (!out_path.empty()) {
      std::ofstream f(out_path, std::ios::trunc);
      if (!f) throw IoError("cannot write " + out_path);
      f << rows;
      append_manifest(fs::path(out_path).parent_path().string(),
                      identify_mode ? "identify" : "verify", cfg_hash, cfg.seed);
    }
    if (identify_mode) {
      std::printf("top1_acc %.6f over %d queries\n",
                  total ? double(correct) / double(total) : 0.0, total);
    } else {
      std::printf("eer %.6f  auc %.6f  (%zu genuine, %zu impostor trials)\n",
                  eer(scores), auc(scores), scores.genuine.size(),
                  scores.impostor.size());
    }
    return 0;
  }

  if (sc_closed->parsed() || sc_open->parsed()) {
    bool closed = sc_closed->parsed();
    const std::string& data_dir = closed ? ec_data : eo_data;
    const std::string& beats_path = closed ? ec_beats : eo_beats;
    const std::string& out_dir = closed ? ec_out : eo_out;
    auto beats = beats_from_args(beats_path, data_dir, cfg, true);

    ProtocolOptions opt;
    opt.train = cfg.train;
    opt.model = cfg.model;
    opt.prototypes = cfg.prototypes;
    opt.distance = cfg.distance;
    opt.seed = cfg.seed;
    ProtocolResult res = closed ? run_closed_set(beats, opt) : run_open_set(beats, opt);
    write_report_csv(out_dir, res.report);
    write_history_csv((fs::path(out_dir) / "loss_history.csv").string(), res.history);
    append_manifest(out_dir, closed ? "eval-closed" : "eval-open", cfg_hash, cfg.seed);
    print_report(res.report);
    return 0;
  }

  if (sc_plots->parsed()) {
    std::string out_dir = pl_out.empty() ? pl_report : pl_out;
    fs::create_directories(out_dir);
    auto roc_rows = read_csv((fs::path(pl_report) / "roc.csv").string());
    std::vector<std::pair<double, double>> roc_pts;
    for (size_t i = 1; i < roc_rows.size(); ++i)
      if (roc_rows[i].size() >= 3)
        roc_pts.emplace_back(std::stod(roc_rows[i][1]), std::stod(roc_rows[i][2]));
    write_svg_chart((fs::path(out_dir) / "roc.svg").string(), "ROC",
                    "false acceptance rate", "true acceptance rate", roc_pts);
    auto cmc_rows = read_csv((fs::path(pl_report) / "cmc.csv").string());
    std::vector<std::pair<double, double>> cmc_pts;
    for (size_t i = 1; i < cmc_rows.size(); ++i)
      if (cmc_rows[i].size() >= 2)
        cmc_pts.emplace_back(std::stod(cmc_rows[i][0]), std::stod(cmc_rows[i][1]));
    write_svg_chart((fs::path(out_dir) / "cmc.svg").string(), "CMC", "rank",
                    "identification rate", cmc_pts);
    append_manifest(out_dir, "export-plots", cfg_hash, cfg.seed);
    std::printf("wrote roc.svg and cmc.svg to %s\n", out_dir.c_str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
