// Command-line entry point: preprocess, train, ablate, report.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "wbmm/ablation.hpp"
#include "wbmm/corpus.hpp"
#include "wbmm/experiment.hpp"
#include "wbmm/log.hpp"
#include "wbmm/matchmismatch.hpp"
#include "wbmm/stats.hpp"

namespace fs = std::filesystem;
using namespace wbmm;
using experiment::json;

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string right(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }
std::string left(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

std::string trial_name(const std::string& subject, int trial) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "trial_%02d", trial);
  return subject + "_" + buf;
}

json report_json(const eeg::PreprocReport& r, const std::vector<std::string>& warnings, std::size_t records) {
  json stats = json::array();
  for (const auto& s : r.channel_stats) stats.push_back({{"variance", s.variance}, {"kurtosis", s.kurtosis}});
  std::vector<std::string> all = r.warnings;
  all.insert(all.end(), warnings.begin(), warnings.end());
  return {{"subject", r.subject_id}, {"trial", r.trial_id},   {"bad_channels", r.bad_channels},
          {"stages", r.stages},      {"warnings", all},       {"records", records},
          {"channel_stats", stats}};
}

// ---- preprocess ----------------------------------------------------------

struct PreprocessArgs {
  std::string synthetic;
  std::string dataset;
  std::string out;
  std::string export_raw;
  bool force{false};
};

int cmd_preprocess(const PreprocessArgs& a) {
  std::string dataset = a.dataset;
  if (a.synthetic.empty() && dataset.empty()) {
    if (const char* env = std::getenv("WBMM_DATASET")) dataset = env;
  }
  if (a.synthetic.empty() == dataset.empty()) {
    throw ValidationError("give exactly one of --synthetic SPEC or --dataset DIR (or set WBMM_DATASET)");
  }
  if (!a.export_raw.empty() && a.synthetic.empty()) throw ValidationError("--export-raw needs --synthetic");

  json config;
  corpus::SyntheticSpec spec;
  if (!a.synthetic.empty()) {
    spec = experiment::parse_synthetic_spec(experiment::read_json_file(a.synthetic));
    config = {{"source", "synthetic"}, {"spec", experiment::to_json(spec)}};
  } else {
    if (!fs::is_directory(dataset)) throw DataError("dataset root " + dataset + " is not a directory");
    config = {{"source", "dataset"}, {"dataset", fs::absolute(dataset).generic_string()}};
  }
  const corpus::SentencePipelineConfig pipeline{};
  config["eeg"] = {{"band_hz", {pipeline.eeg.filter.low_hz, pipeline.eeg.filter.high_hz}},
                   {"filter_order", pipeline.eeg.filter.order},
                   {"target_rate_hz", eeg::kTargetRateHz},
                   {"mastoids", {pipeline.eeg.mastoids.first, pipeline.eeg.mastoids.second}}};
  config["mel"] = {{"n_mels", pipeline.mel.n_mels},     {"win_s", pipeline.mel.win_s},
                   {"hop_s", pipeline.mel.hop_s},       {"n_fft", pipeline.mel.n_fft},
                   {"fmax_hz", pipeline.mel.fmax_hz},         {"normalize", pipeline.mel.normalize}};

  const fs::path out = a.out;
  experiment::prepare_output_dir(out, a.force);
  experiment::OutputLock lock(out);
  experiment::RunManifest manifest(out / "manifest.json", "preprocess", config);
  manifest.write();

  json errors = json::array();
  std::size_t n_records = 0, n_trials = 0;
  fs::create_directories(out / "reports");
  auto emit = [&](const corpus::RawTrial& trial) {
    const corpus::TrialRecords tr = corpus::build_sentence_records(trial, pipeline);
    for (const auto& r : tr.records) corpus::write_record(corpus::record_path(out, r), r);
    experiment::write_json_atomic(out / "reports" / (trial_name(trial.subject_id, trial.trial_id) + ".json"),
                                  report_json(tr.report, tr.warnings, tr.records.size()));
    for (const auto& w : tr.warnings) log::warn(trial.subject_id + " trial " + std::to_string(trial.trial_id) + ": " + w);
    n_records += tr.records.size();
    ++n_trials;
  };

  if (!a.synthetic.empty()) {
    for (int s = 0; s < spec.n_subjects; ++s) {
      for (int t = 0; t < spec.n_trials; ++t) {
        const corpus::RawTrial trial = corpus::synthesize_trial(spec, s, t);
        if (!a.export_raw.empty()) corpus::write_dataset(a.export_raw, {trial});
        emit(trial);
      }
    }
  } else {
    const auto refs = corpus::list_trials(dataset);
    if (refs.empty()) throw DataError("no trials found under " + dataset);
    for (const auto& ref : refs) {
      try {
        emit(corpus::load_trial(dataset, ref));
      } catch (const std::exception& e) {
        log::error(ref.subject_id + " trial " + std::to_string(ref.trial_id) + ": " + e.what());
        errors.push_back({{"subject", ref.subject_id}, {"trial", ref.trial_id}, {"error", e.what()}});
      }
    }
  }
  if (n_records == 0) throw DataError("no sentence records were produced");

  const auto records = corpus::load_records(out);
  std::set<std::string> subjects;
  for (const auto& r : records) subjects.insert(r.subject_id);
  std::vector<std::string> sorted(subjects.begin(), subjects.end());
  std::sort(sorted.begin(), sorted.end(), corpus::natural_less);
  const std::string fp = corpus::fingerprint(records);
  experiment::write_corpus_summary(out, {fp, records.size(), sorted, config.at("source").get<std::string>()});
  manifest.set_fingerprint(fp);
  manifest.add_output(out / "records");
  manifest.add_output(out / "reports");
  manifest.add_output(out / "corpus.json");
  if (!errors.empty()) {
    experiment::write_json_atomic(out / "errors.json", errors);
    manifest.add_output(out / "errors.json");
  }
  manifest.finish(errors.empty() ? "finished" : "partial");

  std::cout << "preprocessed " << n_trials << " trials into " << records.size() << " sentence records ("
            << sorted.size() << " subjects)\ncorpus fingerprint " << fp << "\n";
  if (!errors.empty()) {
    std::cout << errors.size() << " trial(s) failed:\n";
    for (const auto& e : errors) {
      std::cout << "  " << e["subject"].get<std::string>() << " trial " << e["trial"].get<int>() << ": "
                << e["error"].get<std::string>() << "\n";
    }
    return experiment::kData;
  }
  return experiment::kOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  std::string corpus;
  std::optional<std::uint64_t> seed;
  bool force{false};
};

struct LoadedCorpus {
  std::vector<corpus::SentenceRecord> records;
  std::string fingerprint;
  std::vector<std::string> subjects;
};

LoadedCorpus load_corpus(const fs::path& dir) {
  const auto summary = experiment::read_corpus_summary(dir);
  LoadedCorpus c;
  c.records = corpus::load_records(dir);
  if (c.records.empty()) throw DataError("corpus " + dir.string() + " holds no records");
  c.fingerprint = corpus::fingerprint(c.records);
  if (c.fingerprint != summary.fingerprint) {
    throw DataError("corpus " + dir.string() + " changed since preprocessing (fingerprint " + c.fingerprint +
                    ", recorded " + summary.fingerprint + ")");
  }
  c.subjects = summary.subjects;
  return c;
}

int cmd_train(const TrainArgs& a) {
  json raw = experiment::read_json_file(a.config);
  if (!a.out.empty()) raw["out"] = a.out;
  if (!a.corpus.empty()) raw["corpus"] = a.corpus;
  if (a.seed) raw["seed"] = *a.seed;
  experiment::TrainRequest req = experiment::parse_train_config(raw);
  if (req.corpus.empty()) throw ValidationError("train config needs 'corpus' (or --corpus)");
  if (req.out.empty()) throw ValidationError("train config needs 'out' (or --out)");

  const LoadedCorpus data = load_corpus(req.corpus);
  experiment::prepare_output_dir(req.out, a.force);
  experiment::OutputLock lock(req.out);
  experiment::RunManifest manifest(req.out / "manifest.json", "train", experiment::to_json(req));
  manifest.set_fingerprint(data.fingerprint);
  manifest.set_seeds({req.train.seed});
  manifest.write();

  if (req.checkpoints) req.train.checkpoint_dir = req.out / "checkpoints";
  const auto splits = mm::make_folds(data.subjects, req.n_folds);
  const fs::path results = req.out / "results.jsonl";
  std::vector<mm::FoldResult> folds;
  for (const auto& split : splits) {
    if (!req.folds.empty() && std::find(req.folds.begin(), req.folds.end(), split.fold_id) == req.folds.end()) continue;
    log::info("fold " + std::to_string(split.fold_id) + ": " + std::to_string(split.train_subjects.size()) +
              " training subjects, " + std::to_string(split.test_subjects.size()) + " test subjects");
    mm::FoldResult r;
    if (req.model == "proposed") {
      r = mm::run_fold(req.train, split, data.records);
    } else if (req.model == "baseline_sentence") {
      r = mm::baseline_sentence(req.train, split, data.records);
    } else {
      r = mm::baseline_fixed_window(req.train, req.window, split, data.records);
    }
    experiment::append_jsonl(results, experiment::fold_record(req, r, data.fingerprint));
    folds.push_back(std::move(r));
  }

  double sum = 0.0;
  json per_fold = json::array();
  for (const auto& f : folds) {
    sum += f.final_accuracy;
    per_fold.push_back({{"fold", f.fold_id}, {"final_accuracy", f.final_accuracy}});
  }
  const double average = sum / static_cast<double>(folds.size());
  experiment::write_json_atomic(req.out / "summary.json", {{"model", req.model},
                                                           {"seed", req.train.seed},
                                                           {"corpus_fingerprint", data.fingerprint},
                                                           {"folds", per_fold},
                                                           {"average_accuracy", average}});
  manifest.add_output(results);
  manifest.add_output(req.out / "summary.json");
  if (req.checkpoints) manifest.add_output(req.out / "checkpoints");
  manifest.finish("finished");

  std::cout << req.model << " (" << encoder::to_string(req.train.similarity) << ", "
            << mm::to_string(req.train.strategy) << ", boundaries " << req.train.boundary.label() << "), seed "
            << req.train.seed << "\n";
  std::string header = left("", 10), row = left("Acc (%)", 10);
  for (const auto& f : folds) {
    header += right("Fold " + std::to_string(f.fold_id), 9);
    row += right(fixed(f.final_accuracy), 9);
  }
  std::cout << header << right("Average", 9) << "\n" << row << right(fixed(average), 9) << "\n";
  return experiment::kOk;
}

// ---- ablate --------------------------------------------------------------

struct AblateArgs {
  std::string plan;
  std::string out;
  std::string corpus;
  bool force{false};
};

int cmd_ablate(const AblateArgs& a) {
  json raw = experiment::read_json_file(a.plan);
  if (!a.out.empty()) raw["out"] = a.out;
  if (!a.corpus.empty()) raw["corpus"] = a.corpus;
  const experiment::AblateRequest req = experiment::parse_ablation_plan(raw);
  if (req.corpus.empty()) throw ValidationError("ablation plan needs 'corpus' (or --corpus)");
  if (req.out.empty()) throw ValidationError("ablation plan needs 'out' (or --out)");

  const LoadedCorpus data = load_corpus(req.corpus);
  experiment::prepare_output_dir(req.out, a.force);
  experiment::OutputLock lock(req.out);
  experiment::RunManifest manifest(req.out / "manifest.json", "ablate", experiment::to_json(req));
  manifest.set_fingerprint(data.fingerprint);
  manifest.set_seeds(req.plan.seeds);
  manifest.write();

  const fs::path rows_path = req.out / "ablation.jsonl";
  const auto rows = ablation::run_ablation(req.plan, data.records, [&](const ablation::AblationRow& row) {
    experiment::append_jsonl(rows_path, experiment::ablation_record(row, req.plan.base, data.fingerprint));
  });
  const auto agg = ablation::aggregate(rows);
  const std::string table = ablation::render_table(agg);
  experiment::write_text_atomic(req.out / "ablation_table.txt", table);
  ablation::write_trend_svg(req.out / "ablation.svg", agg, "accuracy by boundary condition");
  manifest.add_output(rows_path);
  manifest.add_output(req.out / "ablation_table.txt");
  manifest.add_output(req.out / "ablation.svg");

  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  manifest.finish(failed ? "partial" : "finished");
  std::cout << table;
  if (failed) {
    std::cout << failed << " run(s) failed; see ablation.jsonl\n";
    return experiment::kRuntime;
  }
  return experiment::kOk;
}

// ---- report --------------------------------------------------------------

struct TrainRun {
  std::string name;
  std::string label;
  std::vector<mm::FoldResult> folds;
};

struct AblationRun {
  std::string name;
  std::vector<ablation::AblationRow> rows;
};

void write_epoch_plot(const fs::path& path, const std::vector<TrainRun>& runs) {
  const double w = 640, h = 400, l = 70, r = 180, t = 40, b = 60;
  const double pw = w - l - r, ph = h - t - b;
  std::size_t epochs = 1;
  for (const auto& run : runs) {
    for (const auto& f : run.folds) epochs = std::max(epochs, f.test_accuracy.size());
  }
  auto x_of = [&](double e) { return l + pw * (epochs > 1 ? (e - 1.0) / static_cast<double>(epochs - 1) : 0.5); };
  auto y_of = [&](double v) { return t + ph * (1.0 - v / 100.0); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << l + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">test accuracy by epoch (mean over folds)</text>\n";
  for (int v = 0; v <= 100; v += 10) {
    os << "<line x1=\"" << l << "\" y1=\"" << y_of(v) << "\" x2=\"" << l + pw << "\" y2=\"" << y_of(v)
       << "\" stroke=\"#ddd\"/>\n<text x=\"" << l - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << v
       << "</text>\n";
  }
  for (std::size_t e = 1; e <= epochs; ++e) {
    os << "<text x=\"" << x_of(static_cast<double>(e)) << "\" y=\"" << t + ph + 16 << "\" text-anchor=\"middle\">"
       << e << "</text>\n";
  }
  os << "<text x=\"" << l + pw / 2 << "\" y=\"" << h - 16 << "\" text-anchor=\"middle\">epoch</text>\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::string points;
    for (std::size_t e = 0; e < epochs; ++e) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& f : runs[i].folds) {
        if (e < f.test_accuracy.size()) {
          sum += f.test_accuracy[e];
          ++n;
        }
      }
      if (n) points += fixed(x_of(static_cast<double>(e + 1)), 1) + "," + fixed(y_of(sum / n), 1) + " ";
    }
    const char* c = colors[i % 6];
    os << "<polyline points=\"" << points << "\" fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << l + pw + 10 << "\" y=\"" << t + 16 * (i + 1) << "\" fill=\"" << c << "\">" << runs[i].name
       << "</text>\n";
  }
  os << "</svg>\n";
  experiment::write_text_atomic(path, os.str());
}

std::string significance_section(const std::vector<TrainRun>& runs) {
  std::ostringstream os;
  os << "\nPaired comparison (Wilcoxon signed-rank over per-subject accuracies, matched by fold and subject)\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = i + 1; j < runs.size(); ++j) {
      std::map<std::pair<int, std::string>, double> left_acc;
      for (const auto& f : runs[i].folds) {
        for (const auto& [s, acc] : f.subject_accuracy) left_acc[{f.fold_id, s}] = acc;
      }
      std::vector<double> a, b;
      for (const auto& f : runs[j].folds) {
        for (const auto& [s, acc] : f.subject_accuracy) {
          if (auto it = left_acc.find({f.fold_id, s}); it != left_acc.end()) {
            a.push_back(it->second);
            b.push_back(acc);
          }
        }
      }
      os << "  " << runs[i].name << " vs " << runs[j].name << ": ";
      if (a.size() < 5) {
        os << "not tested (" << a.size() << " paired samples, need 5)\n";
        continue;
      }
      try {
        const auto r = stats::wilcoxon_signed_rank(a, b);
        char p[32];
        std::snprintf(p, sizeof p, "%.3g", r.p_value);
        os << "W+ = " << fixed(r.statistic, 1) << ", n = " << r.n << ", p = " << p
           << (r.exact ? " (exact)" : " (normal approx.)") << "\n";
      } catch (const ValidationError& e) {
        os << "not tested (" << e.what() << ")\n";
      }
    }
  }
  return os.str();
}

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
  bool force{false};
};

int cmd_report(const ReportArgs& a) {
  std::vector<TrainRun> trains;
  std::vector<AblationRun> ablations;
  std::map<std::string, std::string> fingerprints;  // fingerprint -> first run naming it
  for (const auto& dir_str : a.runs) {
    const fs::path dir = dir_str;
    const json manifest = experiment::read_json_file(dir / "manifest.json");
    const std::string command = manifest.value("command", "");
    const std::string fp = manifest.value("corpus_fingerprint", "");
    const std::string name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    if (!fingerprints.empty() && !fingerprints.count(fp)) {
      const auto& [other_fp, other_run] = *fingerprints.begin();
      throw ValidationError("runs use different corpora: " + other_run + " has fingerprint " + other_fp + ", " + name +
                            " has fingerprint " + fp);
    }
    fingerprints.emplace(fp, name);
    if (command == "train") {
      TrainRun run;
      run.name = name;
      const json& cfg = manifest.at("config");
      run.label = cfg.value("model", "") + "/" + cfg.value("similarity", "") + "/" + cfg.value("strategy", "") + "/" +
                  cfg.value("boundary", "");
      for (const auto& rec : experiment::read_jsonl(dir / "results.jsonl")) {
        run.folds.push_back(experiment::fold_result_from_json(rec));
      }
      if (run.folds.empty()) throw DataError(name + " has no fold results");
      trains.push_back(std::move(run));
    } else if (command == "ablate") {
      AblationRun run;
      run.name = name;
      for (const auto& rec : experiment::read_jsonl(dir / "ablation.jsonl")) {
        run.rows.push_back(experiment::ablation_row_from_json(rec));
      }
      ablations.push_back(std::move(run));
    } else {
      throw ValidationError(dir.string() + " is not a train or ablate run (command '" + command + "')");
    }
  }

  std::ostringstream os;
  if (!trains.empty()) {
    os << "Accuracy (%) per fold\n";
    std::size_t name_w = 10;
    for (const auto& r : trains) name_w = std::max(name_w, r.name.size() + 2);
    std::set<int> fold_ids;
    for (const auto& r : trains) {
      for (const auto& f : r.folds) fold_ids.insert(f.fold_id);
    }
    os << left("", 10);
    for (const auto& r : trains) os << right(r.name, name_w);
    os << "\n";
    for (int id : fold_ids) {
      os << left("Fold " + std::to_string(id), 10);
      for (const auto& r : trains) {
        auto it = std::find_if(r.folds.begin(), r.folds.end(), [&](const auto& f) { return f.fold_id == id; });
        os << right(it == r.folds.end() ? "-" : fixed(it->final_accuracy), name_w);
      }
      os << "\n";
    }
    os << left("Average", 10);
    for (const auto& r : trains) {
      double s = 0.0;
      for (const auto& f : r.folds) s += f.final_accuracy;
      os << right(fixed(s / static_cast<double>(r.folds.size())), name_w);
    }
    os << "\n\nRuns\n";
    for (const auto& r : trains) os << "  " << r.name << ": " << r.label << "\n";
    if (trains.size() > 1) os << significance_section(trains);
  }
  for (const auto& run : ablations) {
    os << "\nAblation " << run.name << "\n" << ablation::render_table(ablation::aggregate(run.rows));
  }
  os << "\nCorpus fingerprint " << (fingerprints.empty() ? "-" : fingerprints.begin()->first) << "\n";
  std::cout << os.str();

  if (!a.out.empty()) {
    experiment::prepare_output_dir(a.out, a.force);
    experiment::write_text_atomic(fs::path(a.out) / "report.txt", os.str());
    if (!trains.empty()) write_epoch_plot(fs::path(a.out) / "accuracy_by_epoch.svg", trains);
    for (const auto& run : ablations) {
      ablation::write_trend_svg(fs::path(a.out) / ("ablation_" + run.name + ".svg"), ablation::aggregate(run.rows),
                                "accuracy by boundary condition (" + run.name + ")");
    }
  }
  return experiment::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Word-boundary match-mismatch modelling of EEG and speech"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "debug, info, warn, error or silent")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "silent"}));

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Build sentence records from a dataset or a synthetic spec");
  p->add_option("--synthetic", pre.synthetic, "Synthetic corpus spec (JSON)");
  p->add_option("--dataset", pre.dataset, "Dataset root (default: $WBMM_DATASET)");
  p->add_option("--out", pre.out, "Output corpus directory")->required();
  p->add_option("--export-raw", pre.export_raw, "Also write the synthetic raw dataset here");
  p->add_flag("--force", pre.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  std::uint64_t seed = 0;
  auto* t = app.add_subcommand("train", "Cross-validated training and evaluation");
  t->add_option("--config", tr.config, "Training config (JSON)")->required();
  t->add_option("--out", tr.out, "Output directory (overrides config)");
  t->add_option("--corpus", tr.corpus, "Corpus directory (overrides config)");
  auto* seed_opt = t->add_option("--seed", seed, "Seed (overrides config)");
  t->add_flag("--force", tr.force, "Overwrite a non-empty output directory");

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Word-boundary ablation sweep");
  b->add_option("--plan", ab.plan, "Ablation plan (JSON)")->required();
  b->add_option("--out", ab.out, "Output directory (overrides plan)");
  b->add_option("--corpus", ab.corpus, "Corpus directory (overrides plan)");
  b->add_flag("--force", ab.force, "Overwrite a non-empty output directory");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Tables, significance tests and plots from finished runs");
  r->add_option("runs", rep.runs, "Run directories")->required();
  r->add_option("--out", rep.out, "Directory for report.txt and plots");
  r->add_flag("--force", rep.force, "Overwrite a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? experiment::kOk : experiment::kValidation;
  }

  const std::map<std::string, log::Level> levels = {{"debug", log::Level::debug},
                                                    {"info", log::Level::info},
                                                    {"warn", log::Level::warning},
                                                    {"error", log::Level::error},
                                                    {"silent", log::Level::silent}};
  log::threshold().store(levels.at(level));

  try {
    if (p->parsed()) return cmd_preprocess(pre);
    if (t->parsed()) {
      if (seed_opt->count()) tr.seed = seed;
      return cmd_train(tr);
    }
    if (b->parsed()) return cmd_ablate(ab);
    if (r->parsed()) return cmd_report(rep);
  } catch (const experiment::OutputRefused& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return experiment::kRefused;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return experiment::kValidation;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return experiment::kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return experiment::kRuntime;
  }
  return experiment::kRuntime;
}
