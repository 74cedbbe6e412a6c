#include "wbmm/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

namespace wbmm::experiment {

namespace {

namespace fs = std::filesystem;

// Type-checked access to a JSON object with a closed key set.
class Fields {
 public:
  Fields(const json& j, std::string where, std::vector<std::string> allowed, bool versioned)
      : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ValidationError(where_ + " must be a JSON object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items()) {
      if (k == "schema_version" && versioned) continue;
      if (!keys.count(k)) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        throw ValidationError(where_ + ": unknown key '" + k + "' (allowed: " + list + ")");
      }
    }
    if (versioned) {
      if (!j.contains("schema_version")) throw ValidationError(where_ + ": missing schema_version");
      if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != kSchemaVersion) {
        throw ValidationError(where_ + ": unsupported schema_version (expected " + std::to_string(kSchemaVersion) +
                              ")");
      }
    }
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  const json& raw(const std::string& k) const { return j_.at(k); }

  int integer(const std::string& k, int fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_number_integer()) fail(k, "an integer");
    return j_.at(k).get<int>();
  }
  std::uint64_t unsigned_integer(const std::string& k, std::uint64_t fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_number_unsigned()) fail(k, "a non-negative integer");
    return j_.at(k).get<std::uint64_t>();
  }
  double number(const std::string& k, double fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_number()) fail(k, "a number");
    return j_.at(k).get<double>();
  }
  std::string string(const std::string& k, const std::string& fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_string()) fail(k, "a string");
    return j_.at(k).get<std::string>();
  }
  bool boolean(const std::string& k, bool fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_boolean()) fail(k, "a boolean");
    return j_.at(k).get<bool>();
  }
  std::vector<int> int_list(const std::string& k) const {
    std::vector<int> out;
    if (!has(k)) return out;
    if (!j_.at(k).is_array()) fail(k, "an array of integers");
    for (const auto& v : j_.at(k)) {
      if (!v.is_number_integer()) fail(k, "an array of integers");
      out.push_back(v.get<int>());
    }
    return out;
  }
  std::pair<int, int> int_pair(const std::string& k, std::pair<int, int> fallback) const {
    if (!has(k)) return fallback;
    const json& v = j_.at(k);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
      fail(k, "a [min, max] integer pair");
    }
    return {v[0].get<int>(), v[1].get<int>()};
  }

  [[noreturn]] void fail(const std::string& k, const std::string& what) const {
    throw ValidationError(where_ + ": '" + k + "' must be " + what);
  }

 private:
  const json& j_;
  std::string where_;
};

const std::vector<std::string> kTrainKeys = {"batch_size", "learning_rate", "weight_decay", "adam_beta1",
                                             "adam_beta2", "adam_eps", "epochs", "seed", "model", "similarity",
                                             "strategy", "boundary", "dropout"};

mm::TrainConfig read_train_fields(const Fields& f, mm::TrainConfig c) {
  c.batch_size = f.integer("batch_size", c.batch_size);
  c.learning_rate = f.number("learning_rate", c.learning_rate);
  c.weight_decay = f.number("weight_decay", c.weight_decay);
  c.adam_beta1 = f.number("adam_beta1", c.adam_beta1);
  c.adam_beta2 = f.number("adam_beta2", c.adam_beta2);
  c.adam_eps = f.number("adam_eps", c.adam_eps);
  c.epochs = f.integer("epochs", c.epochs);
  c.seed = f.unsigned_integer("seed", c.seed);
  c.similarity = encoder::similarity_from_string(f.string("similarity", encoder::to_string(c.similarity)));
  c.strategy = mm::strategy_from_string(f.string("strategy", mm::to_string(c.strategy)));
  c.boundary = mm::boundary_from_string(f.string("boundary", c.boundary.label()));
  c.dropout = f.number("dropout", c.dropout);
  return c;
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

json fold_json(const mm::FoldResult& r) {
  return {{"fold", r.fold_id},
          {"train_loss", r.train_loss},
          {"test_accuracy", r.test_accuracy},
          {"final_accuracy", r.final_accuracy},
          {"subject_accuracy", r.subject_accuracy},
          {"train_pairs", r.train_pairs},
          {"test_pairs", r.test_pairs}};
}

}  // namespace

json to_json(const mm::TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"model", mm::to_string(c.model)},
          {"similarity", encoder::to_string(c.similarity)},
          {"strategy", mm::to_string(c.strategy)},
          {"boundary", c.boundary.label()},
          {"dropout", c.dropout}};
}

mm::TrainConfig train_config_from_json(const json& j) {
  const Fields f(j, "train config", kTrainKeys, false);
  mm::TrainConfig c = read_train_fields(f, {});
  c.model = mm::model_kind_from_string(f.string("model", "proposed"));
  return c;
}

TrainRequest parse_train_config(const json& j) {
  const std::vector<std::string> keys =
      with({"corpus", "out", "n_folds", "folds", "window_s", "window_test_step_s", "window_train_overlap",
            "checkpoints"},
           kTrainKeys);
  const Fields f(j, "train config", keys, true);
  TrainRequest r;
  r.corpus = f.string("corpus", "");
  r.out = f.string("out", "");
  r.model = f.string("model", r.model);
  if (r.model != "proposed" && r.model != "baseline_sentence" && r.model != "baseline_window") {
    throw ValidationError("unknown model '" + r.model + "' (allowed: proposed, baseline_sentence, baseline_window)");
  }
  r.train = read_train_fields(f, {});
  r.train.model = r.model == "proposed" ? mm::ModelKind::proposed : mm::ModelKind::baseline;
  r.n_folds = f.integer("n_folds", r.n_folds);
  r.folds = f.int_list("folds");
  r.window.window_s = f.number("window_s", r.window.window_s);
  r.window.test_step_s = f.number("window_test_step_s", r.window.test_step_s);
  r.window.train_overlap = f.number("window_train_overlap", r.window.train_overlap);
  r.checkpoints = f.boolean("checkpoints", r.checkpoints);
  mm::validate(r.train);
  if (r.n_folds < 2) throw ValidationError("n_folds must be at least 2");
  for (int id : r.folds) {
    if (id < 1 || id > r.n_folds) throw ValidationError("fold id " + std::to_string(id) + " out of range");
  }
  return r;
}

json to_json(const TrainRequest& r) {
  json j = to_json(r.train);
  j["schema_version"] = kSchemaVersion;
  j["corpus"] = r.corpus.generic_string();
  j["out"] = r.out.generic_string();
  j["model"] = r.model;
  j["n_folds"] = r.n_folds;
  j["folds"] = r.folds;
  j["window_s"] = r.window.window_s;
  j["window_test_step_s"] = r.window.test_step_s;
  j["window_train_overlap"] = r.window.train_overlap;
  j["checkpoints"] = r.checkpoints;
  return j;
}

AblateRequest parse_ablation_plan(const json& j) {
  const Fields f(j, "ablation plan", {"corpus", "out", "kind", "grid", "seeds", "folds", "n_folds", "base"}, true);
  AblateRequest r;
  r.corpus = f.string("corpus", "");
  r.out = f.string("out", "");
  r.kind = f.string("kind", "");
  if (!f.has("grid") || !f.raw("grid").is_array()) throw ValidationError("ablation plan: 'grid' must be an array");
  const json& grid = f.raw("grid");
  if (r.kind == "random_n" || r.kind == "skip_n") {
    const auto values = f.int_list("grid");
    r.plan.grid = ablation::make_grid(
        r.kind == "random_n" ? mm::BoundaryMode::Kind::random_n : mm::BoundaryMode::Kind::skip_n, values);
  } else if (r.kind == "random_count") {
    std::vector<std::pair<int, int>> ranges;
    for (const auto& v : grid) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
        throw ValidationError("ablation plan: random_count grid entries must be [min, max] pairs");
      }
      ranges.emplace_back(v[0].get<int>(), v[1].get<int>());
    }
    r.plan.grid = ablation::make_count_grid(ranges);
  } else if (r.kind == "labels") {
    for (const auto& v : grid) {
      if (!v.is_string()) throw ValidationError("ablation plan: labels grid entries must be boundary-mode strings");
      r.plan.grid.push_back(mm::boundary_from_string(v.get<std::string>()));
    }
  } else {
    throw ValidationError("ablation plan: unknown kind '" + r.kind +
                          "' (allowed: random_n, random_count, skip_n, labels)");
  }
  r.plan.seeds.clear();
  if (f.has("seeds")) {
    if (!f.raw("seeds").is_array()) f.fail("seeds", "an array of non-negative integers");
    for (const auto& v : f.raw("seeds")) {
      if (!v.is_number_unsigned()) f.fail("seeds", "an array of non-negative integers");
      r.plan.seeds.push_back(v.get<std::uint64_t>());
    }
  } else {
    r.plan.seeds = {1};
  }
  r.plan.folds = f.int_list("folds");
  r.plan.n_folds = f.integer("n_folds", r.plan.n_folds);
  if (f.has("base")) {
    const Fields b(f.raw("base"), "ablation plan base", kTrainKeys, false);
    r.plan.base = read_train_fields(b, {});
    r.plan.base.model = mm::model_kind_from_string(b.string("model", "proposed"));
  }
  ablation::validate(r.plan);
  return r;
}

json to_json(const AblateRequest& r) {
  json grid = json::array();
  for (const auto& g : r.plan.grid) {
    if (r.kind == "random_n" || r.kind == "skip_n") {
      grid.push_back(g.n);
    } else if (r.kind == "random_count") {
      grid.push_back({g.min_words, g.max_words});
    } else {
      grid.push_back(g.label());
    }
  }
  return {{"schema_version", kSchemaVersion}, {"corpus", r.corpus.generic_string()},
          {"out", r.out.generic_string()},    {"kind", r.kind},
          {"grid", grid},                     {"seeds", r.plan.seeds},
          {"folds", r.plan.folds},            {"n_folds", r.plan.n_folds},
          {"base", to_json(r.plan.base)}};
}

corpus::SyntheticSpec parse_synthetic_spec(const json& j) {
  const Fields f(j, "synthetic spec",
                 {"n_subjects", "n_trials", "sentences_per_trial", "words_per_sentence", "word_len_frames", "coupling",
                  "noise_sigma", "seed", "eeg_channels"},
                 true);
  corpus::SyntheticSpec s;
  s.n_subjects = f.integer("n_subjects", s.n_subjects);
  s.n_trials = f.integer("n_trials", s.n_trials);
  s.sentences_per_trial = f.integer("sentences_per_trial", s.sentences_per_trial);
  s.words_per_sentence = f.int_pair("words_per_sentence", s.words_per_sentence);
  s.word_len_frames = f.int_pair("word_len_frames", s.word_len_frames);
  s.coupling = f.number("coupling", s.coupling);
  s.noise_sigma = f.number("noise_sigma", s.noise_sigma);
  s.seed = f.unsigned_integer("seed", s.seed);
  s.eeg_channels = f.integer("eeg_channels", s.eeg_channels);
  corpus::validate(s);
  return s;
}

json to_json(const corpus::SyntheticSpec& s) {
  return {{"schema_version", kSchemaVersion},
          {"n_subjects", s.n_subjects},
          {"n_trials", s.n_trials},
          {"sentences_per_trial", s.sentences_per_trial},
          {"words_per_sentence", {s.words_per_sentence.first, s.words_per_sentence.second}},
          {"word_len_frames", {s.word_len_frames.first, s.word_len_frames.second}},
          {"coupling", s.coupling},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed},
          {"eeg_channels", s.eeg_channels}};
}

json fold_record(const TrainRequest& req, const mm::FoldResult& r, const std::string& fingerprint) {
  json j = fold_json(r);
  j["kind"] = "fold";
  j["model"] = req.model;
  j["seed"] = req.train.seed;
  j["corpus_fingerprint"] = fingerprint;
  json config = to_json(req);
  config.erase("out");
  j["config"] = config;
  return j;
}

mm::FoldResult fold_result_from_json(const json& j) {
  try {
    mm::FoldResult r;
    r.fold_id = j.at("fold").get<int>();
    r.train_loss = j.at("train_loss").get<std::vector<double>>();
    r.test_accuracy = j.at("test_accuracy").get<std::vector<double>>();
    r.final_accuracy = j.at("final_accuracy").get<double>();
    r.subject_accuracy = j.at("subject_accuracy").get<std::map<std::string, double>>();
    r.train_pairs = j.at("train_pairs").get<std::size_t>();
    r.test_pairs = j.at("test_pairs").get<std::size_t>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed fold record: ") + e.what());
  }
}

json ablation_record(const ablation::AblationRow& row, const mm::TrainConfig& base, const std::string& fingerprint) {
  mm::TrainConfig cfg = base;
  cfg.boundary = mm::boundary_from_string(row.parameter);
  cfg.seed = row.seed;
  json j = {{"kind", "ablation"},
            {"parameter", row.parameter},
            {"seed", row.seed},
            {"fold", row.fold_id},
            {"ok", row.ok},
            {"error", row.error},
            {"corpus_fingerprint", fingerprint},
            {"config", to_json(cfg)}};
  if (row.ok) j["result"] = fold_json(row.result);
  return j;
}

ablation::AblationRow ablation_row_from_json(const json& j) {
  try {
    ablation::AblationRow row;
    row.parameter = j.at("parameter").get<std::string>();
    row.seed = j.at("seed").get<std::uint64_t>();
    row.fold_id = j.at("fold").get<int>();
    row.ok = j.at("ok").get<bool>();
    row.error = j.at("error").get<std::string>();
    if (row.ok) row.result = fold_result_from_json(j.at("result"));
    return row;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed ablation record: ") + e.what());
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json_atomic(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": invalid JSON line");
    }
  }
  return out;
}

void append_jsonl(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to " + path.string());
  out << j.dump() << '\n';
  out.flush();
  if (!out) throw DataError("failed writing " + path.string());
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest::RunManifest(fs::path path, std::string command, json config)
    : path_(std::move(path)), command_(std::move(command)), config_(std::move(config)), started_(utc_timestamp()) {}

json RunManifest::to_json() const {
  return {{"schema_version", kSchemaVersion},
          {"command", command_},
          {"config", config_},
          {"corpus_fingerprint", fingerprint_},
          {"code_version", kVersion},
          {"seeds", seeds_},
          {"started_at", started_},
          {"finished_at", finished_},
          {"status", status_},
          {"outputs", outputs_}};
}

void RunManifest::write() { write_json_atomic(path_, to_json()); }

void RunManifest::finish(const std::string& status) {
  status_ = status;
  finished_ = utc_timestamp();
  write();
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".lock") {
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) {
    throw OutputRefused("output directory " + dir.string() + " is locked by another run (" + path_.string() + ")");
  }
  std::fclose(f);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw OutputRefused(dir.string() + " exists and is not a directory");
    if (fs::exists(dir / ".lock")) {
      throw OutputRefused("output directory " + dir.string() + " is locked by another run");
    }
    if (!fs::is_empty(dir)) {
      if (!force) throw OutputRefused("output directory " + dir.string() + " is not empty; pass --force to overwrite");
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

void write_corpus_summary(const fs::path& corpus_dir, const CorpusSummary& s) {
  write_json_atomic(corpus_dir / "corpus.json", {{"schema_version", kSchemaVersion},
                                                 {"fingerprint", s.fingerprint},
                                                 {"records", s.records},
                                                 {"subjects", s.subjects},
                                                 {"source", s.source}});
}

CorpusSummary read_corpus_summary(const fs::path& corpus_dir) {
  const fs::path p = corpus_dir / "corpus.json";
  if (!fs::exists(p)) throw DataError(corpus_dir.string() + " is not a preprocessed corpus (no corpus.json)");
  const json j = read_json_file(p);
  try {
    CorpusSummary s;
    s.fingerprint = j.at("fingerprint").get<std::string>();
    s.records = j.at("records").get<std::size_t>();
    s.subjects = j.at("subjects").get<std::vector<std::string>>();
    s.source = j.at("source").get<std::string>();
    return s;
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": malformed corpus summary: " + e.what());
  }
}

}  // namespace wbmm::experiment
