#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wbmm/ablation.hpp"
#include "wbmm/corpus.hpp"
#include "wbmm/matchmismatch.hpp"

namespace wbmm::experiment {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kValidation = 2, kData = 3, kRuntime = 4, kRefused = 5 };

// Output directory exists and is not empty, or another run holds its lock.
class OutputRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainRequest {
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::string model{"proposed"};  // proposed | baseline_sentence | baseline_window
  mm::TrainConfig train{};
  int n_folds{3};
  std::vector<int> folds{};  // empty runs every fold
  mm::WindowConfig window{};
  bool checkpoints{true};
};

struct AblateRequest {
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::string kind;  // random_n | random_count | skip_n | labels
  ablation::AblationPlan plan{};
};

// Strict parsers: schema_version must equal kSchemaVersion and unknown keys
// are errors naming the allowed set.
TrainRequest parse_train_config(const json& j);
AblateRequest parse_ablation_plan(const json& j);
corpus::SyntheticSpec parse_synthetic_spec(const json& j);

json to_json(const TrainRequest& r);
json to_json(const AblateRequest& r);
json to_json(const corpus::SyntheticSpec& s);
json to_json(const mm::TrainConfig& c);
mm::TrainConfig train_config_from_json(const json& j);

// One persisted line per fold. No timestamps, so fixed seeds reproduce
// records byte for byte.
json fold_record(const TrainRequest& req, const mm::FoldResult& r, const std::string& fingerprint);
mm::FoldResult fold_result_from_json(const json& j);

json ablation_record(const ablation::AblationRow& row, const mm::TrainConfig& base, const std::string& fingerprint);
ablation::AblationRow ablation_row_from_json(const json& j);

json read_json_file(const std::filesystem::path& path);
void write_json_atomic(const std::filesystem::path& path, const json& j);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<json> read_jsonl(const std::filesystem::path& path);
void append_jsonl(const std::filesystem::path& path, const json& j);

std::string utc_timestamp();

// Written at run start with status "running" and rewritten when the run ends.
class RunManifest {
 public:
  RunManifest(std::filesystem::path path, std::string command, json config);

  void set_fingerprint(const std::string& fp) { fingerprint_ = fp; }
  void set_seeds(std::vector<std::uint64_t> seeds) { seeds_ = std::move(seeds); }
  void add_output(const std::filesystem::path& p) { outputs_.push_back(p.generic_string()); }
  void write();
  void finish(const std::string& status);
  json to_json() const;

 private:
  std::filesystem::path path_;
  std::string command_;
  json config_;
  std::string fingerprint_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::string> outputs_;
  std::string started_;
  std::string finished_;
  std::string status_{"running"};
};

// Exclusive lock file inside an output directory.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Creates `dir`; throws OutputRefused if it already holds files and
// `force` is false. With `force`, previous contents are removed.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

// corpus.json written by the preprocess command.
struct CorpusSummary {
  std::string fingerprint;
  std::size_t records{0};
  std::vector<std::string> subjects;
  std::string source;
};
void write_corpus_summary(const std::filesystem::path& corpus_dir, const CorpusSummary& s);
CorpusSummary read_corpus_summary(const std::filesystem::path& corpus_dir);

}  // namespace wbmm::experiment
