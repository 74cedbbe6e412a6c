#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wbmm/matchmismatch.hpp"

namespace wbmm::ablation {

struct AblationPlan {
  std::vector<mm::BoundaryMode> grid;  // one training run per point, seed and fold
  std::vector<std::uint64_t> seeds{1};
  std::vector<int> folds{};            // fold ids to run; empty runs every fold
  int n_folds{3};
  mm::TrainConfig base{};
};

void validate(const AblationPlan& plan);

// Grid from a sweep kind and its values: random_n and skip_n take word
// counts / periods; random_count takes (min, max) pairs.
std::vector<mm::BoundaryMode> make_grid(mm::BoundaryMode::Kind kind, const std::vector<int>& values);
std::vector<mm::BoundaryMode> make_count_grid(const std::vector<std::pair<int, int>>& ranges);

struct AblationRow {
  std::string parameter;  // boundary-mode label
  std::uint64_t seed{0};
  int fold_id{0};
  bool ok{true};
  std::string error;
  mm::FoldResult result;
};

struct AggregateRow {
  std::string parameter;
  double mean{0};
  double stddev{0};
  std::size_t runs{0};
  std::size_t failures{0};
};

using RowCallback = std::function<void(const AblationRow&)>;

// Retrains from scratch for every grid point, seed and fold. A failing run
// is recorded and the sweep continues.
std::vector<AblationRow> run_ablation(const AblationPlan& plan, const std::vector<corpus::SentenceRecord>& records,
                                      const RowCallback& on_row = {});

// Mean and sample standard deviation of final accuracy per parameter, in
// first-appearance order. Failed runs are counted but not averaged.
std::vector<AggregateRow> aggregate(const std::vector<AblationRow>& rows);

std::string render_table(const std::vector<AggregateRow>& rows);

// Accuracy-versus-parameter plot with one-standard-deviation bars.
void write_trend_svg(const std::filesystem::path& path, const std::vector<AggregateRow>& rows,
                     const std::string& title);

}  // namespace wbmm::ablation
