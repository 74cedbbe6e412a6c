#include "wbmm/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "wbmm/log.hpp"

namespace wbmm::ablation {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void validate(const AblationPlan& plan) {
  if (plan.grid.empty()) throw ValidationError("ablation grid is empty");
  if (plan.seeds.empty()) throw ValidationError("ablation needs at least one seed");
  if (plan.n_folds < 2) throw ValidationError("ablation needs at least 2 folds");
  for (int f : plan.folds) {
    if (f < 1 || f > plan.n_folds) throw ValidationError("fold id " + std::to_string(f) + " out of range");
  }
  for (const auto& point : plan.grid) {
    mm::TrainConfig cfg = plan.base;
    cfg.boundary = point;
    mm::validate(cfg);
  }
}

std::vector<mm::BoundaryMode> make_grid(mm::BoundaryMode::Kind kind, const std::vector<int>& values) {
  std::vector<mm::BoundaryMode> grid;
  for (int v : values) {
    switch (kind) {
      case mm::BoundaryMode::Kind::random_n:
        grid.push_back(mm::BoundaryMode::random(v));
        break;
      case mm::BoundaryMode::Kind::skip_n:
        grid.push_back(mm::BoundaryMode::skip(v));
        break;
      default:
        throw ValidationError("make_grid takes random_n or skip_n; use make_count_grid for random_count");
    }
  }
  return grid;
}

std::vector<mm::BoundaryMode> make_count_grid(const std::vector<std::pair<int, int>>& ranges) {
  std::vector<mm::BoundaryMode> grid;
  for (const auto& [lo, hi] : ranges) grid.push_back(mm::BoundaryMode::random_count(lo, hi));
  return grid;
}

std::vector<AblationRow> run_ablation(const AblationPlan& plan, const std::vector<corpus::SentenceRecord>& records,
                                      const RowCallback& on_row) {
  validate(plan);
  std::set<std::string> subject_set;
  for (const auto& r : records) subject_set.insert(r.subject_id);
  const auto splits = mm::make_folds({subject_set.begin(), subject_set.end()}, plan.n_folds);

  std::vector<AblationRow> rows;
  for (const auto& point : plan.grid) {
    for (std::uint64_t seed : plan.seeds) {
      for (const auto& split : splits) {
        if (!plan.folds.empty() && std::find(plan.folds.begin(), plan.folds.end(), split.fold_id) == plan.folds.end()) {
          continue;
        }
        AblationRow row;
        row.parameter = point.label();
        row.seed = seed;
        row.fold_id = split.fold_id;
        mm::TrainConfig cfg = plan.base;
        cfg.boundary = point;
        cfg.seed = seed;
        try {
          row.result = mm::run_fold(cfg, split, records);
        } catch (const std::exception& e) {
          row.ok = false;
          row.error = e.what();
          log::error("ablation run " + row.parameter + " seed " + std::to_string(seed) + " fold " +
                     std::to_string(split.fold_id) + " failed: " + e.what());
        }
        if (on_row) on_row(row);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<AggregateRow> aggregate(const std::vector<AblationRow>& rows) {
  std::vector<AggregateRow> out;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const AggregateRow& a) { return a.parameter == r.parameter; });
    if (it == out.end()) {
      out.push_back({r.parameter, 0, 0, 0, 0});
      it = out.end() - 1;
    }
    if (r.ok) {
      values[r.parameter].push_back(r.result.final_accuracy);
    } else {
      ++it->failures;
    }
  }
  for (auto& a : out) {
    const auto& v = values[a.parameter];
    a.runs = v.size();
    if (v.empty()) continue;
    double sum = 0.0;
    for (double x : v) sum += x;
    a.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - a.mean) * (x - a.mean);
      a.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
  }
  return out;
}

std::string render_table(const std::vector<AggregateRow>& rows) {
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.parameter.size());
  std::ostringstream os;
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  os << pad("parameter") << "  mean acc %   std    runs  failed\n";
  for (const auto& r : rows) {
    const std::string mean = r.runs ? fixed(r.mean, 2) : "-";
    const std::string sd = r.runs > 1 ? fixed(r.stddev, 2) : "-";
    os << pad(r.parameter) << "  " << std::string(10 - std::min<std::size_t>(10, mean.size()), ' ') << mean << "  "
       << std::string(6 - std::min<std::size_t>(6, sd.size()), ' ') << sd << "  " << r.runs << std::string(6, ' ')
       << r.failures << "\n";
  }
  return os.str();
}

void write_trend_svg(const std::filesystem::path& path, const std::vector<AggregateRow>& rows,
                     const std::string& title) {
  const double w = 640, h = 400, left = 70, right = 20, top = 40, bottom = 70;
  const double pw = w - left - right, ph = h - top - bottom;
  double lo = 100.0, hi = 0.0;
  for (const auto& r : rows) {
    if (!r.runs) continue;
    lo = std::min(lo, r.mean - r.stddev);
    hi = std::max(hi, r.mean + r.stddev);
  }
  if (lo > hi) {
    lo = 0.0;
    hi = 100.0;
  }
  lo = std::max(0.0, std::floor((lo - 2.0) / 5.0) * 5.0);
  hi = std::min(100.0, std::ceil((hi + 2.0) / 5.0) * 5.0);
  if (hi <= lo) hi = lo + 5.0;
  const std::size_t n = rows.size();
  auto x_of = [&](std::size_t i) { return left + pw * (static_cast<double>(i) + 0.5) / static_cast<double>(n); };
  auto y_of = [&](double v) { return top + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  for (double v = lo; v <= hi + 1e-9; v += 5.0) {
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << y_of(v) << "\" x2=\"" << left + pw << "\" y2=\"" << y_of(v)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << fixed(v, 0) << "</text>\n";
  }
  os << "<text x=\"18\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 18 " << top + ph / 2
     << ")\" text-anchor=\"middle\">accuracy (%)</text>\n";
  std::string polyline;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i];
    const double x = x_of(i);
    os << "<text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << xml_escape(r.parameter)
       << "</text>\n";
    if (!r.runs) continue;
    const double y = y_of(r.mean);
    polyline += fixed(x, 1) + "," + fixed(y, 1) + " ";
    if (r.runs > 1) {
      os << "<line x1=\"" << x << "\" y1=\"" << y_of(r.mean - r.stddev) << "\" x2=\"" << x << "\" y2=\""
         << y_of(r.mean + r.stddev) << "\" stroke=\"#1f77b4\"/>\n";
    }
    os << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
  }
  if (!polyline.empty()) {
    os << "<polyline points=\"" << polyline << "\" fill=\"none\" stroke=\"#1f77b4\"/>\n";
  }
  os << "</svg>\n";

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write plot " + tmp.string());
    out << os.str();
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace wbmm::ablation
