#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "aesaug/error.hpp"
#include "aesaug/harness.hpp"

namespace aesaug {

Summary summarize(std::span<const FoldReport> reports, std::vector<std::string> conditions,
                  std::vector<int> prompts, int total_prompt_count) {
  Summary summary;
  summary.conditions = std::move(conditions);
  summary.prompts = std::move(prompts);
  summary.total_prompt_count = total_prompt_count;
  for (const auto& c : summary.conditions) {
    for (int p : summary.prompts) summary.cells[{c, p}] = SummaryCell{};
  }
  std::map<std::pair<std::string, int>, std::pair<double, double>> sums;
  for (const auto& r : reports) {
    auto it = summary.cells.find({r.condition, r.prompt_id});
    if (it == summary.cells.end()) continue;
    if (r.status != "ok") {
      ++it->second.folds_failed;
      continue;
    }
    ++it->second.folds_ok;
    auto& s = sums[{r.condition, r.prompt_id}];
    s.first += r.test_qwk;
    s.second += r.best_epoch;
  }
  for (auto& [key, cell] : summary.cells) {
    if (cell.folds_ok == 0) continue;
    const auto& s = sums[key];
    cell.mean_test_qwk = s.first / cell.folds_ok;
    cell.mean_best_epoch = s.second / cell.folds_ok;
  }
  return summary;
}

double average_improvement(std::span<const double> improvements, int divisor) {
  if (divisor <= 0) throw Error("report.divisor", "improvement divisor must be positive");
  double sum = 0.0;
  for (double d : improvements) sum += d;
  return sum / divisor;
}

std::string format_qwk(double qwk) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << qwk * 100.0;
  auto s = out.str();
  return s == "-0.0" ? "0.0" : s;
}

namespace {

struct Row {
  std::string condition;
  std::vector<std::string> cells;  // one per prompt
  std::string avg_measured;        // improvement over measured prompts
  std::string avg_total;           // improvement over all prompts
};

bool cell_complete(const SummaryCell& c) { return c.folds_ok > 0 && c.folds_failed == 0; }

std::string signed_points(double delta) {
  std::ostringstream out;
  out << std::showpos << std::fixed << std::setprecision(2) << delta * 100.0;
  return out.str();
}

std::vector<Row> build_rows(const Summary& s) {
  std::vector<Row> rows;
  const std::string base = s.conditions.empty() ? "" : s.conditions.front();
  for (std::size_t ci = 0; ci < s.conditions.size(); ++ci) {
    const auto& c = s.conditions[ci];
    Row row{c, {}, "", ""};
    std::vector<double> deltas;
    bool comparable = ci > 0;
    for (int p : s.prompts) {
      const auto& cell = s.cells.at({c, p});
      row.cells.push_back(cell_complete(cell) ? format_qwk(cell.mean_test_qwk) : "n/a");
      const auto& b = s.cells.at({base, p});
      if (cell_complete(cell) && cell_complete(b)) {
        deltas.push_back(cell.mean_test_qwk - b.mean_test_qwk);
      } else {
        comparable = false;
      }
    }
    if (comparable && !deltas.empty()) {
      row.avg_measured = signed_points(average_improvement(deltas, static_cast<int>(deltas.size())));
      row.avg_total = signed_points(average_improvement(deltas, s.total_prompt_count));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string render_summary_text(const Summary& s) {
  const auto rows = build_rows(s);
  std::size_t name_width = 9;
  for (const auto& r : rows) name_width = std::max(name_width, r.condition.size());
  const std::string over_total = "avg/" + std::to_string(s.total_prompt_count);

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width)) << "Condition";
  for (int p : s.prompts) out << std::right << std::setw(7) << ("P" + std::to_string(p));
  out << std::setw(10) << "avg/meas" << std::setw(10) << over_total << "\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(name_width)) << r.condition;
    for (const auto& c : r.cells) out << std::right << std::setw(7) << c;
    out << std::setw(10) << (r.avg_measured.empty() ? "-" : r.avg_measured) << std::setw(10)
        << (r.avg_total.empty() ? "-" : r.avg_total) << "\n";
  }
  out << "\nMean best epoch\n";
  for (const auto& c : s.conditions) {
    out << std::left << std::setw(static_cast<int>(name_width)) << c;
    for (int p : s.prompts) {
      const auto& cell = s.cells.at({c, p});
      std::ostringstream e;
      if (cell.folds_ok > 0) {
        e << std::fixed << std::setprecision(1) << cell.mean_best_epoch;
      } else {
        e << "n/a";
      }
      out << std::right << std::setw(7) << e.str();
    }
    out << "\n";
  }
  bool any_failed = false;
  for (const auto& [key, cell] : s.cells) any_failed |= cell.folds_failed > 0;
  if (any_failed) {
    out << "\nIncomplete cells (failed folds):\n";
    for (const auto& [key, cell] : s.cells) {
      if (cell.folds_failed > 0) {
        out << "  " << key.first << " prompt " << key.second << ": " << cell.folds_failed
            << " failed\n";
      }
    }
  }
  return out.str();
}

std::string render_summary_csv(const Summary& s) {
  const auto rows = build_rows(s);
  std::ostringstream out;
  out << "condition";
  for (int p : s.prompts) out << ",prompt" << p;
  out << ",avg_improvement_measured,avg_improvement_over_" << s.total_prompt_count;
  for (int p : s.prompts) out << ",best_epoch_prompt" << p;
  out << "\n";
  for (const auto& r : rows) {
    out << r.condition;
    for (const auto& c : r.cells) out << ',' << c;
    out << ',' << r.avg_measured << ',' << r.avg_total;
    for (int p : s.prompts) {
      const auto& cell = s.cells.at({r.condition, p});
      out << ',';
      if (cell.folds_ok > 0) out << std::fixed << std::setprecision(1) << cell.mean_best_epoch;
    }
    out << "\n";
  }
  return out.str();
}

std::string render_stats_text(const std::map<int, PromptStats>& stats, const PromptTable& table) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "Prompt" << std::right << std::setw(8) << "Essays"
      << std::setw(8) << "Range" << std::setw(6) << "HFS" << std::setw(8) << "Lower"
      << std::setw(8) << "Higher" << "\n";
  for (const auto& [p, st] : stats) {
    const auto& spec = table.at(p);
    out << std::left << std::setw(8) << p << std::right << std::setw(8) << st.total
        << std::setw(8) << (std::to_string(spec.min_score) + "-" + std::to_string(spec.max_score))
        << std::setw(6) << st.highest_frequency_score << std::setw(8) << st.n_at_or_below()
        << std::setw(8) << st.n_higher << "\n";
  }
  out << "\nLower counts essays scored at or below the highest-frequency score.\n";
  return out.str();
}

std::string render_stats_csv(const std::map<int, PromptStats>& stats, const PromptTable& table) {
  std::ostringstream out;
  out << "prompt,essays,min_score,max_score,hfs,hfs_count,strictly_lower,at_or_below,higher\n";
  for (const auto& [p, st] : stats) {
    const auto& spec = table.at(p);
    out << p << ',' << st.total << ',' << spec.min_score << ',' << spec.max_score << ','
        << st.highest_frequency_score << ',' << st.mode_count() << ',' << st.n_lower << ','
        << st.n_at_or_below() << ',' << st.n_higher << "\n";
  }
  return out.str();
}

}  // namespace aesaug
