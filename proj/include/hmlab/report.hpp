#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "hmlab/train.hpp"

namespace hmlab {

struct RunSummary {
  std::string label;  // defense plus destination, e.g. "hm+ics[softhard,lga]"
  std::size_t pgd_steps = 0;
  std::size_t cost = 1;  // backward passes per iteration
  std::uint64_t seed = 0;
  std::string status;
  double ers = 0.0;
  double r_at_1 = 0.0;
};

std::string run_label(const TrainConfig& config);
RunSummary summarize(const RunRecord& record);

/// Markdown table, rows sorted by ERS descending (ties keep input order).
std::string comparison_table(std::vector<RunSummary> runs);

struct Curve {
  std::string label;
  std::vector<std::pair<double, double>> points;  // sorted by x
};

enum class CurveMetric { Ers, RecallAt1 };

/// One curve per label with x = training cost, averaging runs that share a cost.
std::vector<Curve> cost_curves(const std::vector<RunSummary>& runs, CurveMetric metric);

std::string render_svg(const std::vector<Curve>& curves, const std::string& title, const std::string& x_label,
                       const std::string& y_label);

/// Writes comparison.md, cost_vs_ers.svg and cost_vs_r1.svg into out_dir.
void write_report(const std::vector<RunRecord>& records, const std::filesystem::path& out_dir);

}  // namespace hmlab
