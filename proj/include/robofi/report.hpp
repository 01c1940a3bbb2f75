#pragma once

// Derived tables of a ProtocolReport and their CSV / SVG renderings.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "robofi/metrics.hpp"
#include "robofi/protocols.hpp"

namespace robofi::report {

struct MetricSummary {
  metrics::Summary accuracy, macro_precision, macro_recall, macro_f1;
};

/// accuracy, macro scores, per-class scores with support, 8x8 confusion.
std::string metrics_to_json(const metrics::Metrics& m);

/// Mean and n-1 std over the primary test set of every arm.
MetricSummary summarize_arms(const std::vector<protocols::ArmResult>& arms);

/// Per-class accuracy of each held-out velocity (rows in arm order).
struct LovoRow {
  std::string holdout;
  std::array<double, kNumClasses> class_accuracy{};
  std::array<std::size_t, kNumClasses> support{};
  double overall = 0.0;
  double weighted_mean = 0.0;  // support-weighted mean of class_accuracy
};
std::vector<LovoRow> lovo_table(const protocols::ProtocolReport& r);

struct Grid {
  std::vector<std::string> row_names;
  std::vector<std::string> col_names;
  std::vector<std::vector<double>> values;  // NaN where a cell has no arm
};

/// Rates x velocities, mean test accuracy over each cell's folds.
Grid freq_grid(const protocols::ProtocolReport& r);
/// Training location sets x test locations.
Grid location_grid(const protocols::ProtocolReport& r);

std::string grid_csv(const Grid& g, const std::string& corner);
std::string lovo_csv(const std::vector<LovoRow>& rows);
std::string summary_csv(const protocols::ProtocolReport& r);

/// Grouped bar chart: one group per row of the grid, one bar per column.
std::string bar_chart_svg(const Grid& g, const std::string& title, const std::string& y_label);

/// Writes report.json plus the protocol's tables, confusion matrices,
/// learning curves and charts. Returns the written paths, relative to out_dir.
std::vector<std::string> render(const protocols::ProtocolReport& r, const std::filesystem::path& out_dir);

}  // namespace robofi::report
