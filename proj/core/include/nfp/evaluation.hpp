#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nfp/dataset.hpp"
#include "nfp/modality.hpp"

namespace nfp {

struct PerExample {
  std::size_t record_ref = 0;
  Date date;
  double prediction = 0.0;
  double actual_pct = 0.0;  // ground-truth percent change
  double target = 0.0;      // what the model was trained against
};

// within_2pct / within_5pct are present iff the model was trained in
// regression mode; symbolic models never approached exact prices, so the
// within-tolerance numbers would be meaningless for them.
struct MetricsReport {
  std::string version;
  double direction_accuracy = 0.0;
  std::optional<double> within_2pct;
  std::optional<double> within_5pct;
  double test_mse = 0.0;
  std::size_t n_test = 0;
  std::vector<PerExample> per_example;
};

// Fraction of pairs whose signs match, with sign(0) = +1 (the same
// tie-break the symbolic target transform uses).
double direction_accuracy(const std::vector<double>& predictions,
                          const std::vector<double>& actuals);

// Fraction with the right direction AND |pred - actual| <= tolerance
// percentage points. Regression-mode predictions only.
double within_tolerance_directional(const std::vector<double>& predictions,
                                    const std::vector<double>& actuals,
                                    double tolerance);

// Same definition as training's mse_loss.
double test_mse(const std::vector<double>& predictions,
                const std::vector<double>& actuals);

// Assembles a MetricsReport from per-example results. Throws if asked to
// compute within-tolerance numbers for a symbolic-mode model.
MetricsReport build_report(const std::string& version, TargetMode mode,
                           std::vector<PerExample> per_example);

struct TrendSeries {
  std::vector<Date> dates;
  std::vector<double> cum_predicted;
  std::vector<double> cum_actual;
  std::optional<double> pearson_r;  // absent with < 2 points or a flat curve
};

// Sorts by (date, record_ref) and accumulates running sums of predicted and
// actual percent changes, plus the Pearson correlation of the two curves.
TrendSeries trend_report(const std::vector<PerExample>& per_example);

struct ComparisonRow {
  std::string version;
  double direction_accuracy = 0.0;
  std::optional<double> within_2pct;
  std::optional<double> within_5pct;
  double test_mse = 0.0;
  std::size_t n_test = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;  // input order preserved
};

ComparisonTable compare_models(const std::vector<MetricsReport>& reports);

// Emission. JSON and CSV output is byte-deterministic for equal inputs.
std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);
std::string report_to_csv(const MetricsReport& report);
MetricsReport report_from_csv(const std::string& text);

std::string table_to_csv(const ComparisonTable& table);
std::string table_to_json(const ComparisonTable& table);

// SVG 1.1 line chart with exactly two polyline series and a legend.
std::string trend_to_svg(const TrendSeries& trend);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace nfp
