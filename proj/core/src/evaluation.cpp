#include "nfp/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "nfp/training.hpp"

namespace nfp {

using nlohmann::json;

namespace {

int sign_of(double v) { return v < 0.0 ? -1 : 1; }  // sign(0) = +1

void require_matched(const std::vector<double>& a, const std::vector<double>& b,
                     const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": sequence lengths disagree");
  }
  if (a.empty()) {
    throw std::invalid_argument(std::string(what) + ": sequences are empty");
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::runtime_error(std::string(what) + ": bad number '" + std::string(s) +
                             "'");
  }
  return v;
}

}  // namespace

double direction_accuracy(const std::vector<double>& predictions,
                          const std::vector<double>& actuals) {
  require_matched(predictions, actuals, "direction_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (sign_of(predictions[i]) == sign_of(actuals[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double within_tolerance_directional(const std::vector<double>& predictions,
                                    const std::vector<double>& actuals,
                                    double tolerance) {
  require_matched(predictions, actuals, "within_tolerance_directional");
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("within_tolerance_directional: tolerance must be > 0");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (sign_of(predictions[i]) == sign_of(actuals[i]) &&
        std::fabs(predictions[i] - actuals[i]) <= tolerance) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double test_mse(const std::vector<double>& predictions,
                const std::vector<double>& actuals) {
  return mse_loss(predictions, actuals);
}

MetricsReport build_report(const std::string& version, TargetMode mode,
                           std::vector<PerExample> per_example) {
  if (per_example.empty()) {
    throw std::invalid_argument("build_report: no per-example results");
  }
  std::vector<double> preds, actuals, targets;
  preds.reserve(per_example.size());
  for (const PerExample& pe : per_example) {
    preds.push_back(pe.prediction);
    actuals.push_back(pe.actual_pct);
    targets.push_back(pe.target);
  }
  MetricsReport report;
  report.version = version;
  report.direction_accuracy = direction_accuracy(preds, actuals);
  if (mode == TargetMode::regression) {
    report.within_2pct = within_tolerance_directional(preds, actuals, 2.0);
    report.within_5pct = within_tolerance_directional(preds, actuals, 5.0);
  }
  report.test_mse = test_mse(preds, targets);
  report.n_test = per_example.size();
  report.per_example = std::move(per_example);
  return report;
}

TrendSeries trend_report(const std::vector<PerExample>& per_example) {
  std::vector<PerExample> sorted = per_example;
  std::sort(sorted.begin(), sorted.end(), [](const PerExample& a, const PerExample& b) {
    if (a.date != b.date) return a.date < b.date;
    return a.record_ref < b.record_ref;
  });

  TrendSeries trend;
  double cp = 0.0, ca = 0.0;
  for (const PerExample& pe : sorted) {
    cp += pe.prediction;
    ca += pe.actual_pct;
    trend.dates.push_back(pe.date);
    trend.cum_predicted.push_back(cp);
    trend.cum_actual.push_back(ca);
  }

  const std::size_t n = trend.dates.size();
  if (n >= 2) {
    const double nn = static_cast<double>(n);
    double mean_p = 0.0, mean_a = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean_p += trend.cum_predicted[i];
      mean_a += trend.cum_actual[i];
    }
    mean_p /= nn;
    mean_a /= nn;
    double cov = 0.0, var_p = 0.0, var_a = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dp = trend.cum_predicted[i] - mean_p;
      const double da = trend.cum_actual[i] - mean_a;
      cov += dp * da;
      var_p += dp * dp;
      var_a += da * da;
    }
    if (var_p > 0.0 && var_a > 0.0) {
      trend.pearson_r = cov / std::sqrt(var_p * var_a);
    }
  }
  return trend;
}

ComparisonTable compare_models(const std::vector<MetricsReport>& reports) {
  if (reports.size() < 2) {
    throw std::invalid_argument("compare_models: need at least 2 reports");
  }
  ComparisonTable table;
  table.rows.reserve(reports.size());
  for (const MetricsReport& r : reports) {
    table.rows.push_back({r.version, r.direction_accuracy, r.within_2pct,
                          r.within_5pct, r.test_mse, r.n_test});
  }
  return table;
}

namespace {

json report_to_json_value(const MetricsReport& report) {
  json j;
  j["version"] = report.version;
  j["direction_accuracy"] = report.direction_accuracy;
  if (report.within_2pct) j["within_2pct"] = *report.within_2pct;
  if (report.within_5pct) j["within_5pct"] = *report.within_5pct;
  j["test_mse"] = report.test_mse;
  j["n_test"] = report.n_test;
  json per = json::array();
  for (const PerExample& pe : report.per_example) {
    per.push_back(json{{"record_ref", pe.record_ref},
                       {"date", pe.date.to_string()},
                       {"prediction", pe.prediction},
                       {"actual", pe.actual_pct},
                       {"target", pe.target}});
  }
  j["per_example"] = std::move(per);
  const TrendSeries trend = trend_report(report.per_example);
  json jt;
  if (trend.pearson_r) jt["pearson_r"] = *trend.pearson_r;
  jt["cum_predicted"] = trend.cum_predicted;
  jt["cum_actual"] = trend.cum_actual;
  j["trend"] = std::move(jt);
  return j;
}

}  // namespace

std::string report_to_json(const MetricsReport& report) {
  return report_to_json_value(report).dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  MetricsReport report;
  json j;
  try {
    j = json::parse(text);
    report.version = j.at("version").get<std::string>();
    report.direction_accuracy = j.at("direction_accuracy").get<double>();
    if (j.contains("within_2pct")) report.within_2pct = j["within_2pct"].get<double>();
    if (j.contains("within_5pct")) report.within_5pct = j["within_5pct"].get<double>();
    report.test_mse = j.at("test_mse").get<double>();
    report.n_test = j.at("n_test").get<std::size_t>();
    if (j.contains("per_example")) {
      for (const auto& e : j["per_example"]) {
        PerExample pe;
        pe.record_ref = e.at("record_ref").get<std::size_t>();
        pe.date = Date::parse(e.at("date").get<std::string>());
        pe.prediction = e.at("prediction").get<double>();
        pe.actual_pct = e.at("actual").get<double>();
        pe.target = e.at("target").get<double>();
        report.per_example.push_back(pe);
      }
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed report JSON: ") + e.what());
  }
  return report;
}

namespace {

constexpr std::string_view kMetricsHeader =
    "version,direction_accuracy,within_2pct,within_5pct,test_mse,n_test";

std::string row_to_csv(const ComparisonRow& r) {
  std::string line = r.version;
  line += ',';
  line += format_double(r.direction_accuracy);
  line += ',';
  line += r.within_2pct ? format_double(*r.within_2pct) : "N/A";
  line += ',';
  line += r.within_5pct ? format_double(*r.within_5pct) : "N/A";
  line += ',';
  line += format_double(r.test_mse);
  line += ',';
  line += std::to_string(r.n_test);
  return line;
}

ComparisonRow row_from_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (fields.size() != 6) {
    throw std::runtime_error("metrics CSV row must have 6 fields: '" + line + "'");
  }
  ComparisonRow r;
  r.version = fields[0];
  r.direction_accuracy = parse_double(fields[1], "direction_accuracy");
  if (fields[2] != "N/A") r.within_2pct = parse_double(fields[2], "within_2pct");
  if (fields[3] != "N/A") r.within_5pct = parse_double(fields[3], "within_5pct");
  r.test_mse = parse_double(fields[4], "test_mse");
  r.n_test = static_cast<std::size_t>(parse_double(fields[5], "n_test"));
  return r;
}

}  // namespace

std::string report_to_csv(const MetricsReport& report) {
  ComparisonRow row{report.version,    report.direction_accuracy, report.within_2pct,
                    report.within_5pct, report.test_mse,           report.n_test};
  return std::string(kMetricsHeader) + "\n" + row_to_csv(row) + "\n";
}

MetricsReport report_from_csv(const std::string& text) {
  std::istringstream ss(text);
  std::string header, line;
  if (!std::getline(ss, header) || header != kMetricsHeader) {
    throw std::runtime_error("metrics CSV: unexpected header '" + header + "'");
  }
  if (!std::getline(ss, line)) {
    throw std::runtime_error("metrics CSV: missing data row");
  }
  const ComparisonRow r = row_from_csv(line);
  MetricsReport report;
  report.version = r.version;
  report.direction_accuracy = r.direction_accuracy;
  report.within_2pct = r.within_2pct;
  report.within_5pct = r.within_5pct;
  report.test_mse = r.test_mse;
  report.n_test = r.n_test;
  return report;
}

std::string table_to_csv(const ComparisonTable& table) {
  std::string out(kMetricsHeader);
  out += '\n';
  for (const ComparisonRow& r : table.rows) {
    out += row_to_csv(r);
    out += '\n';
  }
  return out;
}

std::string table_to_json(const ComparisonTable& table) {
  json rows = json::array();
  for (const ComparisonRow& r : table.rows) {
    json row;
    row["version"] = r.version;
    row["direction_accuracy"] = r.direction_accuracy;
    row["within_2pct"] = r.within_2pct ? json(*r.within_2pct) : json(nullptr);
    row["within_5pct"] = r.within_5pct ? json(*r.within_5pct) : json(nullptr);
    row["test_mse"] = r.test_mse;
    row["n_test"] = r.n_test;
    rows.push_back(std::move(row));
  }
  return json{{"rows", std::move(rows)}}.dump(2) + "\n";
}

namespace {

std::string svg_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                     const char* color) {
  std::string p = "  <polyline fill=\"none\" stroke=\"";
  p += color;
  p += "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) p += ' ';
    p += svg_coord(xs[i]) + "," + svg_coord(ys[i]);
  }
  p += "\"/>\n";
  return p;
}

}  // namespace

std::string trend_to_svg(const TrendSeries& trend) {
  const double width = 720.0, height = 420.0;
  const double left = 60.0, right = 20.0, top = 20.0, bottom = 40.0;
  const std::size_t n = trend.cum_actual.size();

  double lo = 0.0, hi = 1.0;
  if (n > 0) {
    lo = std::min(trend.cum_predicted[0], trend.cum_actual[0]);
    hi = std::max(trend.cum_predicted[0], trend.cum_actual[0]);
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min({lo, trend.cum_predicted[i], trend.cum_actual[i]});
      hi = std::max({hi, trend.cum_predicted[i], trend.cum_actual[i]});
    }
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;

  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const auto x_of = [&](std::size_t i) {
    return n <= 1 ? left : left + plot_w * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  const auto y_of = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::vector<double> xs(n), yp(n), ya(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x_of(i);
    yp[i] = y_of(trend.cum_predicted[i]);
    ya[i] = y_of(trend.cum_actual[i]);
  }

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         svg_coord(width) + "\" height=\"" + svg_coord(height) + "\">\n";
  svg += "  <rect x=\"0\" y=\"0\" width=\"" + svg_coord(width) + "\" height=\"" +
         svg_coord(height) + "\" fill=\"white\"/>\n";
  // axes drawn as lines so the two data series are the only polylines
  svg += "  <line x1=\"" + svg_coord(left) + "\" y1=\"" + svg_coord(top) + "\" x2=\"" +
         svg_coord(left) + "\" y2=\"" + svg_coord(height - bottom) +
         "\" stroke=\"black\"/>\n";
  svg += "  <line x1=\"" + svg_coord(left) + "\" y1=\"" + svg_coord(height - bottom) +
         "\" x2=\"" + svg_coord(width - right) + "\" y2=\"" +
         svg_coord(height - bottom) + "\" stroke=\"black\"/>\n";
  if (n > 0) {
    svg += polyline(xs, ya, "#1f77b4");
    svg += polyline(xs, yp, "#d62728");
  } else {
    svg += polyline({}, {}, "#1f77b4");
    svg += polyline({}, {}, "#d62728");
  }
  svg += "  <text x=\"" + svg_coord(width - right - 180.0) + "\" y=\"" +
         svg_coord(top + 14.0) +
         "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#1f77b4\">cumulative "
         "actual</text>\n";
  svg += "  <text x=\"" + svg_coord(width - right - 180.0) + "\" y=\"" +
         svg_coord(top + 32.0) +
         "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#d62728\">cumulative "
         "predicted</text>\n";
  if (trend.pearson_r) {
    svg += "  <text x=\"" + svg_coord(left + 8.0) + "\" y=\"" + svg_coord(top + 14.0) +
           "\" font-family=\"sans-serif\" font-size=\"13\" fill=\"black\">pearson r = " +
           format_double(*trend.pearson_r) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write file: " + path.string());
  }
  out << content;
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open file: " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace nfp
