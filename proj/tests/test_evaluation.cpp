#include <doctest.h>

#include <cmath>

#include "nfp/evaluation.hpp"
#include "nfp/rng.hpp"
#include "testing.hpp"

using namespace nfp;
using nfp::testing::TempDir;

namespace {

std::vector<PerExample> make_per_example(const std::vector<double>& preds,
                                         const std::vector<double>& actuals) {
  std::vector<PerExample> out;
  Date d{2023, 1, 2};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    PerExample pe;
    pe.record_ref = i;
    pe.date = d;
    pe.prediction = preds[i];
    pe.actual_pct = actuals[i];
    pe.target = actuals[i];
    out.push_back(pe);
    d = d.next_day();
  }
  return out;
}

}  // namespace

TEST_CASE("direction_accuracy: hand count, perfect, inverted") {
  CHECK(direction_accuracy({1.2, -0.5, 3.0}, {0.4, 0.2, 5.0}) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(direction_accuracy({1, -2, 3}, {1, -2, 3}) == 1.0);
  CHECK(direction_accuracy({1, -2, 3}, {-1, 2, -3}) == 0.0);
  CHECK_THROWS(direction_accuracy({1}, {1, 2}));
  CHECK_THROWS(direction_accuracy({}, {}));
}

TEST_CASE("direction_accuracy: zero counts as positive on both sides") {
  CHECK(direction_accuracy({0.0}, {0.5}) == 1.0);
  CHECK(direction_accuracy({0.0}, {-0.5}) == 0.0);
  CHECK(direction_accuracy({0.5}, {0.0}) == 1.0);
  CHECK(direction_accuracy({-0.5}, {0.0}) == 0.0);
}

TEST_CASE("direction_accuracy is invariant under positive rescaling") {
  Rng rng(61, "scale");
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> preds, actuals, scaled;
    const std::size_t n = 1 + rng.next_below(30);
    const double factor = 0.001 + 100.0 * rng.next_double();
    for (std::size_t i = 0; i < n; ++i) {
      preds.push_back(20.0 * rng.next_double() - 10.0);
      actuals.push_back(20.0 * rng.next_double() - 10.0);
      scaled.push_back(preds.back() * factor);
    }
    CHECK(direction_accuracy(preds, actuals) == direction_accuracy(scaled, actuals));
  }
}

TEST_CASE("within_tolerance_directional: the three declared cases") {
  // same sign and |delta| = 0.5 <= 2 counts
  CHECK(within_tolerance_directional({1.5}, {1.0}, 2.0) == 1.0);
  // wrong direction never counts, no matter how close
  CHECK(within_tolerance_directional({-1.0}, {1.0}, 5.0) == 0.0);
  // equality counts at both tolerances
  CHECK(within_tolerance_directional({3, -4}, {3, -4}, 2.0) == 1.0);
  CHECK(within_tolerance_directional({3, -4}, {3, -4}, 5.0) == 1.0);
  CHECK_THROWS(within_tolerance_directional({1}, {1}, 0.0));
}

TEST_CASE("test_mse: shared Eq. definition and shift identity") {
  CHECK(test_mse({1, 2}, {0, 0}) == 2.5);
  CHECK(test_mse({1.5, 2.5}, {1.5, 2.5}) == 0.0);

  Rng rng(62, "mse");
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng.next_below(20);
    std::vector<double> preds, actuals, shifted;
    const double c = 4.0 * rng.next_double() - 2.0;
    double mean_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      preds.push_back(10.0 * rng.next_double() - 5.0);
      actuals.push_back(10.0 * rng.next_double() - 5.0);
      shifted.push_back(preds.back() + c);
      mean_err += preds.back() - actuals.back();
    }
    mean_err /= static_cast<double>(n);
    const double base = test_mse(preds, actuals);
    const double moved = test_mse(shifted, actuals);
    CHECK(moved == doctest::Approx(base + c * c + 2.0 * c * mean_err).epsilon(1e-9));
  }
}

TEST_CASE("metrics agree with the brute-force oracle on random instances") {
  Rng rng(63, "oracle");
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.next_below(500);
    std::vector<double> preds, actuals;
    for (std::size_t i = 0; i < n; ++i) {
      // mix of magnitudes and exact zeros
      const double p = rng.next_below(20) == 0 ? 0.0 : 20.0 * rng.next_double() - 10.0;
      const double a = rng.next_below(20) == 0 ? 0.0 : 20.0 * rng.next_double() - 10.0;
      preds.push_back(p);
      actuals.push_back(a);
    }
    CHECK(direction_accuracy(preds, actuals) ==
          nfp::testing::oracle_direction_accuracy(preds, actuals));
    CHECK(within_tolerance_directional(preds, actuals, 2.0) ==
          nfp::testing::oracle_within(preds, actuals, 2.0));
    CHECK(within_tolerance_directional(preds, actuals, 5.0) ==
          nfp::testing::oracle_within(preds, actuals, 5.0));
    const double ours = test_mse(preds, actuals);
    const double oracle = nfp::testing::oracle_mse(preds, actuals);
    CHECK(std::fabs(ours - oracle) <= 1e-12 * std::max(1.0, std::fabs(oracle)));
  }
}

TEST_CASE("metric nesting: within_2 <= within_5 <= direction accuracy") {
  Rng rng(64, "nest");
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.next_below(100);
    std::vector<double> preds, actuals;
    for (std::size_t i = 0; i < n; ++i) {
      preds.push_back(16.0 * rng.next_double() - 8.0);
      actuals.push_back(16.0 * rng.next_double() - 8.0);
    }
    const double w2 = within_tolerance_directional(preds, actuals, 2.0);
    const double w5 = within_tolerance_directional(preds, actuals, 5.0);
    const double da = direction_accuracy(preds, actuals);
    CHECK(w2 <= w5);
    CHECK(w5 <= da);
  }
}

TEST_CASE("build_report: regression carries within_*, symbolic omits them") {
  const auto pe = make_per_example({1.0, -2.0, 0.5}, {1.2, -1.0, -0.5});
  const MetricsReport reg = build_report("v2", TargetMode::regression, pe);
  CHECK(reg.within_2pct.has_value());
  CHECK(reg.within_5pct.has_value());
  CHECK(reg.n_test == 3);
  CHECK(reg.version == "v2");

  const MetricsReport sym = build_report("v5", TargetMode::symbolic, pe);
  CHECK_FALSE(sym.within_2pct.has_value());
  CHECK_FALSE(sym.within_5pct.has_value());
  CHECK_THROWS(build_report("v5", TargetMode::symbolic, {}));
}

TEST_CASE("trend_report: identical, negated, and hand-built curves") {
  const auto same = make_per_example({1, -1, 2, 0}, {1, -1, 2, 0});
  const TrendSeries ts = trend_report(same);
  REQUIRE(ts.cum_actual.size() == 4);
  CHECK(ts.cum_actual == std::vector<double>{1, 0, 2, 2});
  CHECK(ts.cum_predicted == ts.cum_actual);
  REQUIRE(ts.pearson_r.has_value());
  CHECK(*ts.pearson_r == doctest::Approx(1.0).epsilon(1e-12));

  const auto negated = make_per_example({-1, 1, -2, 0}, {1, -1, 2, 0});
  const TrendSeries tneg = trend_report(negated);
  REQUIRE(tneg.pearson_r.has_value());
  CHECK(*tneg.pearson_r == doctest::Approx(-1.0).epsilon(1e-12));

  const auto single = make_per_example({1.0}, {2.0});
  CHECK_FALSE(trend_report(single).pearson_r.has_value());

  // flat curves have no defined correlation
  const auto flat = make_per_example({0, 0, 0}, {1, -1, 2});
  CHECK_FALSE(trend_report(flat).pearson_r.has_value());
}

TEST_CASE("trend_report sorts by date then record_ref") {
  std::vector<PerExample> pe;
  PerExample b;
  b.record_ref = 1;
  b.date = Date{2023, 1, 5};
  b.prediction = 2.0;
  b.actual_pct = 2.0;
  PerExample a;
  a.record_ref = 0;
  a.date = Date{2023, 1, 2};
  a.prediction = 1.0;
  a.actual_pct = 1.0;
  pe.push_back(b);
  pe.push_back(a);
  const TrendSeries ts = trend_report(pe);
  CHECK(ts.cum_actual == std::vector<double>{1.0, 3.0});
  CHECK(ts.dates[0].to_string() == "2023-01-02");
}

TEST_CASE("compare_models keeps input order and optional cells") {
  const auto pe = make_per_example({1.0, -2.0}, {1.2, -1.0});
  const MetricsReport reg = build_report("v2", TargetMode::regression, pe);
  const MetricsReport sym = build_report("v5", TargetMode::symbolic, pe);

  const ComparisonTable t = compare_models({reg, sym, reg});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].version == "v2");
  CHECK(t.rows[1].version == "v5");
  CHECK(t.rows[0].within_2pct.has_value());
  CHECK_FALSE(t.rows[1].within_2pct.has_value());
  CHECK(t.rows[0].direction_accuracy == t.rows[2].direction_accuracy);

  CHECK_THROWS(compare_models({reg}));

  const std::string csv = table_to_csv(t);
  CHECK(csv.find("N/A") != std::string::npos);
  CHECK(csv.substr(0, 7) == "version");
}

TEST_CASE("emit: identical reports produce byte-identical JSON") {
  const auto pe = make_per_example({1.25, -0.75, 2.0}, {1.0, -1.0, 3.0});
  const MetricsReport r = build_report("v1", TargetMode::regression, pe);
  CHECK(report_to_json(r) == report_to_json(r));

  const MetricsReport parsed = report_from_json(report_to_json(r));
  CHECK(parsed.version == r.version);
  CHECK(parsed.direction_accuracy == r.direction_accuracy);
  CHECK(parsed.within_2pct == r.within_2pct);
  CHECK(parsed.within_5pct == r.within_5pct);
  CHECK(parsed.test_mse == r.test_mse);
  CHECK(parsed.n_test == r.n_test);
  REQUIRE(parsed.per_example.size() == r.per_example.size());
  CHECK(parsed.per_example[1].prediction == r.per_example[1].prediction);

  const MetricsReport sym = build_report("v5", TargetMode::symbolic, pe);
  const std::string sym_json = report_to_json(sym);
  CHECK(sym_json.find("within_2pct") == std::string::npos);
  CHECK(sym_json.find("within_5pct") == std::string::npos);
}

TEST_CASE("emit: metrics CSV round-trips without value loss") {
  Rng rng(65, "csv");
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> preds, actuals;
    const std::size_t n = 2 + rng.next_below(40);
    for (std::size_t i = 0; i < n; ++i) {
      preds.push_back(9.0 * rng.next_double() - 4.5);
      actuals.push_back(9.0 * rng.next_double() - 4.5);
    }
    const MetricsReport r =
        build_report("v3", TargetMode::regression, make_per_example(preds, actuals));
    const MetricsReport rt = report_from_csv(report_to_csv(r));
    CHECK(rt.direction_accuracy == r.direction_accuracy);
    CHECK(rt.within_2pct == r.within_2pct);
    CHECK(rt.within_5pct == r.within_5pct);
    CHECK(rt.test_mse == r.test_mse);
    CHECK(rt.n_test == r.n_test);
    CHECK(rt.version == r.version);
  }
}

TEST_CASE("emit: trend SVG contains exactly two polyline series") {
  const auto pe = make_per_example({1, -1, 2, 0}, {1, 0.5, -1, 2});
  const TrendSeries ts = trend_report(pe);
  const std::string svg = trend_to_svg(ts);

  std::size_t count = 0, pos = 0;
  while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
    ++count;
    pos += 9;
  }
  CHECK(count == 2);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("version=\"1.1\"") != std::string::npos);
  CHECK(svg.find("legend") == std::string::npos);  // legend is plain text
  CHECK(svg.find("cumulative actual") != std::string::npos);
  CHECK(svg.find("cumulative predicted") != std::string::npos);
}
