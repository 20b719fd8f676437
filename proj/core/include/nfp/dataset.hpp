#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace nfp {

// Strict ISO-8601 calendar date (YYYY-MM-DD, validated against the
// proleptic Gregorian calendar).
struct Date {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  static Date parse(std::string_view text);  // throws on malformed input
  std::string to_string() const;
  Date next_day() const;

  auto operator<=>(const Date&) const = default;
};

// One headline/price observation. pct_change is on the x100 scale:
// (close - open) / open * 100.
struct NewsRecord {
  Date date;
  std::string ticker;
  std::string company;
  std::string headline;
  std::string source;
  double open_price = 0.0;
  double close_price = 0.0;
  double pct_change = 0.0;

  bool operator==(const NewsRecord&) const = default;
};

enum class Provenance { real, synthetic };

struct Dataset {
  std::vector<NewsRecord> records;
  Provenance provenance = Provenance::real;
};

struct SplitSpec {
  double test_fraction = 0.10;
  std::uint64_t seed = 0;
};

// Configuration of the synthetic oracle generator: headlines drawn from one
// of two disjoint word lists, pct_change = (+/-)signal_mean + Gaussian noise
// with the sign matching the chosen list, prices back-solved to stay
// consistent with pct_change.
struct SynthConfig {
  std::size_t n_records = 0;
  std::vector<std::string> positive_lexicon;
  std::vector<std::string> negative_lexicon;
  double signal_mean = 2.0;
  double noise_stddev = 1.0;
  std::uint64_t seed = 0;

  static std::vector<std::string> default_positive_lexicon();
  static std::vector<std::string> default_negative_lexicon();
  void validate() const;
};

double compute_pct_change(double open_price, double close_price);

// Throws std::runtime_error describing the first violated invariant.
void validate_record(const NewsRecord& r);

// CSV schema: header row
//   date,ticker,company,headline,source,open,close,pct_change
// RFC-4180 quoting, UTF-8. pct_change is recomputed from the price columns
// on load; a stored value further than 1e-6 (absolute) from the recomputed
// one is a validation error, and the recomputed value wins.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Test-set size under the round-half-up rule.
std::size_t test_set_size(double test_fraction, std::size_t n);

// Seed-deterministic uniform random partition; original record order is
// preserved inside each part.
std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec);

Dataset generate_synthetic(const SynthConfig& config);

}  // namespace nfp
