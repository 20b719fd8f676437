#include "nfp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nfp/rng.hpp"

namespace nfp {

namespace {

constexpr std::string_view kHeader =
    "date,ticker,company,headline,source,open,close,pct_change";

bool all_digits(std::string_view s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

double parse_double_field(std::string_view s, const std::string& field) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw std::runtime_error("field '" + field + "': not a finite decimal number: '" +
                             std::string(s) + "'");
  }
  return v;
}

// Prices are written with at most six fraction digits; trailing zeros are
// trimmed so integers stay short.
std::string format_price(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  std::string s(buf);
  const auto dot = s.find('.');
  auto end = s.find_last_not_of('0');
  if (end == dot) --end;
  s.erase(end + 1);
  return s;
}

// Shortest representation that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

bool needs_quoting(std::string_view field) {
  return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

void write_csv_field(std::ostream& out, std::string_view field) {
  if (!needs_quoting(field)) {
    out << field;
    return;
  }
  out << '"';
  for (char c : field) {
    if (c == '"') out << "\"\"";
    else out << c;
  }
  out << '"';
}

// RFC-4180 state-machine parse of a whole file into rows of fields.
// Quoted fields may contain commas, doubled quotes, and line breaks.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_started || !field.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
          row_started = false;
        }
        break;
      default:
        field += c;
        row_started = true;
        break;
    }
  }
  if (in_quotes) throw std::runtime_error("unterminated quoted field");
  if (row_started || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Date Date::parse(std::string_view text) {
  const auto bad = [&] {
    return std::runtime_error("invalid ISO-8601 date: '" + std::string(text) + "'");
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  const std::string_view ys = text.substr(0, 4), ms = text.substr(5, 2),
                         ds = text.substr(8, 2);
  if (!all_digits(ys) || !all_digits(ms) || !all_digits(ds)) throw bad();
  Date d;
  std::from_chars(ys.data(), ys.data() + ys.size(), d.year);
  std::from_chars(ms.data(), ms.data() + ms.size(), d.month);
  std::from_chars(ds.data(), ds.data() + ds.size(), d.day);
  const std::chrono::year_month_day ymd{std::chrono::year{d.year},
                                        std::chrono::month{d.month},
                                        std::chrono::day{d.day}};
  if (!ymd.ok()) throw bad();
  return d;
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", year, month, day);
  return buf;
}

Date Date::next_day() const {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                           std::chrono::day{day}};
  const year_month_day next{sys_days{ymd} + days{1}};
  return Date{static_cast<int>(next.year()), static_cast<unsigned>(next.month()),
              static_cast<unsigned>(next.day())};
}

double compute_pct_change(double open_price, double close_price) {
  if (!std::isfinite(open_price) || !std::isfinite(close_price)) {
    throw std::domain_error("compute_pct_change: prices must be finite");
  }
  if (open_price <= 0.0) {
    throw std::domain_error("compute_pct_change: open price must be > 0");
  }
  return (close_price - open_price) / open_price * 100.0;
}

void validate_record(const NewsRecord& r) {
  if (!std::isfinite(r.open_price) || r.open_price <= 0.0) {
    throw std::runtime_error("field 'open': price must be > 0");
  }
  if (!std::isfinite(r.close_price) || r.close_price <= 0.0) {
    throw std::runtime_error("field 'close': price must be > 0");
  }
  if (r.headline.empty()) {
    throw std::runtime_error("field 'headline': must be non-empty");
  }
  const double recomputed = compute_pct_change(r.open_price, r.close_price);
  const double tol = 1e-9 * std::max(1.0, std::fabs(recomputed));
  if (std::fabs(recomputed - r.pct_change) > tol) {
    throw std::runtime_error("field 'pct_change': inconsistent with prices");
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open dataset file: " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<std::vector<std::string>> rows;
  try {
    rows = parse_csv(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  if (rows.empty()) {
    throw std::runtime_error(path.string() + ": missing header row");
  }
  {
    std::string header;
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
      if (i) header += ',';
      header += rows[0][i];
    }
    if (header != kHeader) {
      throw std::runtime_error(path.string() + ": unexpected header '" + header +
                               "', want '" + std::string(kHeader) + "'");
    }
  }

  Dataset dataset;
  dataset.records.reserve(rows.size() - 1);
  for (std::size_t ri = 1; ri < rows.size(); ++ri) {
    const auto& row = rows[ri];
    const auto fail = [&](const std::string& what) {
      return std::runtime_error(path.string() + ": row " + std::to_string(ri + 1) +
                                ": " + what);
    };
    if (row.size() != 8) {
      throw fail("expected 8 fields, got " + std::to_string(row.size()));
    }
    try {
      NewsRecord r;
      r.date = Date::parse(row[0]);
      r.ticker = row[1];
      r.company = row[2];
      r.headline = row[3];
      r.source = row[4];
      r.open_price = parse_double_field(row[5], "open");
      r.close_price = parse_double_field(row[6], "close");
      const double stored_pct = parse_double_field(row[7], "pct_change");
      if (r.open_price <= 0.0) throw std::runtime_error("field 'open': price must be > 0");
      const double recomputed = compute_pct_change(r.open_price, r.close_price);
      if (std::fabs(recomputed - stored_pct) > 1e-6) {
        throw std::runtime_error(
            "field 'pct_change': stored " + format_double(stored_pct) +
            " disagrees with recomputed " + format_double(recomputed));
      }
      r.pct_change = recomputed;  // the derived quantity wins
      validate_record(r);
      dataset.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
  }
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write dataset file: " + path.string());
  }
  out << kHeader << "\n";
  for (const NewsRecord& r : dataset.records) {
    write_csv_field(out, r.date.to_string());
    out << ',';
    write_csv_field(out, r.ticker);
    out << ',';
    write_csv_field(out, r.company);
    out << ',';
    write_csv_field(out, r.headline);
    out << ',';
    write_csv_field(out, r.source);
    out << ',';
    out << format_price(r.open_price) << ',' << format_price(r.close_price) << ','
        << format_double(r.pct_change) << "\n";
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

std::size_t test_set_size(double test_fraction, std::size_t n) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must be in (0, 1)");
  }
  // Round half up.
  return static_cast<std::size_t>(
      std::floor(test_fraction * static_cast<double>(n) + 0.5));
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec) {
  if (dataset.records.empty()) {
    throw std::invalid_argument("split: dataset is empty");
  }
  const std::size_t n = dataset.records.size();
  const std::size_t n_test = test_set_size(spec.test_fraction, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed, "split");
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng.next_below(i + 1);
    std::swap(order[i], order[j]);
  }

  std::vector<std::size_t> test_idx(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train_idx(order.begin() + n_test, order.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  Dataset train, test;
  train.provenance = dataset.provenance;
  test.provenance = dataset.provenance;
  train.records.reserve(train_idx.size());
  test.records.reserve(test_idx.size());
  for (std::size_t i : train_idx) train.records.push_back(dataset.records[i]);
  for (std::size_t i : test_idx) test.records.push_back(dataset.records[i]);
  return {std::move(train), std::move(test)};
}

std::vector<std::string> SynthConfig::default_positive_lexicon() {
  return {"surges", "rally",  "beats",  "record", "upgrade",
          "growth", "profit", "strong", "soars",  "bullish"};
}

std::vector<std::string> SynthConfig::default_negative_lexicon() {
  return {"plunges", "slump", "misses",  "lawsuit", "downgrade",
          "loss",    "weak",  "layoffs", "tumbles", "bearish"};
}

void SynthConfig::validate() const {
  if (positive_lexicon.empty() || negative_lexicon.empty()) {
    throw std::invalid_argument("synth config: lexicons must be non-empty");
  }
  for (const auto& w : positive_lexicon) {
    if (std::find(negative_lexicon.begin(), negative_lexicon.end(), w) !=
        negative_lexicon.end()) {
      throw std::invalid_argument("synth config: lexicons must be disjoint ('" + w +
                                  "' is in both)");
    }
  }
  if (!(noise_stddev >= 0.0) || !std::isfinite(noise_stddev)) {
    throw std::invalid_argument("synth config: noise_stddev must be >= 0");
  }
  if (!(signal_mean >= 0.0) || !std::isfinite(signal_mean)) {
    throw std::invalid_argument("synth config: signal_mean must be >= 0");
  }
}

namespace {

// Round to the 6-fraction-digit decimal the CSV format stores, by going
// through the exact text the writer would emit. Keeps save/load a fixed
// point for generated prices.
double quantize_price(double v) {
  const std::string s = format_price(v);
  double out = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), out);
  return out;
}

struct SynthTicker {
  const char* ticker;
  const char* company;
};

constexpr SynthTicker kSynthTickers[] = {
    {"ALFA", "Alfa Systems"},    {"BRVO", "Bravo Industries"},
    {"CHLI", "Chili Labs"},      {"DLTA", "Delta Logistics"},
    {"ECHO", "Echo Energy"},     {"FXTR", "Foxtrot Retail"},
    {"GOLF", "Golf Capital"},    {"HTEL", "Hotel Networks"},
};

constexpr const char* kSynthSources[] = {"Synthetic Wire", "Desk Journal",
                                         "Model Daily", "Oracle Post"};

constexpr double kSynthOpens[] = {25.0, 50.0, 100.0, 200.0, 400.0};

}  // namespace

Dataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed, "synth");

  Dataset dataset;
  dataset.provenance = Provenance::synthetic;
  dataset.records.reserve(config.n_records);

  Date date{2022, 1, 3};
  for (std::size_t i = 0; i < config.n_records; ++i) {
    const bool positive = rng.next_below(2) == 0;
    const auto& lexicon = positive ? config.positive_lexicon : config.negative_lexicon;

    const std::size_t n_words = 3 + rng.next_below(4);
    std::string headline;
    for (std::size_t w = 0; w < n_words; ++w) {
      if (w) headline += ' ';
      headline += lexicon[rng.next_below(lexicon.size())];
    }

    const double sign = positive ? 1.0 : -1.0;
    double pct = sign * config.signal_mean + config.noise_stddev * rng.next_normal();
    // A draw below -95% would push close toward or past zero; redraw.
    while (pct <= -95.0) {
      pct = sign * config.signal_mean + config.noise_stddev * rng.next_normal();
    }

    const double open = kSynthOpens[rng.next_below(5)];
    const double close = quantize_price(open + open * (pct / 100.0));

    const auto& st = kSynthTickers[i % std::size(kSynthTickers)];
    NewsRecord r;
    r.date = date;
    r.ticker = st.ticker;
    r.company = st.company;
    r.headline = std::move(headline);
    r.source = kSynthSources[rng.next_below(std::size(kSynthSources))];
    r.open_price = open;
    r.close_price = close;
    r.pct_change = compute_pct_change(open, close);
    validate_record(r);
    dataset.records.push_back(std::move(r));

    date = date.next_day();
  }
  return dataset;
}

}  // namespace nfp
