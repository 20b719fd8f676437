#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nfp/dataset.hpp"

namespace nfp {

enum class TargetMode { regression, symbolic };

// One of the six input/target configurations. The headline is always
// included; versions differ in which extra fields are serialized and in
// whether the target is the raw percent change or its sign.
struct ModalityVersion {
  int id = 1;  // 1..6
  bool include_headline = true;
  bool include_source = false;
  bool include_company = false;
  bool include_date = false;
  TargetMode target_mode = TargetMode::regression;

  std::string name() const { return "v" + std::to_string(id); }
};

// The fixed version table:
//   v1 headline+source+company, regression
//   v2 headline+company,        regression
//   v3 headline+source,         regression
//   v4 headline+source+company+date, regression
//   v5 = v1 fields, symbolic
//   v6 = v4 fields, symbolic
ModalityVersion version_spec(int id);

// Accepts "v1".."v6", case-insensitive.
std::optional<ModalityVersion> version_from_string(std::string_view text);

// Included fields serialized in the fixed order headline, source, company,
// date, joined by " | ". Excluded fields leave no trace.
std::string compose_input(const NewsRecord& record, const ModalityVersion& version);

// regression: identity. symbolic: +1 for pct > 0, -1 for pct < 0, and +1
// for pct == 0 (the tie-break shared with evaluation).
double make_target(double pct_change, TargetMode mode);

struct TrainingExample {
  std::string input_text;
  double target = 0.0;
  std::size_t record_ref = 0;
};

std::vector<TrainingExample> build_examples(const Dataset& dataset,
                                            const ModalityVersion& version);

}  // namespace nfp
