#include "nfp/modality.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace nfp {

ModalityVersion version_spec(int id) {
  ModalityVersion v;
  v.id = id;
  switch (id) {
    case 1:
      v.include_source = true;
      v.include_company = true;
      break;
    case 2:
      v.include_company = true;
      break;
    case 3:
      v.include_source = true;
      break;
    case 4:
      v.include_source = true;
      v.include_company = true;
      v.include_date = true;
      break;
    case 5:  // v1 fields, symbolic
      v.include_source = true;
      v.include_company = true;
      v.target_mode = TargetMode::symbolic;
      break;
    case 6:  // v4 fields, symbolic
      v.include_source = true;
      v.include_company = true;
      v.include_date = true;
      v.target_mode = TargetMode::symbolic;
      break;
    default:
      throw std::invalid_argument("modality version id must be 1..6, got " +
                                  std::to_string(id));
  }
  return v;
}

std::optional<ModalityVersion> version_from_string(std::string_view text) {
  if (text.size() != 2) return std::nullopt;
  const char v = static_cast<char>(std::tolower(static_cast<unsigned char>(text[0])));
  if (v != 'v' || text[1] < '1' || text[1] > '6') return std::nullopt;
  return version_spec(text[1] - '0');
}

std::string compose_input(const NewsRecord& record, const ModalityVersion& version) {
  std::string out;
  const auto append = [&out](std::string_view part) {
    if (!out.empty()) out += " | ";
    out += part;
  };
  if (version.include_headline) append(record.headline);
  if (version.include_source) append(record.source);
  if (version.include_company) append(record.company);
  if (version.include_date) append(record.date.to_string());
  return out;
}

double make_target(double pct_change, TargetMode mode) {
  if (!std::isfinite(pct_change)) {
    throw std::domain_error("make_target: pct_change must be finite");
  }
  if (mode == TargetMode::regression) return pct_change;
  return pct_change < 0.0 ? -1.0 : 1.0;
}

std::vector<TrainingExample> build_examples(const Dataset& dataset,
                                            const ModalityVersion& version) {
  std::vector<TrainingExample> examples;
  examples.reserve(dataset.records.size());
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const NewsRecord& r = dataset.records[i];
    examples.push_back({compose_input(r, version),
                        make_target(r.pct_change, version.target_mode), i});
  }
  return examples;
}

}  // namespace nfp
