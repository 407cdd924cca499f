#pragma once

#include <string>
#include <vector>

namespace gtune {

// Canonical anatomical vocabulary: {left, right, bilateral} x {"", apical,
// upper, middle, lower, costophrenic, pleural, base} with "bilateral base"
// rewritten to "bibasilar", plus lingular, cardiomegaly, and pulmonary.
// 27 terms in total.
const std::vector<std::string>& canonical_locations();

bool is_canonical_location(const std::string& name);

inline const std::vector<std::string> kLateralities = {"left", "right", "bilateral"};
inline const std::vector<std::string> kRegions = {"",           "apical", "upper", "middle",
                                                  "lower",      "costophrenic", "pleural",
                                                  "base"};

}  // namespace gtune
