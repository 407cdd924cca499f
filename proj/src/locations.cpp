#include "gtune/locations.hpp"

#include <algorithm>

namespace gtune {

const std::vector<std::string>& canonical_locations() {
    static const std::vector<std::string> terms = [] {
        std::vector<std::string> out;
        for (const auto& lat : kLateralities) {
            for (const auto& region : kRegions) {
                std::string term = region.empty() ? lat : lat + " " + region;
                if (term == "bilateral base") term = "bibasilar";
                out.push_back(term);
            }
        }
        out.push_back("lingular");
        out.push_back("cardiomegaly");
        out.push_back("pulmonary");
        return out;
    }();
    return terms;
}

bool is_canonical_location(const std::string& name) {
    const auto& terms = canonical_locations();
    return std::find(terms.begin(), terms.end(), name) != terms.end();
}

}  // namespace gtune
