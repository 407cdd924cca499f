#include "gtune/synth.hpp"

#include <algorithm>

#include "gtune/errors.hpp"

namespace gtune::synth {

double w2_sq(const atlas::Gaussian2D& a, const atlas::Gaussian2D& b) {
    const double dmx = a.mu_x - b.mu_x;
    const double dmy = a.mu_y - b.mu_y;
    const double dsx = a.sigma_x - b.sigma_x;
    const double dsy = a.sigma_y - b.sigma_y;
    return dmx * dmx + dmy * dmy + dsx * dsx + dsy * dsy;
}

MatchResult match_box(const atlas::BBox& box, const atlas::Atlas& atlas) {
    if (atlas.size() == 0) throw ValidationError("match_box: empty atlas");
    const atlas::Gaussian2D stats = atlas::bbox_stats(box);

    MatchResult result;
    result.box = box;
    bool first = true;
    for (const auto& [name, g] : atlas.entries()) {
        const double d = w2_sq(stats, g);
        // map iteration is name-sorted, so strict < keeps the first name on ties
        if (first || d < result.distance) {
            if (!first) result.runner_up = {result.matched_location, result.distance};
            result.matched_location = name;
            result.distance = d;
            first = false;
        } else if (!result.runner_up || d < result.runner_up->second) {
            result.runner_up = {name, d};
        }
    }
    return result;
}

SynthStats synth_prompts(const std::vector<SynthInput>& records, const atlas::Atlas& atlas,
                         std::vector<curation::CuratedSample>& out,
                         std::vector<std::string>* notes) {
    SynthStats stats;
    for (const auto& rec : records) {
        ++stats.records;
        if (rec.boxes.empty()) {
            ++stats.skipped;
            if (notes) notes->push_back("image " + rec.image_id + " has no boxes, skipped");
            continue;
        }
        if (rec.height < 1 || rec.width < 1) {
            throw DataError("image " + rec.image_id + " has no size");
        }
        const double sx = atlas::kReferenceResolution / static_cast<double>(rec.width);
        const double sy = atlas::kReferenceResolution / static_cast<double>(rec.height);
        std::vector<std::string> locations;
        for (const auto& b : rec.boxes) {
            atlas::BBox scaled;
            scaled.image_id = rec.image_id;
            scaled.x_min = b.x_min * sx;
            scaled.x_max = b.x_max * sx;
            scaled.y_min = b.y_min * sy;
            scaled.y_max = b.y_max * sy;
            scaled.location = "";
            const MatchResult match = match_box(scaled, atlas);
            if (std::find(locations.begin(), locations.end(), match.matched_location) ==
                locations.end()) {
                locations.push_back(match.matched_location);
            }
        }
        curation::CuratedSample sample;
        sample.image_id = rec.image_id;
        sample.locations = locations;
        sample.pathology = rec.class_name;
        sample.prompt = curation::build_prompt(locations, rec.class_name);
        out.push_back(std::move(sample));
        ++stats.samples;
    }
    return stats;
}

}  // namespace gtune::synth
