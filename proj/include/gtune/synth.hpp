#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gtune/atlas.hpp"
#include "gtune/curation.hpp"
#include "gtune/eval.hpp"

namespace gtune::synth {

struct MatchResult {
    atlas::BBox box;
    std::string matched_location;
    double distance = 0.0;
    std::optional<std::pair<std::string, double>> runner_up;
};

// Squared 2-Wasserstein distance in its diagonal parameter form: the sum of
// squared differences of (mu_x, mu_y, sigma_x, sigma_y). The full Bures cross
// terms are deliberately absent.
double w2_sq(const atlas::Gaussian2D& a, const atlas::Gaussian2D& b);

// Argmin over atlas entries; ties break to the lexicographically first name.
MatchResult match_box(const atlas::BBox& box, const atlas::Atlas& atlas);

struct SynthInput {
    std::string image_id;
    std::string class_name;
    std::vector<eval::Box> boxes;
    std::size_t height = 0, width = 0;
};

struct SynthStats {
    std::size_t records = 0;
    std::size_t skipped = 0;  // images without usable boxes
    std::size_t samples = 0;
};

// One prompt per image: matched locations (deduplicated, stable order) bound
// with " <and> ", then the class name. Boxes are rescaled to the reference
// resolution before matching.
SynthStats synth_prompts(const std::vector<SynthInput>& records, const atlas::Atlas& atlas,
                         std::vector<curation::CuratedSample>& out,
                         std::vector<std::string>* notes = nullptr);

}  // namespace gtune::synth
