#include "gtune/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "gtune/errors.hpp"
#include "gtune/locations.hpp"

namespace gtune::atlas {

void BBox::validate(double max_extent) const {
    if (!(x_min < x_max) || !(y_min < y_max)) {
        throw DataError("degenerate box for '" + location + "' (" + image_id + ")");
    }
    if (x_min < 0 || y_min < 0 || x_max > max_extent || y_max > max_extent) {
        throw DataError("box outside [0, " + std::to_string(max_extent) + "] for '" + location +
                        "' (" + image_id + ")");
    }
}

Gaussian2D bbox_stats(const BBox& b) {
    b.validate();
    Gaussian2D g;
    g.mu_x = (b.x_min + b.x_max) / 2.0;
    g.mu_y = (b.y_min + b.y_max) / 2.0;
    g.sigma_x = (b.x_max - b.x_min) / 6.0;
    g.sigma_y = (b.y_max - b.y_min) / 6.0;
    return g;
}

void Atlas::insert(const std::string& location, const Gaussian2D& g) {
    if (!(g.sigma_x > 0) || !(g.sigma_y > 0)) {
        throw DataError("non-positive sigma for '" + location + "'");
    }
    entries_[location] = g;
}

const Gaussian2D& Atlas::lookup(const std::string& location) const {
    auto it = entries_.find(location);
    if (it == entries_.end()) throw DataError("location not in atlas: '" + location + "'");
    return it->second;
}

bool Atlas::contains(const std::string& location) const {
    return entries_.find(location) != entries_.end();
}

std::vector<std::string> Atlas::locations() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, g] : entries_) out.push_back(name);
    return out;
}

void Atlas::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    char line[256];
    for (const auto& [name, g] : entries_) {
        std::snprintf(line, sizeof(line), "%.17g\t%.17g\t%.17g\t%.17g", g.mu_x, g.mu_y, g.sigma_x,
                      g.sigma_y);
        out << name << "\t" << line << "\n";
    }
}

Atlas Atlas::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open atlas file: " + path);
    Atlas atlas;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t')) cells.push_back(cell);
        if (cells.size() != 5) {
            throw DataError("atlas line " + std::to_string(lineno) + ": expected 5 fields");
        }
        Gaussian2D g;
        try {
            g.mu_x = std::stod(cells[1]);
            g.mu_y = std::stod(cells[2]);
            g.sigma_x = std::stod(cells[3]);
            g.sigma_y = std::stod(cells[4]);
        } catch (const std::exception&) {
            throw DataError("atlas line " + std::to_string(lineno) + ": bad number");
        }
        atlas.insert(cells[0], g);
    }
    return atlas;
}

const std::map<std::string, std::string>& default_fallback() {
    static const std::map<std::string, std::string> fb = {
        {"base", "lower lung zone"},
        {"pleural", "lower lung zone"},
        {"lingular", "left mid lung zone"},
    };
    return fb;
}

namespace {

std::string zone_for_region(const std::string& region,
                            const std::map<std::string, std::string>& fallback) {
    auto fb = fallback.find(region);
    if (fb != fallback.end()) return fb->second;
    if (region.empty()) return "lung";
    if (region == "apical") return "apical zone";
    if (region == "upper") return "upper lung zone";
    if (region == "middle") return "mid lung zone";
    if (region == "lower") return "lower lung zone";
    if (region == "costophrenic") return "costophrenic angle";
    throw DataError("no source zone for region '" + region + "'");
}

}  // namespace

std::vector<std::string> source_regions(const std::string& canonical,
                                        const std::map<std::string, std::string>& fallback) {
    if (canonical == "cardiomegaly") return {"cardiac silhouette"};
    if (canonical == "pulmonary") return {"left lung", "right lung"};
    if (canonical == "lingular") {
        auto it = fallback.find("lingular");
        if (it == fallback.end()) throw DataError("no fallback for 'lingular'");
        return {it->second};
    }
    std::string laterality = canonical;
    std::string region;
    if (auto sp = canonical.find(' '); sp != std::string::npos) {
        laterality = canonical.substr(0, sp);
        region = canonical.substr(sp + 1);
    }
    if (canonical == "bibasilar") {
        laterality = "bilateral";
        region = "base";
    }
    std::vector<std::string> sides;
    if (laterality == "bilateral") {
        sides = {"left", "right"};
    } else if (laterality == "left" || laterality == "right") {
        sides = {laterality};
    } else {
        throw DataError("not a canonical location: '" + canonical + "'");
    }
    const std::string zone = zone_for_region(region, fallback);
    std::vector<std::string> out;
    for (const auto& side : sides) out.push_back(side + " " + zone);
    return out;
}

Atlas build_atlas(const std::vector<BBox>& boxes,
                  const std::map<std::string, std::string>& fallback) {
    std::map<std::string, std::vector<Gaussian2D>> by_name;
    for (const auto& b : boxes) by_name[b.location].push_back(bbox_stats(b));

    Atlas atlas;
    for (const auto& canonical : canonical_locations()) {
        std::vector<Gaussian2D> pool;
        auto gather = [&](const std::string& name) {
            auto it = by_name.find(name);
            if (it == by_name.end()) return;
            pool.insert(pool.end(), it->second.begin(), it->second.end());
        };
        gather(canonical);  // boxes may carry the canonical term directly
        for (const auto& src : source_regions(canonical, fallback)) {
            if (src != canonical) gather(src);
        }
        if (pool.empty()) {
            throw DataError("atlas: no boxes resolve to location '" + canonical + "'");
        }
        // canonical summation order keeps the build permutation-invariant bitwise
        std::sort(pool.begin(), pool.end(), [](const Gaussian2D& a, const Gaussian2D& b) {
            return std::tie(a.mu_x, a.mu_y, a.sigma_x, a.sigma_y) <
                   std::tie(b.mu_x, b.mu_y, b.sigma_x, b.sigma_y);
        });
        Gaussian2D acc;
        for (const auto& g : pool) {
            acc.mu_x += g.mu_x;
            acc.mu_y += g.mu_y;
            acc.sigma_x += g.sigma_x;
            acc.sigma_y += g.sigma_y;
        }
        const auto n = static_cast<double>(pool.size());
        atlas.insert(canonical, {acc.mu_x / n, acc.mu_y / n, acc.sigma_x / n, acc.sigma_y / n});
    }
    return atlas;
}

Tensor render_gaussian(const Gaussian2D& g, std::size_t height, std::size_t width,
                       double reference) {
    if (height < 2 || width < 2) throw ValidationError("render_gaussian: resolution below 2x2");
    if (!(g.sigma_x > 0) || !(g.sigma_y > 0)) throw ValidationError("render_gaussian: sigma <= 0");
    const double sx = static_cast<double>(width) / reference;
    const double sy = static_cast<double>(height) / reference;
    const double mx = g.mu_x * sx, my = g.mu_y * sy;
    const double vx = 2.0 * (g.sigma_x * sx) * (g.sigma_x * sx);
    const double vy = 2.0 * (g.sigma_y * sy) * (g.sigma_y * sy);
    Tensor out = Tensor::zeros({height, width});
    for (std::size_t y = 0; y < height; ++y) {
        const double dy = (static_cast<double>(y) + 0.5) - my;
        for (std::size_t x = 0; x < width; ++x) {
            const double dx = (static_cast<double>(x) + 0.5) - mx;
            out.at2(y, x) = static_cast<float>(std::exp(-(dx * dx / vx + dy * dy / vy)));
        }
    }
    return out;
}

Tensor gaussian_mask(const Tensor& grid, double eps) {
    if (!(eps > 0)) throw ValidationError("gaussian_mask: eps must be positive");
    Tensor out = Tensor::zeros(grid.shape);
    for (std::size_t i = 0; i < grid.numel(); ++i) {
        out.data[i] = grid.data[i] > eps ? 1.0f : 0.0f;
    }
    return out;
}

}  // namespace gtune::atlas
