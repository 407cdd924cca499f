#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gtune/tensor.hpp"

namespace gtune::atlas {

inline constexpr double kReferenceResolution = 512.0;

struct BBox {
    std::string image_id;
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    std::string location;

    void validate(double max_extent = kReferenceResolution) const;
};

// Axis-aligned 2D Gaussian in reference-resolution pixels.
struct Gaussian2D {
    double mu_x = 0, mu_y = 0, sigma_x = 0, sigma_y = 0;
};

// mu = box midpoint, sigma = extent / 6 per axis (the +-3 sigma rule).
Gaussian2D bbox_stats(const BBox& b);

// location -> Gaussian lookup table at the 512 reference resolution.
class Atlas {
  public:
    void insert(const std::string& location, const Gaussian2D& g);
    const Gaussian2D& lookup(const std::string& location) const;
    bool contains(const std::string& location) const;
    std::vector<std::string> locations() const;
    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, Gaussian2D>& entries() const { return entries_; }

    // text format for diffability: location TAB mu_x TAB mu_y TAB sigma_x TAB sigma_y
    void save(const std::string& path) const;
    static Atlas load(const std::string& path);

  private:
    std::map<std::string, Gaussian2D> entries_;
};

// Canonical fragments without annotations of their own reuse a nearby zone.
const std::map<std::string, std::string>& default_fallback();

// Source-annotation region names feeding one canonical location. Bilateral
// terms pool both sides; "pulmonary" pools both whole-lung boxes.
std::vector<std::string> source_regions(const std::string& canonical,
                                        const std::map<std::string, std::string>& fallback);

// Per-location arithmetic mean of box stats over all 27 canonical terms.
// Throws DataError naming any location left without boxes.
Atlas build_atlas(const std::vector<BBox>& boxes,
                  const std::map<std::string, std::string>& fallback = default_fallback());

// Unnormalized density exp(-(dx^2/2sx^2 + dy^2/2sy^2)) sampled at pixel
// centers, with mu and sigma rescaled from the reference resolution. Analytic
// peak is 1 at (mu_x, mu_y).
Tensor render_gaussian(const Gaussian2D& g, std::size_t height, std::size_t width,
                       double reference = kReferenceResolution);

// 1 where grid > eps, else 0.
Tensor gaussian_mask(const Tensor& grid, double eps);

}  // namespace gtune::atlas
