#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtune/tensor.hpp"

namespace gtune::eval {

struct Box {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

enum class Provenance { Raw, Normalized, Otsu };

// 2D map in [0, 1] once normalized; min-max normalization maps a constant
// input to all zeros.
struct Heatmap {
    Tensor values;
    Provenance provenance = Provenance::Raw;
};

struct EvalRecord {
    std::string image_id;
    std::string class_name;
    std::vector<Box> boxes;
    std::size_t height = 0, width = 0;
    std::string heatmap_path;  // relative to the records file
    Heatmap heatmap;

    void validate() const;
};

struct EvalConfig {
    bool otsu = false;
    int resamples = 10000;
    double level = 0.95;
    std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5};
    std::uint64_t seed = 0;
    int workers = 1;
};

struct ClassReport {
    std::string class_name;
    std::size_t n = 0;
    double cnr_mean = 0, cnr_lo = 0, cnr_hi = 0;
    double miou_mean = 0, miou_lo = 0, miou_hi = 0;
    std::size_t cnr_missing = 0;  // constant heatmaps: CNR undefined
    std::size_t cnr_capped = 0;   // denominator guard engaged
};

struct EvalReport {
    std::vector<ClassReport> classes;
    double avg_cnr = 0, avg_miou = 0;  // macro average across classes
    std::size_t records = 0;
    std::vector<std::string> warnings;
};

// Bilinear upsample (half-pixel centers, corner-aligned=false) to the
// smallest image dimension, center-pad with zeros to height x width, min-max
// normalize, then optionally zero everything below the Otsu threshold.
Heatmap postprocess(const Tensor& raw, std::size_t height, std::size_t width, bool use_otsu);

Tensor bilinear_resize(const Tensor& src, std::size_t out_h, std::size_t out_w);
Tensor min_max_normalize(const Tensor& t);

// Pixel membership: integer pixel (x, y) is inside a box when its index lies
// in [round(min), round(max)) per axis.
std::vector<std::uint8_t> box_mask(const std::vector<Box>& boxes, std::size_t height,
                                   std::size_t width);

struct CnrResult {
    double value = 0;
    bool capped = false;
};

// (mu_in - mu_out) / sqrt(var_in + var_out) with population variances; a
// vanishing denominator returns sign(mu_in - mu_out) * 100 and sets `capped`.
CnrResult cnr_region(const Tensor& values, const std::vector<std::uint8_t>& region);
double cnr(const Heatmap& h, const std::vector<Box>& boxes);

// Mean IoU of {v >= threshold} against the box union over the thresholds.
double miou(const Heatmap& h, const std::vector<Box>& boxes,
            const std::vector<double>& thresholds = {0.1, 0.2, 0.3, 0.4, 0.5});

// 256-bin histogram over [0, 1]; returns the bin edge k/256 maximizing the
// between-class variance, lowest edge on ties. Values must lie in [0, 1].
double otsu_threshold(const Tensor& values);

// Percentile bootstrap over resampled means, deterministic given the seed.
std::pair<double, double> bootstrap_ci(const std::vector<double>& values, int resamples = 10000,
                                       double level = 0.95, std::uint64_t seed = 0);

EvalReport evaluate(const std::vector<EvalRecord>& records, const EvalConfig& cfg);

// Upper-bound baseline: per-box Gaussian with sigma = extent / 3, max-combined
// and min-max normalized.
Heatmap oracle_heatmap(const std::vector<Box>& boxes, std::size_t height, std::size_t width);

std::string format_report(const EvalReport& report);

}  // namespace gtune::eval
