#include "gtune/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <thread>

#include "gtune/errors.hpp"
#include "gtune/rng.hpp"

namespace gtune::eval {

void EvalRecord::validate() const {
    if (height < 2 || width < 2) throw DataError("record " + image_id + ": image below 2x2");
    if (boxes.empty()) throw DataError("record " + image_id + ": no ground-truth boxes");
    for (const auto& b : boxes) {
        if (!(b.x_min < b.x_max) || !(b.y_min < b.y_max)) {
            throw DataError("record " + image_id + ": degenerate box");
        }
        if (b.x_min < 0 || b.y_min < 0 || b.x_max > static_cast<double>(width) ||
            b.y_max > static_cast<double>(height)) {
            throw DataError("record " + image_id + ": box outside the image");
        }
    }
}

Tensor bilinear_resize(const Tensor& src, std::size_t out_h, std::size_t out_w) {
    if (src.rank() != 2) throw ValidationError("bilinear_resize: need a 2D map");
    const std::size_t in_h = src.shape[0], in_w = src.shape[1];
    if (in_h < 1 || in_w < 1 || out_h < 1 || out_w < 1) {
        throw ValidationError("bilinear_resize: empty size");
    }
    Tensor out = Tensor::zeros({out_h, out_w});
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(in_h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(in_w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double v = (1.0 - wy) * ((1.0 - wx) * src.at2(y0, x0) + wx * src.at2(y0, x1)) +
                             wy * ((1.0 - wx) * src.at2(y1, x0) + wx * src.at2(y1, x1));
            out.at2(y, x) = static_cast<float>(v);
        }
    }
    return out;
}

Tensor min_max_normalize(const Tensor& t) {
    if (t.numel() == 0) throw ValidationError("min_max_normalize: empty tensor");
    float lo = t.data[0], hi = t.data[0];
    for (float v : t.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Tensor out = Tensor::zeros(t.shape);
    if (hi == lo) return out;  // constant map: all zeros
    const double span = static_cast<double>(hi) - static_cast<double>(lo);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        out.data[i] = static_cast<float>((t.data[i] - lo) / span);
    }
    return out;
}

Heatmap postprocess(const Tensor& raw, std::size_t height, std::size_t width, bool use_otsu) {
    if (raw.rank() != 2 || raw.shape[0] != raw.shape[1]) {
        throw ValidationError("postprocess: raw map must be square, got " + raw.shape_str());
    }
    if (raw.shape[0] < 2) throw ValidationError("postprocess: raw map below 2x2");
    if (height < 2 || width < 2) throw ValidationError("postprocess: image below 2x2");
    raw.require_finite("raw heatmap");

    const std::size_t m = std::min(height, width);
    const Tensor square = bilinear_resize(raw, m, m);

    Tensor padded = Tensor::zeros({height, width});
    const std::size_t top = (height - m) / 2;
    const std::size_t left = (width - m) / 2;
    for (std::size_t y = 0; y < m; ++y) {
        for (std::size_t x = 0; x < m; ++x) {
            padded.at2(top + y, left + x) = square.at2(y, x);
        }
    }

    Heatmap h;
    h.values = min_max_normalize(padded);
    h.provenance = Provenance::Normalized;
    if (use_otsu) {
        bool constant = true;
        for (float v : h.values.data) constant = constant && v == h.values.data[0];
        if (!constant) {
            const double thr = otsu_threshold(h.values);
            for (auto& v : h.values.data) {
                if (v < thr) v = 0.0f;
            }
            h.provenance = Provenance::Otsu;
        }
    }
    return h;
}

std::vector<std::uint8_t> box_mask(const std::vector<Box>& boxes, std::size_t height,
                                   std::size_t width) {
    std::vector<std::uint8_t> mask(height * width, 0);
    for (const auto& b : boxes) {
        const auto x0 = static_cast<std::size_t>(std::max(0.0, std::round(b.x_min)));
        const auto y0 = static_cast<std::size_t>(std::max(0.0, std::round(b.y_min)));
        const auto x1 = std::min(width, static_cast<std::size_t>(std::max(0.0, std::round(b.x_max))));
        const auto y1 =
            std::min(height, static_cast<std::size_t>(std::max(0.0, std::round(b.y_max))));
        for (std::size_t y = y0; y < y1; ++y) {
            for (std::size_t x = x0; x < x1; ++x) mask[y * width + x] = 1;
        }
    }
    return mask;
}

CnrResult cnr_region(const Tensor& values, const std::vector<std::uint8_t>& region) {
    if (values.numel() != region.size()) throw ValidationError("cnr: region size mismatch");
    double sum_in = 0, sumsq_in = 0, sum_out = 0, sumsq_out = 0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < region.size(); ++i) {
        const double v = values.data[i];
        if (region[i]) {
            sum_in += v;
            sumsq_in += v * v;
            ++n_in;
        } else {
            sum_out += v;
            sumsq_out += v * v;
            ++n_out;
        }
    }
    if (n_in == 0 || n_out == 0) {
        throw ValidationError("cnr: box union is empty or covers the whole image");
    }
    const double mu_in = sum_in / n_in, mu_out = sum_out / n_out;
    const double var_in = std::max(0.0, sumsq_in / n_in - mu_in * mu_in);
    const double var_out = std::max(0.0, sumsq_out / n_out - mu_out * mu_out);
    const double denom_sq = var_in + var_out;
    CnrResult r;
    if (denom_sq < 1e-12) {
        // binary-like maps: report a capped value instead of dividing by ~0
        r.value = (mu_in > mu_out ? 1.0 : mu_in < mu_out ? -1.0 : 0.0) * 100.0;
        r.capped = true;
        return r;
    }
    r.value = (mu_in - mu_out) / std::sqrt(denom_sq);
    return r;
}

double cnr(const Heatmap& h, const std::vector<Box>& boxes) {
    if (h.values.rank() != 2) throw ValidationError("cnr: heatmap must be 2D");
    return cnr_region(h.values, box_mask(boxes, h.values.shape[0], h.values.shape[1])).value;
}

double miou(const Heatmap& h, const std::vector<Box>& boxes,
            const std::vector<double>& thresholds) {
    if (h.values.rank() != 2) throw ValidationError("miou: heatmap must be 2D");
    if (thresholds.empty()) throw ValidationError("miou: no thresholds");
    const auto mask = box_mask(boxes, h.values.shape[0], h.values.shape[1]);
    double acc = 0.0;
    for (double thr : thresholds) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            const bool on = h.values.data[i] >= thr;
            const bool in_box = mask[i] != 0;
            inter += (on && in_box) ? 1 : 0;
            uni += (on || in_box) ? 1 : 0;
        }
        acc += uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return acc / static_cast<double>(thresholds.size());
}

double otsu_threshold(const Tensor& values) {
    if (values.numel() < 2) throw ValidationError("otsu: need at least 2 values");
    constexpr int kBins = 256;
    std::vector<std::size_t> count(kBins, 0);
    std::vector<double> value_sum(kBins, 0.0);
    bool constant = true;
    for (float v : values.data) {
        if (v < 0.0f || v > 1.0f) throw ValidationError("otsu: values must lie in [0, 1]");
        constant = constant && v == values.data[0];
        int bin = static_cast<int>(v * kBins);
        bin = std::min(bin, kBins - 1);
        ++count[bin];
        value_sum[bin] += v;
    }
    if (constant) throw ValidationError("otsu: constant input has no threshold");

    const auto total = static_cast<double>(values.numel());
    double total_sum = 0.0;
    for (double s : value_sum) total_sum += s;

    // candidates are the interior bin edges k/256; class 0 holds bins < k
    double best = -1.0;
    int best_k = 1;
    double w0 = 0.0, sum0 = 0.0;
    for (int k = 1; k < kBins; ++k) {
        w0 += static_cast<double>(count[k - 1]);
        sum0 += value_sum[k - 1];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (total_sum - sum0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_k = k;
        }
    }
    return static_cast<double>(best_k) / kBins;
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& values, int resamples,
                                       double level, std::uint64_t seed) {
    if (values.empty()) throw ValidationError("bootstrap_ci: empty sample");
    if (resamples < 1) throw ValidationError("bootstrap_ci: resamples must be >= 1");
    if (!(level > 0.0 && level < 1.0)) {
        throw ValidationError("bootstrap_ci: level must be in (0, 1)");
    }
    Rng rng(seed);
    std::vector<double> means(resamples);
    const std::size_t n = values.size();
    for (int r = 0; r < resamples; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += values[rng.index(n)];
        means[r] = acc / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double p) {
        const double h = p * static_cast<double>(means.size() - 1);
        const auto lo = static_cast<std::size_t>(h);
        const std::size_t hi = std::min(lo + 1, means.size() - 1);
        const double frac = h - static_cast<double>(lo);
        return means[lo] * (1.0 - frac) + means[hi] * frac;
    };
    const double alpha = (1.0 - level) / 2.0;
    return {quantile(alpha), quantile(1.0 - alpha)};
}

namespace {

struct RecordMetrics {
    double cnr = 0.0;
    double miou = 0.0;
    bool cnr_missing = false;
    bool cnr_capped = false;
};

RecordMetrics measure(const EvalRecord& rec, const EvalConfig& cfg) {
    rec.validate();
    const Tensor& values = rec.heatmap.values;
    if (values.shape != std::vector<std::size_t>{rec.height, rec.width}) {
        throw DataError("record " + rec.image_id + ": heatmap " + values.shape_str() +
                        " does not match the image size");
    }
    RecordMetrics m;
    bool constant = true;
    for (float v : values.data) constant = constant && v == values.data[0];
    const auto mask = box_mask(rec.boxes, rec.height, rec.width);
    if (constant) {
        m.cnr_missing = true;  // undefined denominator, reported as missing
    } else {
        const CnrResult r = cnr_region(values, mask);
        m.cnr = r.value;
        m.cnr_capped = r.capped;
    }
    Heatmap h;
    h.values = values;
    h.provenance = Provenance::Normalized;
    m.miou = miou(h, rec.boxes, cfg.thresholds);
    return m;
}

double mean_of(const std::vector<double>& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

}  // namespace

EvalReport evaluate(const std::vector<EvalRecord>& records, const EvalConfig& cfg) {
    EvalReport report;
    report.records = records.size();
    if (records.empty()) return report;

    std::vector<RecordMetrics> metrics(records.size());
    const int workers = std::max(1, cfg.workers);
    if (workers == 1) {
        for (std::size_t i = 0; i < records.size(); ++i) metrics[i] = measure(records[i], cfg);
    } else {
        // pure per-record work; order restored by index
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::vector<std::string> errors(records.size());
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < records.size();
                     i = next.fetch_add(1)) {
                    try {
                        metrics[i] = measure(records[i], cfg);
                    } catch (const std::exception& e) {
                        errors[i] = e.what();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors) {
            if (!e.empty()) throw DataError(e);
        }
    }

    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) {
        by_class[records[i].class_name].push_back(i);
    }

    double cnr_acc = 0.0, miou_acc = 0.0;
    std::size_t cnr_classes = 0;
    for (const auto& [name, idx] : by_class) {
        ClassReport cls;
        cls.class_name = name;
        cls.n = idx.size();
        std::vector<double> cnrs, mious;
        for (std::size_t i : idx) {
            if (metrics[i].cnr_missing) {
                ++cls.cnr_missing;
            } else {
                cnrs.push_back(metrics[i].cnr);
                cls.cnr_capped += metrics[i].cnr_capped ? 1 : 0;
            }
            mious.push_back(metrics[i].miou);
        }
        if (cnrs.empty()) {
            report.warnings.push_back("class " + name + ": no valid CNR values");
        } else {
            cls.cnr_mean = mean_of(cnrs);
            std::tie(cls.cnr_lo, cls.cnr_hi) = bootstrap_ci(
                cnrs, cfg.resamples, cfg.level, stage_seed(cfg.seed, "bootstrap:" + name + ":cnr"));
            cnr_acc += cls.cnr_mean;
            ++cnr_classes;
        }
        cls.miou_mean = mean_of(mious);
        std::tie(cls.miou_lo, cls.miou_hi) = bootstrap_ci(
            mious, cfg.resamples, cfg.level, stage_seed(cfg.seed, "bootstrap:" + name + ":miou"));
        miou_acc += cls.miou_mean;
        report.classes.push_back(cls);
    }
    if (cnr_classes > 0) report.avg_cnr = cnr_acc / static_cast<double>(cnr_classes);
    if (!report.classes.empty()) {
        report.avg_miou = miou_acc / static_cast<double>(report.classes.size());
    }
    return report;
}

Heatmap oracle_heatmap(const std::vector<Box>& boxes, std::size_t height, std::size_t width) {
    if (boxes.empty()) throw ValidationError("oracle_heatmap: no boxes");
    if (height < 2 || width < 2) throw ValidationError("oracle_heatmap: image below 2x2");
    Tensor acc = Tensor::zeros({height, width});
    for (const auto& b : boxes) {
        if (!(b.x_min < b.x_max) || !(b.y_min < b.y_max)) {
            throw ValidationError("oracle_heatmap: degenerate box");
        }
        const double mx = (b.x_min + b.x_max) / 2.0;
        const double my = (b.y_min + b.y_max) / 2.0;
        const double sx = (b.x_max - b.x_min) / 3.0;
        const double sy = (b.y_max - b.y_min) / 3.0;
        const double vx = 2.0 * sx * sx, vy = 2.0 * sy * sy;
        for (std::size_t y = 0; y < height; ++y) {
            const double dy = (static_cast<double>(y) + 0.5) - my;
            for (std::size_t x = 0; x < width; ++x) {
                const double dx = (static_cast<double>(x) + 0.5) - mx;
                const float v = static_cast<float>(std::exp(-(dx * dx / vx + dy * dy / vy)));
                acc.at2(y, x) = std::max(acc.at2(y, x), v);
            }
        }
    }
    Heatmap h;
    h.values = min_max_normalize(acc);
    h.provenance = Provenance::Normalized;
    return h;
}

std::string format_report(const EvalReport& report) {
    std::ostringstream os;
    char line[256];
    os << "class                     n      CNR [95% CI]              mIoU [95% CI]\n";
    os << "-------------------------------------------------------------------------\n";
    for (const auto& c : report.classes) {
        std::snprintf(line, sizeof(line), "%-24s %4zu  %7.4f [%7.4f, %7.4f]  %6.4f [%6.4f, %6.4f]",
                      c.class_name.c_str(), c.n, c.cnr_mean, c.cnr_lo, c.cnr_hi, c.miou_mean,
                      c.miou_lo, c.miou_hi);
        os << line;
        if (c.cnr_missing > 0) os << "  (cnr missing: " << c.cnr_missing << ")";
        if (c.cnr_capped > 0) os << "  (cnr capped: " << c.cnr_capped << ")";
        os << "\n";
    }
    os << "-------------------------------------------------------------------------\n";
    std::snprintf(line, sizeof(line), "%-24s %4zu  %7.4f                     %6.4f", "Average",
                  report.records, report.avg_cnr, report.avg_miou);
    os << line << "\n";
    return os.str();
}

}  // namespace gtune::eval
