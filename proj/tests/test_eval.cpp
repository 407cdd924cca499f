#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gtune/errors.hpp"
#include "gtune/eval.hpp"
#include "gtune/rng.hpp"

using namespace gtune;
using namespace gtune::eval;

namespace {

// pattern: inside the 8-pixel left half alternate hi1/hi2, outside lo1/lo2
Heatmap half_split_map(float hi1, float hi2, float lo1, float lo2) {
    Heatmap h;
    h.values = Tensor::zeros({4, 4});
    h.provenance = Provenance::Normalized;
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) {
            const bool inside = x < 2;
            const bool alt = (y * 4 + x) % 2 == 0;
            h.values.at2(y, x) = inside ? (alt ? hi1 : hi2) : (alt ? lo1 : lo2);
        }
    }
    return h;
}

const std::vector<Box> kLeftHalfBox = {{0, 0, 2, 4}};

double brute_force_cnr(const Tensor& values, const std::vector<std::uint8_t>& region) {
    // two-pass reference: means first, then population variances
    double sum_in = 0, sum_out = 0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < region.size(); ++i) {
        if (region[i]) {
            sum_in += values.data[i];
            ++n_in;
        } else {
            sum_out += values.data[i];
            ++n_out;
        }
    }
    const double mu_in = sum_in / n_in, mu_out = sum_out / n_out;
    double var_in = 0, var_out = 0;
    for (std::size_t i = 0; i < region.size(); ++i) {
        const double d = values.data[i] - (region[i] ? mu_in : mu_out);
        (region[i] ? var_in : var_out) += d * d;
    }
    var_in /= n_in;
    var_out /= n_out;
    return (mu_in - mu_out) / std::sqrt(var_in + var_out);
}

double brute_force_otsu(const Tensor& values) {
    // exhaustive 256-candidate search with direct two-group statistics
    double best = -1.0;
    int best_k = 1;
    for (int k = 1; k < 256; ++k) {
        const double edge = static_cast<double>(k) / 256.0;
        double sum0 = 0, sum1 = 0;
        std::size_t n0 = 0, n1 = 0;
        for (float v : values.data) {
            if (v < edge) {
                sum0 += v;
                ++n0;
            } else {
                sum1 += v;
                ++n1;
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        const double mu0 = sum0 / n0, mu1 = sum1 / n1;
        const double between =
            static_cast<double>(n0) * static_cast<double>(n1) * (mu0 - mu1) * (mu0 - mu1);
        if (between > best) {
            best = between;
            best_k = k;
        }
    }
    return static_cast<double>(best_k) / 256.0;
}

double brute_force_iou(const Tensor& values, const std::vector<std::uint8_t>& region,
                       double thr) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < region.size(); ++i) {
        const bool on = values.data[i] >= thr;
        inter += (on && region[i]) ? 1 : 0;
        uni += (on || region[i]) ? 1 : 0;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("cnr closed form: half 0.7/0.9 inside vs 0.1/0.3 outside") {
    const Heatmap h = half_split_map(0.7f, 0.9f, 0.1f, 0.3f);
    // mu_in 0.8, mu_out 0.2, sigma 0.1 each: 0.6 / sqrt(0.02)
    CHECK(cnr(h, kLeftHalfBox) == doctest::Approx(0.6 / std::sqrt(0.02)).epsilon(1e-6));
}

TEST_CASE("cnr of identical distributions is zero") {
    const Heatmap h = half_split_map(0.3f, 0.7f, 0.3f, 0.7f);
    CHECK(cnr(h, kLeftHalfBox) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("cnr rejects empty or full regions, caps vanishing denominators") {
    const Heatmap h = half_split_map(0.7f, 0.9f, 0.1f, 0.3f);
    CHECK_THROWS_AS(cnr(h, {{0, 0, 4, 4}}), ValidationError);  // full image

    // binary map: zero variance on both sides engages the cap
    Heatmap binary;
    binary.values = Tensor::zeros({4, 4});
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 2; ++x) binary.values.at2(y, x) = 1.0f;
    }
    const CnrResult r = cnr_region(binary.values, box_mask(kLeftHalfBox, 4, 4));
    CHECK(r.capped);
    CHECK(r.value == 100.0);
}

TEST_CASE("cnr matches the brute-force two-pass reference on random maps") {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = 8 + rng.index(25), w = 8 + rng.index(25);
        Tensor values = Tensor::zeros({h, w});
        for (auto& v : values.data) v = static_cast<float>(rng.uniform());
        const double x0 = rng.index(w - 4), y0 = rng.index(h - 4);
        const std::vector<Box> boxes = {{x0, y0, x0 + 2 + static_cast<double>(rng.index(2)),
                                         y0 + 2 + static_cast<double>(rng.index(2))}};
        const auto region = box_mask(boxes, h, w);
        const CnrResult got = cnr_region(values, region);
        CHECK(std::abs(got.value - brute_force_cnr(values, region)) <= 1e-9);
    }
}

TEST_CASE("cnr is invariant under positive affine rescaling") {
    Rng rng(42);
    Tensor values = Tensor::zeros({12, 12});
    for (auto& v : values.data) v = static_cast<float>(rng.uniform());
    const auto region = box_mask({{2, 3, 8, 9}}, 12, 12);
    const double base = cnr_region(values, region).value;
    Tensor scaled = values;
    for (auto& v : scaled.data) v = 1.7f * v + 0.4f;
    CHECK(cnr_region(scaled, region).value == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("miou closed forms") {
    // heatmap equal to the box indicator: IoU 1 at every threshold
    Heatmap ind;
    ind.values = Tensor::zeros({4, 4});
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 2; ++x) ind.values.at2(y, x) = 1.0f;
    }
    CHECK(miou(ind, kLeftHalfBox) == doctest::Approx(1.0));

    // heatmap disjoint from the box at all thresholds
    Heatmap disjoint;
    disjoint.values = Tensor::zeros({4, 4});
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 2; x < 4; ++x) disjoint.values.at2(y, x) = 1.0f;
    }
    CHECK(miou(disjoint, kLeftHalfBox) == doctest::Approx(0.0));

    // half overlap at one threshold: IoU 1/3
    Heatmap shifted;
    shifted.values = Tensor::zeros({4, 8});
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 2; x < 6; ++x) shifted.values.at2(y, x) = 1.0f;
    }
    // box covers columns 0..3, heat covers 2..5: inter 8, union 24
    CHECK(miou(shifted, {{0, 0, 4, 4}}, {0.5}) == doctest::Approx(1.0 / 3.0));

    // interval arithmetic against the set oracle on random maps
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor values = Tensor::zeros({10, 10});
        for (auto& v : values.data) v = static_cast<float>(rng.uniform());
        const std::vector<Box> boxes = {{1, 1, 6, 5}, {4, 4, 9, 9}};
        Heatmap h;
        h.values = values;
        const std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5};
        double expect = 0.0;
        for (double t : thresholds) {
            expect += brute_force_iou(values, box_mask(boxes, 10, 10), t);
        }
        expect /= thresholds.size();
        CHECK(std::abs(miou(h, boxes, thresholds) - expect) <= 1e-9);
    }
}

TEST_CASE("miou is monotone as the binarized set approaches the box") {
    // growing the hot region toward exactly the box set raises IoU
    std::vector<double> ious;
    for (std::size_t cols = 1; cols <= 2; ++cols) {
        Heatmap h;
        h.values = Tensor::zeros({4, 4});
        for (std::size_t y = 0; y < 4; ++y) {
            for (std::size_t x = 0; x < cols; ++x) h.values.at2(y, x) = 1.0f;
        }
        ious.push_back(miou(h, kLeftHalfBox, {0.5}));
    }
    CHECK(ious[0] < ious[1]);
    CHECK(ious[1] == doctest::Approx(1.0));
}

TEST_CASE("otsu separates bimodal data and matches the exhaustive oracle") {
    Tensor half;
    half = Tensor::zeros({4, 4});
    for (std::size_t i = 0; i < 8; ++i) half.data[i] = 0.1f;
    for (std::size_t i = 8; i < 16; ++i) half.data[i] = 0.9f;
    const double thr = otsu_threshold(half);
    CHECK(thr > 0.1);
    CHECK(thr < 0.9);

    Tensor binary = Tensor::zeros({2, 2});
    binary.data = {0.0f, 1.0f, 0.0f, 1.0f};
    CHECK(otsu_threshold(binary) == doctest::Approx(1.0 / 256.0));

    CHECK_THROWS_AS(otsu_threshold(Tensor::full({3, 3}, 0.5f)), ValidationError);

    Rng rng(44);
    for (int trial = 0; trial < 60; ++trial) {
        Tensor values = Tensor::zeros({16, 16});
        for (auto& v : values.data) {
            const bool hi = rng.uniform() < 0.4;
            v = static_cast<float>(std::clamp(
                hi ? 0.75 + 0.1 * rng.normal() : 0.2 + 0.08 * rng.normal(), 0.0, 1.0));
        }
        CHECK(otsu_threshold(values) == doctest::Approx(brute_force_otsu(values)).epsilon(1e-12));
    }
}

TEST_CASE("postprocess: constant map, squares, padding, and peak mapping") {
    // constant raw map: min == max rule gives all zeros
    const Heatmap flat = postprocess(Tensor::full({8, 8}, 0.7f), 32, 32, false);
    for (float v : flat.values.data) CHECK(v == 0.0f);

    // square image: no padding, min 0 max 1
    Rng rng(45);
    Tensor raw = Tensor::zeros({8, 8});
    for (auto& v : raw.data) v = static_cast<float>(rng.uniform());
    const Heatmap sq = postprocess(raw, 64, 64, false);
    const float mn = *std::min_element(sq.values.data.begin(), sq.values.data.end());
    const float mx = *std::max_element(sq.values.data.begin(), sq.values.data.end());
    CHECK(mn == 0.0f);
    CHECK(mx == 1.0f);

    // delta at cell (8, 8) of a 16x16 map into a (512, 640) image: the peak
    // lands at the half-pixel mapping of the source center, then shifts by
    // the left pad. coordinate oracle: (8 + 0.5) * 32 - 0.5 = 271.5.
    Tensor delta = Tensor::zeros({16, 16});
    delta.at2(8, 8) = 1.0f;
    const Heatmap up = postprocess(delta, 512, 640, false);
    std::size_t best = 0;
    for (std::size_t i = 1; i < up.values.numel(); ++i) {
        if (up.values.data[i] > up.values.data[best]) best = i;
    }
    const double peak_y = static_cast<double>(best / 640);
    const double peak_x = static_cast<double>(best % 640);
    CHECK(std::abs(peak_y - 271.5) <= 1.0);
    CHECK(std::abs(peak_x - (271.5 + 64.0)) <= 1.0);

    CHECK_THROWS_AS(postprocess(raw, 1, 64, false), ValidationError);
    CHECK_THROWS_AS(postprocess(Tensor::zeros({3, 4}), 64, 64, false), ValidationError);
}

TEST_CASE("postprocess keeps a smooth map's argmax within one source cell") {
    // heatmap-like inputs: unimodal rasters (pure noise can legitimately move
    // its argmax between near-ties under bilinear resampling)
    Rng rng(46);
    for (int trial = 0; trial < 25; ++trial) {
        Tensor raw = Tensor::zeros({16, 16});
        const double mx = 3.0 + 10.0 * rng.uniform();
        const double my = 3.0 + 10.0 * rng.uniform();
        const double s = 1.5 + 2.0 * rng.uniform();
        for (std::size_t y = 0; y < 16; ++y) {
            for (std::size_t x = 0; x < 16; ++x) {
                const double dx = (x + 0.5) - mx, dy = (y + 0.5) - my;
                raw.at2(y, x) = static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2 * s * s)));
            }
        }
        std::size_t src_best = 0;
        for (std::size_t i = 1; i < raw.numel(); ++i) {
            if (raw.data[i] > raw.data[src_best]) src_best = i;
        }
        const double sy = static_cast<double>(src_best / 16);
        const double sx = static_cast<double>(src_best % 16);

        const std::size_t H = 96, W = 128;
        const Heatmap up = postprocess(raw, H, W, false);
        std::size_t best = 0;
        for (std::size_t i = 1; i < up.values.numel(); ++i) {
            if (up.values.data[i] > up.values.data[best]) best = i;
        }
        const double cell = 96.0 / 16.0;  // min-dimension scale, pad_left = 16
        const double by = (static_cast<double>(best / W) + 0.5) / cell - 0.5;
        const double bx = (static_cast<double>(best % W) - 16.0 + 0.5) / cell - 0.5;
        CHECK(std::abs(by - sy) <= 1.0 + 1e-9);
        CHECK(std::abs(bx - sx) <= 1.0 + 1e-9);
    }
}

TEST_CASE("otsu postprocess removes background but keeps foreground values") {
    Tensor raw = Tensor::zeros({8, 8});
    for (std::size_t i = 0; i < raw.numel(); ++i) {
        raw.data[i] = i % 3 == 0 ? 0.9f : 0.05f;
    }
    const Heatmap h = postprocess(raw, 64, 64, true);
    CHECK(h.provenance == Provenance::Otsu);
    std::size_t zeros = 0, kept = 0;
    for (float v : h.values.data) {
        if (v == 0.0f) {
            ++zeros;
        } else {
            ++kept;
            CHECK(v > 0.1f);  // retained foreground keeps its value
        }
    }
    CHECK(zeros > 0);
    CHECK(kept > 0);
}

TEST_CASE("bootstrap_ci determinism, degenerate inputs, and bracketing") {
    CHECK(bootstrap_ci({3.5}, 1000, 0.95, 1) == std::pair<double, double>{3.5, 3.5});
    CHECK(bootstrap_ci({2.0, 2.0, 2.0}, 1000, 0.95, 1) == std::pair<double, double>{2.0, 2.0});

    const std::vector<double> values = {0.3, 1.2, 0.9, 2.4, 1.1, 0.2, 1.7};
    const auto a = bootstrap_ci(values, 10000, 0.95, 7);
    const auto b = bootstrap_ci(values, 10000, 0.95, 7);
    CHECK(a == b);  // bitwise reproducible
    const auto c = bootstrap_ci(values, 10000, 0.95, 8);
    CHECK(a != c);

    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> xs;
        const std::size_t n = 3 + rng.index(20);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            xs.push_back(rng.uniform() * 10.0);
            mean += xs.back();
        }
        mean /= static_cast<double>(n);
        for (double level : {0.5, 0.8, 0.95}) {
            const auto [lo, hi] = bootstrap_ci(xs, 2000, level, trial);
            CHECK(lo <= mean + 1e-12);
            CHECK(hi >= mean - 1e-12);
        }
    }

    CHECK_THROWS_AS(bootstrap_ci({}, 100, 0.95, 0), ValidationError);
}

TEST_CASE("evaluate: hand-built two-class fixture, exact values") {
    // every record in a class shares the same metric value, so the bootstrap
    // interval collapses and the report is exact by hand arithmetic
    std::vector<EvalRecord> records;
    for (int i = 0; i < 2; ++i) {
        EvalRecord r;
        r.image_id = "a" + std::to_string(i);
        r.class_name = "Pneumonia";
        r.boxes = {{0, 0, 2, 4}};
        r.height = 4;
        r.width = 4;
        r.heatmap = half_split_map(0.7f, 0.9f, 0.1f, 0.3f);
        records.push_back(r);
    }
    for (int i = 0; i < 2; ++i) {
        EvalRecord r;
        r.image_id = "b" + std::to_string(i);
        r.class_name = "Edema";
        r.boxes = {{0, 0, 2, 4}};
        r.height = 4;
        r.width = 4;
        r.heatmap = half_split_map(0.6f, 0.8f, 0.2f, 0.4f);
        records.push_back(r);
    }

    EvalConfig cfg;
    cfg.resamples = 500;
    const EvalReport report = evaluate(records, cfg);
    REQUIRE(report.classes.size() == 2);
    CHECK(report.records == 4);

    const ClassReport& edema = report.classes[0];  // classes sort by name
    CHECK(edema.class_name == "Edema");
    CHECK(edema.n == 2);
    const double cnr_edema = 0.4 / std::sqrt(0.02);
    CHECK(edema.cnr_mean == doctest::Approx(cnr_edema).epsilon(1e-6));
    CHECK(edema.cnr_lo == doctest::Approx(cnr_edema).epsilon(1e-6));
    CHECK(edema.cnr_hi == doctest::Approx(cnr_edema).epsilon(1e-6));
    // thresholds 0.1..0.5 on the 0.6/0.8 vs 0.2/0.4 map:
    // t=.1,.2: all 16 on -> 0.5; t=.3,.4: 12 on -> 8/12; t=.5: box only -> 1
    const double miou_edema = (0.5 + 0.5 + 8.0 / 12.0 + 8.0 / 12.0 + 1.0) / 5.0;
    CHECK(edema.miou_mean == doctest::Approx(miou_edema).epsilon(1e-9));

    const ClassReport& pneumonia = report.classes[1];
    const double cnr_pneu = 0.6 / std::sqrt(0.02);
    CHECK(pneumonia.cnr_mean == doctest::Approx(cnr_pneu).epsilon(1e-6));
    // t=.1: 16 on -> .5; t=.2,.3: 12 -> 8/12; t=.4,.5: 8 -> 1
    const double miou_pneu = (0.5 + 8.0 / 12.0 + 8.0 / 12.0 + 1.0 + 1.0) / 5.0;
    CHECK(pneumonia.miou_mean == doctest::Approx(miou_pneu).epsilon(1e-9));

    CHECK(report.avg_cnr == doctest::Approx((cnr_edema + cnr_pneu) / 2.0).epsilon(1e-6));
    CHECK(report.avg_miou == doctest::Approx((miou_edema + miou_pneu) / 2.0).epsilon(1e-9));

    // empty stream: empty report
    const EvalReport empty = evaluate({}, cfg);
    CHECK(empty.classes.empty());

    // worker pool: identical result with 4 threads
    EvalConfig par = cfg;
    par.workers = 4;
    const EvalReport threaded = evaluate(records, par);
    CHECK(threaded.classes[0].cnr_mean == report.classes[0].cnr_mean);
    CHECK(threaded.classes[1].miou_mean == report.classes[1].miou_mean);
}

TEST_CASE("evaluate reports constant heatmaps as missing CNR") {
    EvalRecord r;
    r.image_id = "flat";
    r.class_name = "Edema";
    r.boxes = {{0, 0, 2, 4}};
    r.height = 4;
    r.width = 4;
    r.heatmap.values = Tensor::zeros({4, 4});
    const EvalReport report = evaluate({r}, EvalConfig{});
    REQUIRE(report.classes.size() == 1);
    CHECK(report.classes[0].cnr_missing == 1);
    CHECK(report.classes[0].miou_mean == doctest::Approx(0.0));
    CHECK_FALSE(report.warnings.empty());
}

TEST_CASE("oracle_heatmap: App-C parameters and argmax inside the box") {
    // box (100,100,400,400): mu 250, sigma 100 -> value at mu +- sigma
    const Heatmap h = oracle_heatmap({{100, 100, 400, 400}}, 512, 512);
    std::size_t best = 0;
    for (std::size_t i = 1; i < h.values.numel(); ++i) {
        if (h.values.data[i] > h.values.data[best]) best = i;
    }
    const double by = static_cast<double>(best / 512), bx = static_cast<double>(best % 512);
    CHECK(bx >= 100);
    CHECK(bx < 400);
    CHECK(by >= 100);
    CHECK(by < 400);
    CHECK(std::abs(bx - 249.5) <= 1.0);
    // sigma = extent / 3: value one sigma away ~ exp(-0.5)
    CHECK(h.values.at2(249, 249 + 100) == doctest::Approx(std::exp(-0.5)).epsilon(0.01));

    // centered box at 25% area: CNR clears 1
    const Heatmap q = oracle_heatmap({{128, 128, 384, 384}}, 512, 512);
    CHECK(cnr(q, {{128, 128, 384, 384}}) > 1.0);
}

TEST_SUITE_END();
