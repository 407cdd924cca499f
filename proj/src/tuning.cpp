#include "gtune/tuning.hpp"

#include <cmath>

#include "gtune/atlas.hpp"
#include "gtune/errors.hpp"

namespace gtune::tuning {

void TuneConfig::validate() const {
    if (alpha < 0) throw ValidationError("tune: alpha must be >= 0");
    if (!(eps_mask > 0)) throw ValidationError("tune: eps_mask must be > 0");
    if (!(lr > 0)) throw ValidationError("tune: lr must be > 0");
    if (steps < 0) throw ValidationError("tune: steps must be >= 0");
    if (batch_size != 1) throw ValidationError("tune: only batch size 1 is supported");
    if (optimizer != "sgd" && optimizer != "adam") {
        throw ValidationError("tune: optimizer must be 'sgd' or 'adam'");
    }
}

ad::NodePtr loss_div_pairs(const std::vector<std::vector<ad::NodePtr>>& per_tl_slices) {
    std::vector<ad::NodePtr> squares;
    for (const auto& slices : per_tl_slices) {
        for (std::size_t i = 0; i < slices.size(); ++i) {
            for (std::size_t j = i + 1; j < slices.size(); ++j) {
                // ordered pairs average equals the unordered one by symmetry
                ad::NodePtr c = ad::cosine(slices[i], slices[j]);
                squares.push_back(ad::mul(c, c));
            }
        }
    }
    if (squares.empty()) return ad::constant(Tensor::scalar(0.0f));
    return ad::mean_of(std::move(squares));
}

ad::NodePtr loss_div(const attn::ForwardResult& fr) {
    std::vector<std::size_t> kept;
    for (std::size_t s = 0; s < fr.special.size(); ++s) {
        if (!fr.special[s]) kept.push_back(s);
    }
    if (kept.empty()) throw DataError("loss_div: all tokens are special");
    if (kept.size() == 1) return ad::constant(Tensor::scalar(0.0f));

    std::vector<std::vector<ad::NodePtr>> per_tl;
    for (std::size_t t = 0; t < fr.dims.timesteps; ++t) {
        for (std::size_t l = 0; l < fr.dims.layers; ++l) {
            std::vector<ad::NodePtr> slices;
            for (std::size_t s : kept) {
                slices.push_back(ad::l2_normalize(fr.token_slice(t, l, s), 0));
            }
            per_tl.push_back(std::move(slices));
        }
    }
    return loss_div_pairs(per_tl);
}

Tensor alpha_term(const Tensor& grid, const TuneConfig& cfg) {
    const float alpha = static_cast<float>(cfg.alpha);
    Tensor out = Tensor::zeros(grid.shape);
    for (std::size_t i = 0; i < grid.numel(); ++i) {
        const float keep =
            cfg.alpha_inside_mask_only && !(grid.data[i] > cfg.eps_mask) ? 0.0f : 1.0f;
        out.data[i] = grid.data[i] * alpha * keep;
    }
    return out;
}

Tensor build_target(const Tensor& a_sp, const Tensor& grid, const TuneConfig& cfg) {
    const std::size_t plane = grid.numel();
    if (plane == 0 || a_sp.numel() % plane != 0) {
        throw ValidationError("build_target: spatial map " + a_sp.shape_str() +
                              " does not broadcast with grid " + grid.shape_str());
    }
    const Tensor mask = atlas::gaussian_mask(grid, cfg.eps_mask);
    const Tensor reg = alpha_term(grid, cfg);
    Tensor out = Tensor::zeros(a_sp.shape);
    for (std::size_t p = 0; p < a_sp.numel() / plane; ++p) {
        for (std::size_t i = 0; i < plane; ++i) {
            // same float expression as the graph route, so the two agree bitwise
            const float masked = mask.data[i] * a_sp.data[p * plane + i];
            out.data[p * plane + i] = masked + reg.data[i];
        }
    }
    return out;
}

ad::NodePtr loss_loc_terms(const std::vector<ad::NodePtr>& a_sp,
                           const std::vector<ad::NodePtr>& trg) {
    if (a_sp.empty() || a_sp.size() != trg.size()) {
        throw ValidationError("loss_loc: mismatched per-(t,l) term lists");
    }
    const ad::NodePtr one = ad::constant(Tensor::scalar(1.0f));
    std::vector<ad::NodePtr> terms;
    for (std::size_t i = 0; i < a_sp.size(); ++i) {
        ad::NodePtr c = ad::cosine(ad::l2_normalize(a_sp[i], 0), ad::l2_normalize(trg[i], 0));
        terms.push_back(ad::add(one, ad::scale(c, -1.0f)));
    }
    return ad::mean_of(std::move(terms));
}

LocTerms build_loc_terms(const attn::ForwardResult& fr, const Tensor& grid,
                         const TuneConfig& cfg) {
    const std::size_t side = fr.dims.side();
    if (grid.shape != std::vector<std::size_t>{side, side}) {
        throw ValidationError("loss_loc: grid " + grid.shape_str() + " does not match " +
                              std::to_string(side) + "x" + std::to_string(side));
    }
    Tensor mask = atlas::gaussian_mask(grid, cfg.eps_mask);
    mask.shape = {grid.numel()};
    Tensor reg = alpha_term(grid, cfg);
    reg.shape = {grid.numel()};
    const ad::NodePtr mask_node = ad::constant(std::move(mask));
    const ad::NodePtr reg_node = ad::constant(std::move(reg));

    LocTerms terms;
    for (std::size_t t = 0; t < fr.dims.timesteps; ++t) {
        for (std::size_t l = 0; l < fr.dims.layers; ++l) {
            ad::NodePtr a_sp = fr.spatial_mean(t, l);
            terms.targets.push_back(
                ad::add(ad::mul(mask_node, ad::stop_gradient(a_sp)), reg_node));
            terms.maps.push_back(std::move(a_sp));
        }
    }
    return terms;
}

ad::NodePtr loss_loc(const attn::ForwardResult& fr, const Tensor& grid, const TuneConfig& cfg) {
    const LocTerms terms = build_loc_terms(fr, grid, cfg);
    return loss_loc_terms(terms.maps, terms.targets);
}

LossParts total_loss(const attn::ForwardResult& fr, const Tensor& grid, const TuneConfig& cfg) {
    LossParts parts;
    parts.loc = loss_loc(fr, grid, cfg);
    if (cfg.div_loss) {
        parts.div = loss_div(fr);
        parts.total = ad::add(parts.div, parts.loc);
    } else {
        parts.total = parts.loc;
    }
    return parts;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    int t = 0;
};

void apply_update(Codebook& cb, const Tensor& grad, const TuneConfig& cfg, AdamState& adam) {
    const std::size_t dim = cb.dim();
    if (cfg.optimizer == "sgd") {
        const float lr = static_cast<float>(cfg.lr);
        for (std::size_t r = 0; r < cb.size(); ++r) {
            if (!cb.trainable[r]) continue;
            for (std::size_t i = 0; i < dim; ++i) {
                cb.embeddings.data[r * dim + i] -= lr * grad.data[r * dim + i];
            }
        }
        return;
    }
    // adam, bias-corrected
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (adam.m.empty()) {
        adam.m.assign(grad.numel(), 0.0);
        adam.v.assign(grad.numel(), 0.0);
    }
    ++adam.t;
    const double c1 = 1.0 - std::pow(beta1, adam.t);
    const double c2 = 1.0 - std::pow(beta2, adam.t);
    for (std::size_t r = 0; r < cb.size(); ++r) {
        if (!cb.trainable[r]) continue;
        for (std::size_t i = 0; i < dim; ++i) {
            const std::size_t k = r * dim + i;
            const double g = grad.data[k];
            adam.m[k] = beta1 * adam.m[k] + (1.0 - beta1) * g;
            adam.v[k] = beta2 * adam.v[k] + (1.0 - beta2) * g * g;
            const double mh = adam.m[k] / c1;
            const double vh = adam.v[k] / c2;
            cb.embeddings.data[k] -=
                static_cast<float>(cfg.lr * mh / (std::sqrt(vh) + eps));
        }
    }
}

}  // namespace

TuneResult optimize(const std::vector<TuneSample>& samples, Codebook codebook,
                    const attn::ToyBackend& backend, const TuneConfig& cfg) {
    cfg.validate();
    codebook.validate();
    if (samples.empty()) throw ValidationError("optimize: no samples");

    const std::size_t side = backend.config().dims.side();
    for (const auto& s : samples) {
        if (s.grid.shape != std::vector<std::size_t>{side, side}) {
            throw ValidationError("optimize: sample '" + s.image_id + "' grid " +
                                  s.grid.shape_str() + " does not match the backend");
        }
    }

    TuneResult result;
    AdamState adam;
    for (int step = 0; step <= cfg.steps; ++step) {
        const TuneSample& sample = samples[step % samples.size()];
        attn::ForwardResult fr =
            backend.forward_prompt(codebook, sample.prompt, sample.image_id);
        LossParts parts = total_loss(fr, sample.grid, cfg);
        result.trace.push_back({step, parts.div_value(), parts.loc_value()});
        if (step == cfg.steps) break;  // final row records the post-run loss

        ad::backward(parts.total);
        if (!fr.codebook_leaf->grad) continue;  // nothing trainable in this prompt
        Tensor& grad = *fr.codebook_leaf->grad;
        // frozen rows receive no gradient
        const std::size_t dim = codebook.dim();
        for (std::size_t r = 0; r < codebook.size(); ++r) {
            if (codebook.trainable[r]) continue;
            for (std::size_t i = 0; i < dim; ++i) grad.data[r * dim + i] = 0.0f;
        }
        apply_update(codebook, grad, cfg, adam);
    }
    result.codebook = std::move(codebook);
    return result;
}

}  // namespace gtune::tuning
