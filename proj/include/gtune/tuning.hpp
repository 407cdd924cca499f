#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtune/attention.hpp"
#include "gtune/autodiff.hpp"
#include "gtune/codebook.hpp"
#include "gtune/tensor.hpp"

namespace gtune::tuning {

struct TuneConfig {
    double alpha = 0.1;      // weight of the Gaussian regularizer in the target
    double eps_mask = 1e-5;  // mask threshold on the Gaussian grid
    double lr = 1e-4;
    int steps = 200;
    int batch_size = 1;
    std::string optimizer = "sgd";  // or "adam"
    bool div_loss = true;
    bool alpha_inside_mask_only = false;  // restrict the alpha*T term to the mask
    std::uint64_t seed = 0;

    void validate() const;
};

// Mean squared cosine over distinct token pairs and (t, l); 0 for a single
// token. Slices are l2-normalized across the feature axis first.
ad::NodePtr loss_div(const attn::ForwardResult& fr);

// Same loss over explicit per-(t,l) slice vectors (one inner vector per
// token). Test oracles feed leaf tensors through this form.
ad::NodePtr loss_div_pairs(const std::vector<std::vector<ad::NodePtr>>& per_tl_slices);

// Supervision target mask(grid > eps) * sg(a_sp) + alpha * grid, elementwise
// with the grid broadcast over leading axes. Plain data: carries no gradient.
Tensor build_target(const Tensor& a_sp, const Tensor& grid, const TuneConfig& cfg);

// The alpha * grid term as used by both build_target and the loss graph.
Tensor alpha_term(const Tensor& grid, const TuneConfig& cfg);

// Mean over (t, l) of 1 - cos between the flattened spatial map and target,
// both l2-normalized.
ad::NodePtr loss_loc_terms(const std::vector<ad::NodePtr>& a_sp,
                           const std::vector<ad::NodePtr>& trg);

// Per-(t,l) spatial means and their stop-gradient targets. Exposed so the
// target's gradient-deadness can be checked against literal substitution.
struct LocTerms {
    std::vector<ad::NodePtr> maps;
    std::vector<ad::NodePtr> targets;
};
LocTerms build_loc_terms(const attn::ForwardResult& fr, const Tensor& grid,
                         const TuneConfig& cfg);

// Builds per-(t,l) targets from the forward pass and a rendered grid.
ad::NodePtr loss_loc(const attn::ForwardResult& fr, const Tensor& grid, const TuneConfig& cfg);

struct LossParts {
    ad::NodePtr total;
    ad::NodePtr div;  // null when the diversity term is disabled
    ad::NodePtr loc;

    double div_value() const { return div ? div->value.data[0] : 0.0; }
    double loc_value() const { return loc->value.data[0]; }
};

LossParts total_loss(const attn::ForwardResult& fr, const Tensor& grid, const TuneConfig& cfg);

struct TuneSample {
    std::string image_id;
    std::string prompt;
    Tensor grid;  // rendered Gaussian target at side x side
};

struct TraceRow {
    int step = 0;
    double loss_div = 0.0;
    double loss_loc = 0.0;
};

struct TuneResult {
    Codebook codebook;
    std::vector<TraceRow> trace;  // rows 0..steps-1 pre-update, final row at `steps`
};

// Batch-1 gradient steps on the trainable rows only; frozen rows stay
// bitwise identical. Deterministic given the seed and sample order.
TuneResult optimize(const std::vector<TuneSample>& samples, Codebook codebook,
                    const attn::ToyBackend& backend, const TuneConfig& cfg);

}  // namespace gtune::tuning
