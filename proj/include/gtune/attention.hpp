#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtune/autodiff.hpp"
#include "gtune/codebook.hpp"
#include "gtune/tensor.hpp"

namespace gtune::attn {

enum class SoftmaxAxis { Tokens, Spatial };

SoftmaxAxis softmax_axis_from_string(const std::string& s);
std::string to_string(SoftmaxAxis axis);

struct StackDims {
    std::size_t timesteps = 2;  // paper scale: 30
    std::size_t layers = 2;     // paper scale: 4
    std::size_t features = 256; // spatial features, a perfect square
    std::size_t tokens = 16;    // paper scale: 77

    std::size_t side() const;  // sqrt(features), throws if not a perfect square
};

// Rank-4 activation stack a[t][l][d][s] plus the special-token mask. With the
// default orientation every (t, l, d) slice sums to 1 over tokens.
struct AttentionStack {
    Tensor a;  // timesteps x layers x features x tokens
    std::vector<std::uint8_t> special;
    StackDims dims;
    SoftmaxAxis axis = SoftmaxAxis::Tokens;

    float at(std::size_t t, std::size_t l, std::size_t d, std::size_t s) const;
    void validate(double tol = 1e-5) const;  // throws DataError on a bad stack
};

// Mean over non-special tokens, reshaped to timesteps x layers x side x side.
Tensor spatialize(const AttentionStack& stack);

// Per-token timesteps x layers x features tensors, non-special tokens only.
std::vector<Tensor> token_slices(const AttentionStack& stack);

// Stack files: binary tensor plus a sidecar JSON header (<base>.gtt/.json).
void save_stack(const AttentionStack& stack, const std::vector<int>& token_ids,
                const std::vector<std::string>& tokens, const std::string& base_path);
AttentionStack load_stack(const std::string& base_path);

struct ToyBackendConfig {
    StackDims dims;
    std::size_t key_dim = 32;       // d in the scaled dot product
    std::size_t channels = 8;       // image feature channels per spatial position
    float noise = 0.1f;             // magnitude of the per-timestep query perturbation
    float query_scale = 4.0f;       // contrast of the frozen image features
    int timestep_start = 30;        // diffusion steps [30, 30 + timesteps)
    SoftmaxAxis axis = SoftmaxAxis::Tokens;
};

// Differentiable view of one forward pass. Attention matrices are graph nodes
// so the tuning losses can reach the codebook leaf; everything else is frozen.
struct ForwardResult {
    ad::NodePtr codebook_leaf;           // rows x dim
    std::vector<ad::NodePtr> attention;  // per (t, l): features x tokens (or transposed)
    StackDims dims;
    SoftmaxAxis axis = SoftmaxAxis::Tokens;
    std::vector<int> token_ids;
    std::vector<std::uint8_t> special;

    const ad::NodePtr& at(std::size_t t, std::size_t l) const;
    std::size_t non_special_count() const;

    // length-`features` vector nodes
    ad::NodePtr token_slice(std::size_t t, std::size_t l, std::size_t token_index) const;
    ad::NodePtr spatial_mean(std::size_t t, std::size_t l) const;

    AttentionStack to_stack() const;
    Tensor mean_heatmap() const;  // spatialized map averaged over (t, l), side x side
};

// Frozen toy attention source: fixed random projections, per-image latents,
// per-timestep query perturbations. Deterministic given (seed, image, codebook).
class ToyBackend {
  public:
    ToyBackend(std::uint64_t seed, ToyBackendConfig cfg);

    const ToyBackendConfig& config() const { return cfg_; }

    ForwardResult forward(const Codebook& codebook, const std::vector<int>& token_ids,
                          const std::string& image_id) const;

    ForwardResult forward_prompt(const Codebook& codebook, const std::string& prompt,
                                 const std::string& image_id) const;

  private:
    Tensor query(std::size_t t, std::size_t l, const std::string& image_id) const;

    ToyBackendConfig cfg_;
    std::uint64_t seed_;
    std::vector<Tensor> image_proj_;  // per layer: channels x key_dim
};

}  // namespace gtune::attn
