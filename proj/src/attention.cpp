#include "gtune/attention.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gtune/errors.hpp"
#include "gtune/rng.hpp"

namespace gtune::attn {

namespace {
using json = nlohmann::ordered_json;
}

SoftmaxAxis softmax_axis_from_string(const std::string& s) {
    if (s == "tokens") return SoftmaxAxis::Tokens;
    if (s == "spatial") return SoftmaxAxis::Spatial;
    throw ValidationError("softmax axis must be 'tokens' or 'spatial', got '" + s + "'");
}

std::string to_string(SoftmaxAxis axis) {
    return axis == SoftmaxAxis::Tokens ? "tokens" : "spatial";
}

std::size_t StackDims::side() const {
    const auto s = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(features))));
    if (s * s != features) {
        throw ValidationError("feature count " + std::to_string(features) +
                              " is not a perfect square");
    }
    return s;
}

float AttentionStack::at(std::size_t t, std::size_t l, std::size_t d, std::size_t s) const {
    return a.data[((t * dims.layers + l) * dims.features + d) * dims.tokens + s];
}

void AttentionStack::validate(double tol) const {
    const std::vector<std::size_t> want = {dims.timesteps, dims.layers, dims.features,
                                           dims.tokens};
    if (a.shape != want) throw DataError("attention stack shape mismatch: " + a.shape_str());
    if (special.size() != dims.tokens) throw DataError("special mask length mismatch");
    dims.side();
    a.require_finite("attention stack");
    for (std::size_t t = 0; t < dims.timesteps; ++t) {
        for (std::size_t l = 0; l < dims.layers; ++l) {
            if (axis == SoftmaxAxis::Tokens) {
                for (std::size_t d = 0; d < dims.features; ++d) {
                    double sum = 0.0;
                    for (std::size_t s = 0; s < dims.tokens; ++s) sum += at(t, l, d, s);
                    if (std::abs(sum - 1.0) > tol) {
                        throw DataError("stack not normalized over tokens at (t=" +
                                        std::to_string(t) + ", l=" + std::to_string(l) +
                                        ", d=" + std::to_string(d) + ")");
                    }
                }
            } else {
                for (std::size_t s = 0; s < dims.tokens; ++s) {
                    double sum = 0.0;
                    for (std::size_t d = 0; d < dims.features; ++d) sum += at(t, l, d, s);
                    if (std::abs(sum - 1.0) > tol) {
                        throw DataError("stack not normalized over features at (t=" +
                                        std::to_string(t) + ", l=" + std::to_string(l) +
                                        ", s=" + std::to_string(s) + ")");
                    }
                }
            }
        }
    }
}

Tensor spatialize(const AttentionStack& stack) {
    std::size_t kept = 0;
    for (auto m : stack.special) kept += m ? 0 : 1;
    if (kept == 0) throw DataError("spatialize: all tokens are special");
    const std::size_t side = stack.dims.side();
    Tensor out = Tensor::zeros({stack.dims.timesteps, stack.dims.layers, side, side});
    std::size_t idx = 0;
    for (std::size_t t = 0; t < stack.dims.timesteps; ++t) {
        for (std::size_t l = 0; l < stack.dims.layers; ++l) {
            for (std::size_t d = 0; d < stack.dims.features; ++d) {
                double acc = 0.0;
                for (std::size_t s = 0; s < stack.dims.tokens; ++s) {
                    if (!stack.special[s]) acc += stack.at(t, l, d, s);
                }
                out.data[idx++] = static_cast<float>(acc / kept);
            }
        }
    }
    return out;
}

std::vector<Tensor> token_slices(const AttentionStack& stack) {
    std::vector<Tensor> slices;
    for (std::size_t s = 0; s < stack.dims.tokens; ++s) {
        if (stack.special[s]) continue;
        Tensor slice = Tensor::zeros({stack.dims.timesteps, stack.dims.layers,
                                      stack.dims.features});
        std::size_t idx = 0;
        for (std::size_t t = 0; t < stack.dims.timesteps; ++t) {
            for (std::size_t l = 0; l < stack.dims.layers; ++l) {
                for (std::size_t d = 0; d < stack.dims.features; ++d) {
                    slice.data[idx++] = stack.at(t, l, d, s);
                }
            }
        }
        slices.push_back(std::move(slice));
    }
    if (slices.empty()) throw DataError("token_slices: all tokens are special");
    return slices;
}

void save_stack(const AttentionStack& stack, const std::vector<int>& token_ids,
                const std::vector<std::string>& tokens, const std::string& base_path) {
    write_tensor(base_path + ".gtt", stack.a);
    json header;
    header["dims"] = {{"timesteps", stack.dims.timesteps},
                      {"layers", stack.dims.layers},
                      {"features", stack.dims.features},
                      {"tokens", stack.dims.tokens}};
    header["token_ids"] = token_ids;
    header["tokens"] = tokens;
    json mask = json::array();
    for (auto m : stack.special) mask.push_back(m != 0);
    header["special_mask"] = mask;
    header["softmax_axis"] = to_string(stack.axis);
    std::ofstream out(base_path + ".json");
    if (!out) throw ValidationError("cannot open for writing: " + base_path + ".json");
    out << header.dump(2) << "\n";
}

AttentionStack load_stack(const std::string& base_path) {
    std::ifstream in(base_path + ".json");
    if (!in) throw ValidationError("cannot open stack header: " + base_path + ".json");
    json header;
    try {
        in >> header;
    } catch (const json::exception& e) {
        throw DataError("stack header parse error: " + std::string(e.what()));
    }
    AttentionStack stack;
    stack.dims.timesteps = header.at("dims").at("timesteps").get<std::size_t>();
    stack.dims.layers = header.at("dims").at("layers").get<std::size_t>();
    stack.dims.features = header.at("dims").at("features").get<std::size_t>();
    stack.dims.tokens = header.at("dims").at("tokens").get<std::size_t>();
    for (const auto& m : header.at("special_mask")) {
        stack.special.push_back(m.get<bool>() ? 1 : 0);
    }
    stack.axis = softmax_axis_from_string(header.value("softmax_axis", "tokens"));
    stack.a = read_tensor(base_path + ".gtt");
    stack.validate();
    return stack;
}

// ---------------------------------------------------------------------------
// toy backend

ToyBackend::ToyBackend(std::uint64_t seed, ToyBackendConfig cfg)
    : cfg_(cfg), seed_(seed) {
    cfg_.dims.side();
    if (cfg_.key_dim == 0 || cfg_.channels == 0) {
        throw ValidationError("toy backend: key_dim and channels must be positive");
    }
    for (std::size_t l = 0; l < cfg_.dims.layers; ++l) {
        Tensor p = Tensor::zeros({cfg_.channels, cfg_.key_dim});
        Rng rng(stage_seed(seed_, "image-proj:" + std::to_string(l)));
        const float s = 1.0f / std::sqrt(static_cast<float>(cfg_.channels));
        for (auto& v : p.data) v = rng.normalf(s);
        image_proj_.push_back(std::move(p));
    }
}

Tensor ToyBackend::query(std::size_t t, std::size_t l, const std::string& image_id) const {
    const std::size_t d_feat = cfg_.dims.features;
    const std::size_t side = cfg_.dims.side();
    // image latents: one feature vector per spatial position. The leading
    // channels are a fixed low-order spatial basis (smooth, like real image
    // features); the rest are image-specific smooth random fields.
    Tensor latents = Tensor::zeros({d_feat, cfg_.channels});
    // at least one channel stays image-specific so stacks differ per image
    const std::size_t image_channels =
        std::max<std::size_t>(cfg_.channels >= 3 ? 2 : 1,
                              cfg_.channels > 6 ? cfg_.channels - 6 : 1);
    const std::size_t basis_channels = cfg_.channels - std::min(cfg_.channels, image_channels);
    Rng field_rng(stage_seed(seed_, "latents:" + image_id));
    std::vector<std::array<float, 6>> field_coef;
    for (std::size_t c = basis_channels; c < cfg_.channels; ++c) {
        std::array<float, 6> coef{};
        for (auto& v : coef) v = field_rng.normalf(1.0f);
        field_coef.push_back(coef);
    }
    for (std::size_t d = 0; d < d_feat; ++d) {
        const float x = 2.0f * ((d % side) + 0.5f) / side - 1.0f;
        const float y = 2.0f * ((d / side) + 0.5f) / side - 1.0f;
        const float basis[6] = {1.0f, x, y, x * x, y * y, x * y};
        for (std::size_t c = 0; c < cfg_.channels; ++c) {
            if (c < basis_channels) {
                latents.at2(d, c) = basis[c];
            } else {
                const auto& k = field_coef[c - basis_channels];
                latents.at2(d, c) = k[0] + k[1] * x + k[2] * y + k[3] * x * x + k[4] * y * y +
                                    k[5] * x * y;
            }
        }
    }
    const Tensor& proj = image_proj_[l];
    Tensor q = Tensor::zeros({d_feat, cfg_.key_dim});
    for (std::size_t i = 0; i < d_feat; ++i) {
        for (std::size_t j = 0; j < cfg_.key_dim; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cfg_.channels; ++c) {
                acc += static_cast<double>(latents.at2(i, c)) * proj.at2(c, j);
            }
            q.at2(i, j) = static_cast<float>(acc) * cfg_.query_scale;
        }
    }
    // timestep dependence: a fixed perturbation seeded by the diffusion step
    const int step = cfg_.timestep_start + static_cast<int>(t);
    Rng rng(stage_seed(seed_, "q-noise:" + std::to_string(step) + ":" + std::to_string(l)));
    for (auto& v : q.data) v += rng.normalf(cfg_.noise);
    return q;
}

ForwardResult ToyBackend::forward(const Codebook& codebook, const std::vector<int>& token_ids,
                                  const std::string& image_id) const {
    codebook.validate();
    if (token_ids.empty()) throw DataError("forward: empty token sequence");
    if (token_ids.size() > cfg_.dims.tokens) {
        throw DataError("forward: sequence longer than the configured token dimension");
    }
    for (int id : token_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= codebook.size()) {
            throw DataError("forward: unknown token id " + std::to_string(id));
        }
    }

    ForwardResult fr;
    fr.dims = cfg_.dims;
    fr.dims.tokens = token_ids.size();
    fr.axis = cfg_.axis;
    fr.token_ids = token_ids;
    fr.special = codebook.special_mask(token_ids);

    bool any_trainable = false;
    for (auto f : codebook.trainable) any_trainable = any_trainable || f;
    fr.codebook_leaf = ad::leaf(codebook.embeddings, any_trainable);

    // row selection as a constant one-hot matmul, so gradients land on the
    // selected codebook rows only
    const std::size_t seq = token_ids.size();
    Tensor sel = Tensor::zeros({seq, codebook.size()});
    for (std::size_t s = 0; s < seq; ++s) sel.at2(s, token_ids[s]) = 1.0f;
    ad::NodePtr embeddings = ad::matmul(ad::constant(sel), fr.codebook_leaf);

    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(cfg_.key_dim));
    for (std::size_t l = 0; l < cfg_.dims.layers; ++l) {
        Tensor kp = Tensor::zeros({codebook.dim(), cfg_.key_dim});
        Rng rng(stage_seed(seed_, "key-proj:" + std::to_string(l)));
        const float s = 1.0f / std::sqrt(static_cast<float>(codebook.dim()));
        for (auto& v : kp.data) v = rng.normalf(s);
        ad::NodePtr keys = ad::matmul(embeddings, ad::constant(std::move(kp)));  // seq x key_dim

        for (std::size_t t = 0; t < cfg_.dims.timesteps; ++t) {
            ad::NodePtr q = ad::constant(query(t, l, image_id));
            ad::NodePtr logits = cfg_.axis == SoftmaxAxis::Tokens
                                     ? ad::matmul(q, keys, /*transpose_b=*/true)
                                     : ad::matmul(keys, q, /*transpose_b=*/true);
            fr.attention.push_back(ad::softmax_rows(ad::scale(logits, inv_sqrt_d)));
        }
    }
    // reorder from (l, t) build order to (t, l) lookup order
    std::vector<ad::NodePtr> by_tl(fr.attention.size());
    for (std::size_t l = 0; l < cfg_.dims.layers; ++l) {
        for (std::size_t t = 0; t < cfg_.dims.timesteps; ++t) {
            by_tl[t * cfg_.dims.layers + l] = fr.attention[l * cfg_.dims.timesteps + t];
        }
    }
    fr.attention = std::move(by_tl);
    return fr;
}

ForwardResult ToyBackend::forward_prompt(const Codebook& codebook, const std::string& prompt,
                                         const std::string& image_id) const {
    return forward(codebook, codebook.tokenize(prompt, cfg_.dims.tokens), image_id);
}

const ad::NodePtr& ForwardResult::at(std::size_t t, std::size_t l) const {
    return attention.at(t * dims.layers + l);
}

std::size_t ForwardResult::non_special_count() const {
    std::size_t kept = 0;
    for (auto m : special) kept += m ? 0 : 1;
    return kept;
}

ad::NodePtr ForwardResult::token_slice(std::size_t t, std::size_t l,
                                       std::size_t token_index) const {
    Tensor onehot = Tensor::zeros({dims.tokens});
    onehot.data.at(token_index) = 1.0f;
    if (axis == SoftmaxAxis::Tokens) {
        return ad::matmul(at(t, l), ad::constant(std::move(onehot)));
    }
    return ad::matmul(ad::constant(std::move(onehot)), at(t, l));
}

ad::NodePtr ForwardResult::spatial_mean(std::size_t t, std::size_t l) const {
    const std::size_t kept = non_special_count();
    if (kept == 0) throw DataError("spatial_mean: all tokens are special");
    Tensor weights = Tensor::zeros({dims.tokens});
    for (std::size_t s = 0; s < dims.tokens; ++s) {
        if (!special[s]) weights.data[s] = 1.0f / static_cast<float>(kept);
    }
    if (axis == SoftmaxAxis::Tokens) {
        return ad::matmul(at(t, l), ad::constant(std::move(weights)));
    }
    return ad::matmul(ad::constant(std::move(weights)), at(t, l));
}

AttentionStack ForwardResult::to_stack() const {
    AttentionStack stack;
    stack.dims = dims;
    stack.axis = axis;
    stack.special = special;
    stack.a = Tensor::zeros({dims.timesteps, dims.layers, dims.features, dims.tokens});
    for (std::size_t t = 0; t < dims.timesteps; ++t) {
        for (std::size_t l = 0; l < dims.layers; ++l) {
            const Tensor& m = at(t, l)->value;
            for (std::size_t d = 0; d < dims.features; ++d) {
                for (std::size_t s = 0; s < dims.tokens; ++s) {
                    const float v = axis == SoftmaxAxis::Tokens ? m.at2(d, s) : m.at2(s, d);
                    stack.a.data[((t * dims.layers + l) * dims.features + d) * dims.tokens + s] =
                        v;
                }
            }
        }
    }
    return stack;
}

Tensor ForwardResult::mean_heatmap() const {
    const Tensor sp = spatialize(to_stack());
    const std::size_t side = dims.side();
    Tensor out = Tensor::zeros({side, side});
    const std::size_t plane = side * side;
    const std::size_t n = dims.timesteps * dims.layers;
    for (std::size_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (std::size_t tl = 0; tl < n; ++tl) acc += sp.data[tl * plane + i];
        out.data[i] = static_cast<float>(acc / n);
    }
    return out;
}

}  // namespace gtune::attn
