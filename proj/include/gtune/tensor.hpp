#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gtune {

// Dense row-major float32 tensor. Rank 0 is a scalar (numel 1). Reductions
// that consume tensors accumulate in double; storage stays 32-bit.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, float value);
    static Tensor scalar(float value);
    static Tensor from(std::vector<std::size_t> shape, std::vector<float> values);

    std::size_t numel() const;
    std::size_t rank() const { return shape.size(); }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // rank-2 accessors
    std::size_t rows() const;
    std::size_t cols() const;
    float& at2(std::size_t r, std::size_t c);
    float at2(std::size_t r, std::size_t c) const;

    bool all_finite() const;
    void require_finite(const std::string& what) const;
    std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

// Binary tensor file: 8-byte magic "GTTENSR1", u32 rank, rank x u32 extents,
// then little-endian f32 payload, row-major.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

}  // namespace gtune
