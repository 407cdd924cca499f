#include "gtune/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <sstream>

#include "gtune/errors.hpp"

namespace gtune {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    Tensor t;
    t.data.assign(shape_numel(shape), 0.0f);
    t.shape = std::move(shape);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, float value) {
    Tensor t;
    t.data.assign(shape_numel(shape), value);
    t.shape = std::move(shape);
    return t;
}

Tensor Tensor::scalar(float value) {
    Tensor t;
    t.data.assign(1, value);
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<float> values) {
    if (shape_numel(shape) != values.size()) {
        throw ValidationError("tensor: " + std::to_string(values.size()) +
                              " values do not fill shape with " +
                              std::to_string(shape_numel(shape)) + " elements");
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(values);
    return t;
}

std::size_t Tensor::numel() const { return data.size(); }

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ValidationError("tensor: rows() on non-2D tensor " + shape_str());
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ValidationError("tensor: cols() on non-2D tensor " + shape_str());
    return shape[1];
}

float& Tensor::at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
float Tensor::at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw DataError("non-finite values in " + what);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

namespace {

constexpr char kMagic[8] = {'G', 'T', 'T', 'E', 'N', 'S', 'R', '1'};

void put_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    std::fwrite(b, 1, 4, f);
}

std::uint32_t get_u32(std::FILE* f, const std::string& path) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw DataError("truncated tensor file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw ValidationError("cannot open for writing: " + path);
    std::fwrite(kMagic, 1, 8, f.get());
    put_u32(f.get(), static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape) put_u32(f.get(), static_cast<std::uint32_t>(e));
    for (float v : t.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(f.get(), bits);
    }
    if (std::ferror(f.get())) throw ValidationError("write failed: " + path);
}

Tensor read_tensor(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw ValidationError("cannot open tensor file: " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, f.get()) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataError("bad tensor magic in " + path);
    }
    std::uint32_t rank = get_u32(f.get(), path);
    if (rank > 8) throw DataError("implausible tensor rank in " + path);
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = get_u32(f.get(), path);
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data) {
        std::uint32_t bits = get_u32(f.get(), path);
        std::memcpy(&v, &bits, 4);
    }
    // trailing bytes mean the header lied about the shape
    unsigned char extra;
    if (std::fread(&extra, 1, 1, f.get()) == 1) throw DataError("trailing bytes in " + path);
    t.require_finite("tensor file " + path);
    return t;
}

}  // namespace gtune
