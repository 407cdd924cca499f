#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace gtune {

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull);

// Every random stream is derived from one master seed plus a stage name, so
// stages stay decoupled and reruns are reproducible.
std::uint64_t stage_seed(std::uint64_t master, std::string_view stage);

// mt19937_64 with hand-rolled distributions; std:: distributions are
// implementation-defined and would break cross-platform determinism.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform();                    // [0, 1)
    double normal();                     // Box-Muller, two uniforms per draw
    float normalf(float stddev) { return static_cast<float>(normal() * stddev); }
    std::uint64_t index(std::uint64_t n);  // [0, n), modulo draw

  private:
    std::mt19937_64 gen_;
};

}  // namespace gtune
