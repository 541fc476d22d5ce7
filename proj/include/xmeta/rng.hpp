#pragma once

#include <cstdint>
#include <vector>

namespace xmeta {

// Deterministic counter-based generator (splitmix64). The state is a plain
// 64-bit counter advanced by the golden-gamma constant and hashed per draw,
// so equal seeds give equal sequences on every platform and there is no
// hidden distribution state. Gaussians come from Box-Muller (cosine branch,
// two uniforms per draw), bounded draws use rejection sampling.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased uniform integer in [0, n); rejection sampling on the top range.
    uint64_t next_below(uint64_t n);

    // Standard normal via Box-Muller; consumes exactly two uniforms.
    double next_gaussian();

    // Independent substream derived from the current state and a stream tag.
    Rng split(uint64_t stream) const;

    // Fisher-Yates shuffle of indices 0..n-1.
    std::vector<size_t> permutation(size_t n);

  private:
    uint64_t state_;
};

}  // namespace xmeta
