#include "xmeta/rng.hpp"

#include <cmath>
#include <numbers>

namespace xmeta {

uint64_t Rng::next_below(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double Rng::next_gaussian() {
    const double u1 = next_double();
    const double u2 = next_double();
    // 1 - u1 lies in (0, 1], so the log is finite.
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(uint64_t stream) const {
    // Hash (state, stream) into a fresh seed so substreams never overlap the
    // parent sequence in practice.
    uint64_t z = state_ ^ (0x9E3779B97F4A7C15ull * (stream + 0x632BE59BD9B4E019ull));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
}

std::vector<size_t> Rng::permutation(size_t n) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = n; i > 1; --i) {
        const size_t j = static_cast<size_t>(next_below(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace xmeta
