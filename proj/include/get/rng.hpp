#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "get/common.hpp"

namespace get {

// Counter-based splittable generator built on the SplitMix64 finalizer.
// A stream is (key, counter); next() hashes key + counter * golden gamma.
// split() derives an independent key, so seeds fan out over a tree of
// named streams without any shared mutable state.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64() {
        counter_ += 1;
        return mix(key_ + counter_ * kGamma);
    }

    SplitRng split(std::uint64_t stream) const {
        return SplitRng(mix(key_ ^ mix(stream + kGamma)));
    }

    SplitRng split(std::string_view label) const { return split(fnv1a64(label)); }

    // Uniform in [0, 1), 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; two uniforms per draw, no cached spare.
    double gaussian() {
        double u = 1.0 - uniform01();
        double v = uniform01();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * v);
    }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace get
